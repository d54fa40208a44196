// Command line front end: track, learn-weights, ablate, eval, synth and
// baseline-hm.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nomt/nomt.hpp"

namespace fs = std::filesystem;
using namespace nomt;

namespace {

/// Where a sequence comes from: a bundle directory or loose files.
struct SequenceArgs {
  std::string bundle;
  std::string dets;
  std::string gt;
  std::string ipts;
  std::string hist;
  std::string flavor;
  double fps = 0.0;

  void add_to(CLI::App* cmd, bool want_gt, bool want_hist) {
    cmd->add_option("--bundle", bundle, "sequence directory (seq.ini, det.txt, gt.txt, ipt.csv, hist.txt, img/)");
    cmd->add_option("--dets", dets, "detection file (MOT or KITTI)");
    if (want_gt) cmd->add_option("--gt", gt, "ground-truth file (MOT or KITTI)");
    cmd->add_option("--ipts", ipts, "interest point trajectories (id,frame,x,y)");
    if (want_hist) cmd->add_option("--hist", hist, "appearance histograms (id b0 .. b159)");
    cmd->add_option("--flavor", flavor, "label format of loose files: MOT or KITTI (default: sniffed)");
    cmd->add_option("--fps", fps, "frame rate, overrides seq.ini and the config");
  }

  SequenceBundle load(bool need_gt) const {
    SequenceBundle b;
    if (!bundle.empty()) {
      if (!dets.empty()) throw InputError("give either --bundle or --dets, not both");
      b = load_bundle(bundle);
      if (!ipts.empty()) b.ipts = parse_ipt(ipts);
      if (!hist.empty()) b.histograms = parse_histograms(hist);
      if (!b.histograms && !b.images.empty()) b.histograms = histograms_from_images(b);
    } else {
      if (dets.empty()) throw InputError("missing input: --bundle or --dets is required");
      b.name = fs::path(dets).stem().string();
      b.flavor = flavor.empty() ? sniff_flavor(dets) : parse_flavor(flavor);
      b.detections = parse_labels(dets, b.flavor).detections;
      if (!gt.empty()) b.ground_truth = parse_labels(gt, b.flavor).tracks;
      if (!ipts.empty()) b.ipts = parse_ipt(ipts);
      if (!hist.empty()) b.histograms = parse_histograms(hist);
      for (const auto& d : b.detections) b.frames = std::max(b.frames, d.frame + 1);
    }
    if (fps > 0.0) b.fps = fps;
    if (!b.ipts) throw InputError("missing input: interest point trajectories (--ipts or ipt.csv in the bundle)");
    if (need_gt && b.ground_truth.empty()) throw InputError("missing input: ground truth (--gt or gt.txt in the bundle)");
    return b;
  }
};

std::vector<std::vector<Detection>> frames_of(const SequenceBundle& b) {
  int frames = b.frames;
  for (const auto& d : b.detections) frames = std::max(frames, d.frame + 1);
  std::vector<std::vector<Detection>> out(frames);
  for (const auto& d : b.detections) {
    if (d.frame < 0) throw InputError("detection " + std::to_string(d.id) + " has a negative frame");
    out[d.frame].push_back(d);
  }
  return out;
}

Config load_config(const std::string& path, const SequenceBundle& b, double fps_override, int workers) {
  Config c;
  c.set_fps(b.fps);
  if (!path.empty()) c = parse_config(path, c);
  if (fps_override > 0.0) c.set_fps(fps_override);
  if (workers > 0) c.workers = workers;
  c.validate();
  return c;
}

void write_timing(const std::string& path, const std::vector<StepStats>& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << std::fixed << std::setprecision(6);
  out << "frame,tracklets,hypotheses,nodes,edges,components,largest_component,fallbacks,energy,"
         "time_affinity,time_hypotheses,time_inference\n";
  for (const auto& s : log)
    out << s.frame << ',' << s.tracklets << ',' << s.hypotheses << ',' << s.nodes << ',' << s.edges << ','
        << s.components << ',' << s.largest_component << ',' << s.fallbacks << ',' << s.energy << ','
        << s.time_affinity << ',' << s.time_hypotheses << ',' << s.time_inference << '\n';
}

void write_latency(const std::string& path, std::span<const Target> targets, const DetectionTable& dets) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << "target,detection,frame,last_association,latency\n";
  for (const auto& target : targets)
    for (const auto& [frame, id] : target.associations) {
      auto it = target.last_assoc_time.find(id);
      const int last = it == target.last_assoc_time.end() ? frame : it->second;
      out << target.id << ',' << id << ',' << frame << ',' << last << ',' << last - dets.at(id).frame << '\n';
    }
}

struct TrackArgs {
  SequenceArgs seq;
  std::string config;
  std::string model;
  std::string out;
  std::string latency;
  std::string timing;
  std::string out_flavor;
  bool raw = false;
  int workers = 0;
};

void add_track_options(CLI::App* cmd, TrackArgs& a, bool nomt) {
  a.seq.add_to(cmd, false, nomt);
  cmd->add_option("--config", a.config, "key=value configuration file");
  cmd->add_option("--model", a.model, "ALFD model file")->required();
  cmd->add_option("--out", a.out, "output tracks file")->required();
  cmd->add_option("--out-flavor", a.out_flavor, "output format (default: the input's)");
  cmd->add_option("--latency", a.latency, "write per-detection association latency (CSV)");
  if (nomt) cmd->add_option("--timing", a.timing, "write per-frame statistics and timings (CSV)");
  cmd->add_flag("--raw", a.raw, "write detection boxes instead of Kalman-smoothed trajectories");
  cmd->add_option("--workers", a.workers, "worker threads (results do not depend on it)");
}

template <class Tracker>
int run_tracker(const TrackArgs& a, bool nomt) {
  const SequenceBundle b = a.seq.load(false);
  const Config cfg = load_config(a.config, b, a.seq.fps, a.workers);
  const AlfdModel model = parse_model(a.model);
  const auto frames = frames_of(b);

  std::optional<Tracker> tracker;
  if constexpr (std::is_same_v<Tracker, NomtTracker>)
    tracker.emplace(cfg, model, *b.ipts, b.histograms ? &*b.histograms : nullptr);
  else
    tracker.emplace(cfg, model, *b.ipts);

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t t = 0; t < frames.size(); ++t) tracker->step(static_cast<int>(t), frames[t]);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto targets = finalize(tracker->targets(), tracker->detections());
  const KalmanParams kp{cfg.kalman_measurement_std, cfg.kalman_process_std};
  const Tracks tracks = a.raw ? to_tracks(targets, tracker->detections()) : smooth_tracks(targets, tracker->detections(), kp);
  const Flavor flavor = a.out_flavor.empty() ? b.flavor : parse_flavor(a.out_flavor);
  write_tracks(a.out, tracks, flavor);

  const LatencyReport lat = latency_report(targets, tracker->detections());
  std::cout << std::fixed << std::setprecision(2);
  std::cout << (nomt ? "nomt" : "hm") << ": " << frames.size() << " frames in " << seconds << " s ("
            << (seconds > 0 ? frames.size() / seconds : 0.0) << " fps), " << targets.size() << " targets\n";
  std::cout << "latency: mean " << lat.mean << " std " << lat.stddev << " zero " << 100.0 * lat.zero_fraction
            << "% max " << lat.max << " frames\n";
  if (!a.latency.empty()) write_latency(a.latency, targets, tracker->detections());
  if constexpr (std::is_same_v<Tracker, NomtTracker>)
    if (!a.timing.empty()) write_timing(a.timing, tracker->log());
  return 0;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v < 1) throw InputError("bad gap list '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InputError("empty gap list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nomt: near-online multi-target tracking with ALFD affinities"};
  app.require_subcommand(1, 1);

  TrackArgs track;
  auto* track_cmd = app.add_subcommand("track", "track a sequence with the near-online tracker");
  add_track_options(track_cmd, track, true);

  TrackArgs hm;
  auto* hm_cmd = app.add_subcommand("baseline-hm", "track a sequence with the online Hungarian baseline");
  add_track_options(hm_cmd, hm, false);

  std::vector<std::string> learn_bundles;
  SequenceArgs learn_seq;
  std::string learn_out, learn_config;
  int learn_grid = 4, learn_workers = 1;
  auto* learn_cmd = app.add_subcommand("learn-weights", "learn ALFD weights from labelled sequences");
  learn_cmd->add_option("--train", learn_bundles, "training bundle directory (repeatable)");
  learn_seq.add_to(learn_cmd, true, false);
  learn_cmd->add_option("--config", learn_config, "configuration (its tau and neighbor_set select the gaps)");
  learn_cmd->add_option("--grid", learn_grid, "grid size G of the descriptor")->check(CLI::Range(1, 16));
  learn_cmd->add_option("--workers", learn_workers, "worker threads")->check(CLI::PositiveNumber);
  learn_cmd->add_option("--out", learn_out, "output model file")->required();

  SequenceArgs ab_seq;
  std::string ab_model, ab_out, ab_gaps = "1,2,5,10,20";
  int ab_workers = 1;
  auto* ab_cmd = app.add_subcommand("ablate", "ROC/AUC of ALFD, NDist2 and HistIK on a labelled sequence");
  ab_seq.add_to(ab_cmd, true, true);
  ab_cmd->add_option("--model", ab_model, "ALFD model file")->required();
  ab_cmd->add_option("--gaps", ab_gaps, "comma-separated frame gaps");
  ab_cmd->add_option("--out-dir", ab_out, "directory for roc_<metric>_dt<gap>.csv files");
  ab_cmd->add_option("--workers", ab_workers, "worker threads")->check(CLI::PositiveNumber);

  std::string ev_gt, ev_tracks, ev_flavor, ev_report;
  double ev_threshold = 0.5;
  auto* ev_cmd = app.add_subcommand("eval", "CLEAR MOT metrics of a tracks file against ground truth");
  ev_cmd->add_option("--gt", ev_gt, "ground-truth file")->required();
  ev_cmd->add_option("--tracks", ev_tracks, "tracks file")->required();
  ev_cmd->add_option("--flavor", ev_flavor, "MOT or KITTI (default: sniffed)");
  ev_cmd->add_option("--threshold", ev_threshold, "IoU match threshold")->check(CLI::Range(0.0, 1.0));
  ev_cmd->add_option("--report", ev_report, "write the full report as key=value lines");

  std::string sy_preset, sy_scenario, sy_out, sy_flavor;
  std::uint64_t sy_seed = 0;
  bool sy_images = false, sy_list = false;
  auto* sy_cmd = app.add_subcommand("synth", "generate a synthetic sequence bundle");
  sy_cmd->add_option("--preset", sy_preset, "named scenario: noiseless, crossing, moving_camera, throughput");
  sy_cmd->add_option("--scenario", sy_scenario, "key=value scenario file");
  sy_cmd->add_option("--seed", sy_seed, "override the scenario seed");
  sy_cmd->add_option("--out", sy_out, "output bundle directory");
  sy_cmd->add_option("--flavor", sy_flavor, "label format of det.txt and gt.txt: MOT or KITTI");
  sy_cmd->add_flag("--images", sy_images, "also render img/NNNNNN.ppm frames");
  sy_cmd->add_flag("--list", sy_list, "print the preset names and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string what = e.what();
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr)
      what = std::string("unknown subcommand '") + argv[1] + "'";
    std::cerr << "error: " << what << "\n\n" << app.help();
    return 2;
  }

  try {
    if (track_cmd->parsed()) return run_tracker<NomtTracker>(track, true);
    if (hm_cmd->parsed()) return run_tracker<HmTracker>(hm, false);

    if (learn_cmd->parsed()) {
      std::vector<SequenceBundle> bundles;
      for (const auto& dir : learn_bundles) {
        bundles.push_back(load_bundle(dir));
        if (!bundles.back().ipts || bundles.back().ground_truth.empty())
          throw InputError("training bundle " + dir + " needs ipt.csv and gt.txt");
      }
      if (!learn_seq.dets.empty() || !learn_seq.bundle.empty()) bundles.push_back(learn_seq.load(true));
      if (bundles.empty()) throw InputError("missing input: --train, --bundle or --dets/--gt/--ipts");
      Config cfg;
      if (!learn_config.empty()) cfg = parse_config(learn_config);
      std::vector<TrainingSequence> train;
      for (const auto& b : bundles) train.push_back({b.detections, &b.ground_truth, &*b.ipts});
      const auto gaps = cfg.model_gaps();
      const AlfdModel model = learn_model(train, gaps, learn_grid, learn_workers);
      std::ofstream out(learn_out);
      if (!out) throw InputError("cannot write " + learn_out);
      write_model(out, model);
      std::cout << "learned " << gaps.size() << " weight vectors from " << bundles.size() << " sequence(s)\n";
      return 0;
    }

    if (ab_cmd->parsed()) {
      const SequenceBundle b = ab_seq.load(true);
      const AlfdModel model = parse_model(ab_model);
      AblationOptions opt;
      opt.gaps = parse_int_list(ab_gaps);
      opt.workers = ab_workers;
      const auto rocs = affinity_ablation(b.detections, b.ground_truth, *b.ipts,
                                          b.histograms ? &*b.histograms : nullptr, model, opt);
      print_auc_table(std::cout, rocs);
      if (!ab_out.empty()) {
        fs::create_directories(ab_out);
        for (const auto& roc : rocs) {
          const auto path = fs::path(ab_out) / ("roc_" + roc.metric + "_dt" + std::to_string(roc.dt) + ".csv");
          std::ofstream out(path);
          if (!out) throw InputError("cannot write " + path.string());
          write_roc_csv(out, roc);
        }
      }
      return 0;
    }

    if (ev_cmd->parsed()) {
      const Flavor flavor = ev_flavor.empty() ? sniff_flavor(ev_gt) : parse_flavor(ev_flavor);
      const Tracks gt = parse_labels(ev_gt, flavor).tracks;
      const Tracks hyp = parse_labels(ev_tracks, flavor).tracks;
      const MotReport rep = clear_mot(gt, hyp, ev_threshold);
      print_summary(std::cout, rep);
      if (!ev_report.empty()) {
        std::ofstream out(ev_report);
        if (!out) throw InputError("cannot write " + ev_report);
        write_report(out, rep);
      }
      return 0;
    }

    if (sy_cmd->parsed()) {
      if (sy_list) {
        for (const auto& name : preset_names()) std::cout << name << '\n';
        return 0;
      }
      if (sy_out.empty()) throw InputError("missing output: --out");
      if (sy_preset.empty() == sy_scenario.empty()) throw InputError("give exactly one of --preset and --scenario");
      ScenarioSpec spec = sy_preset.empty() ? parse_scenario(sy_scenario) : preset_scenario(sy_preset);
      if (sy_seed != 0) spec.seed = sy_seed;
      SyntheticSequence seq = generate(spec);
      if (!sy_flavor.empty()) seq.bundle.flavor = parse_flavor(sy_flavor);
      save_bundle(seq.bundle, sy_out);
      {
        std::ofstream out(fs::path(sy_out) / "scenario.txt");
        write_scenario(out, spec);
      }
      if (sy_images) {
        fs::create_directories(fs::path(sy_out) / "img");
        for (int f = 0; f < spec.frames; ++f) {
          std::ostringstream name;
          name << std::setw(6) << std::setfill('0') << f << ".ppm";
          write_ppm(render(seq, f, static_cast<int>(spec.width), static_cast<int>(spec.height)),
                    (fs::path(sy_out) / "img" / name.str()).string());
        }
      }
      std::cout << "wrote " << seq.bundle.detections.size() << " detections, " << seq.bundle.ground_truth.size()
                << " ground-truth boxes, " << seq.bundle.ipts->size() << " trajectories to " << sy_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (auto* cmd : app.get_subcommands()) std::cerr << '\n' << cmd->help();
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
