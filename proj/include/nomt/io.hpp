#pragma once

// Readers and writers for detection/track label files (MOT CSV and KITTI
// tracking), interest-point trajectories, ALFD models, configuration,
// colour histograms and sequence bundles. Formats are described in
// docs/FORMATS.md. Floating values are written with 6 decimals.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nomt/alfd.hpp"
#include "nomt/appearance.hpp"
#include "nomt/core.hpp"
#include "nomt/ipt.hpp"

namespace nomt {

class ParseError : public InputError {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : InputError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  if (sep == ' ') {
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Line-oriented reader that tracks line numbers and skips blank lines and
/// '#' comments.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw InputError("cannot open " + path);
  }
  explicit LineReader(std::istream& in, std::string name) : path_(std::move(name)), external_(&in) {}

  bool next(std::string& line) {
    std::istream& in = external_ ? *external_ : in_;
    while (std::getline(in, line)) {
      ++line_no_;
      const auto t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      line = std::string(t);
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

  double number(const std::string& tok) const {
    double v = 0.0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    if (!tok.empty() && *b == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e || !std::isfinite(v)) fail("bad number '" + tok + "'");
    return v;
  }

  int integer(const std::string& tok) const {
    int v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
      // Accept integral values written as reals, e.g. "3.000000".
      const double d = number(tok);
      if (d != std::floor(d)) fail("bad integer '" + tok + "'");
      return static_cast<int>(d);
    }
    return v;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::istream* external_ = nullptr;
  int line_no_ = 0;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << std::fixed << std::setprecision(6);
  return out;
}

}  // namespace detail

/// Contents of a label file: rows without a track id are detections (ids
/// assigned by row order starting at 0), the others track points.
struct LabelFile {
  std::vector<Detection> detections;
  std::vector<std::string> detection_types;  // KITTI object class per detection
  Tracks tracks;
  std::vector<std::string> track_types;
};

enum class Flavor { Mot, Kitti, Synth };

inline std::string to_string(Flavor f) {
  switch (f) {
    case Flavor::Mot: return "MOT";
    case Flavor::Kitti: return "KITTI";
    case Flavor::Synth: return "SYNTH";
  }
  return "?";
}

inline Flavor parse_flavor(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  if (u == "MOT") return Flavor::Mot;
  if (u == "KITTI") return Flavor::Kitti;
  if (u == "SYNTH") return Flavor::Synth;
  throw InputError("unknown dataset flavor '" + s + "'");
}

// ---------------------------------------------------------------------------
// MOT Challenge CSV: frame,id,x,y,w,h,conf[,...]; frames are 1-based.

inline LabelFile parse_mot(std::istream& in, const std::string& name = "<mot>") {
  detail::LineReader r(in, name);
  LabelFile out;
  std::string line;
  while (r.next(line)) {
    const auto f = detail::split(line, ',');
    if (f.size() < 7) r.fail("expected at least 7 fields, got " + std::to_string(f.size()));
    const int frame = r.integer(f[0]) - 1;
    if (frame < 0) r.fail("frame numbers start at 1");
    const int id = r.integer(f[1]);
    const BoundingBox box{r.number(f[2]), r.number(f[3]), r.number(f[4]), r.number(f[5])};
    if (!box.valid()) r.fail("box must have positive width and height");
    const double score = r.number(f[6]);
    if (id == -1)
      out.detections.push_back({frame, box, score, static_cast<int>(out.detections.size())});
    else
      out.tracks.push_back({frame, id, box, score});
  }
  return out;
}

inline LabelFile parse_mot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_mot(in, path);
}

inline void write_mot(std::ostream& out, std::span<const Detection> dets) {
  out << std::fixed << std::setprecision(6);
  for (const auto& d : dets)
    out << d.frame + 1 << ",-1," << d.box.x << ',' << d.box.y << ',' << d.box.w << ',' << d.box.h << ',' << d.score
        << ",-1,-1,-1\n";
}

inline void write_mot(std::ostream& out, const Tracks& tracks) {
  out << std::fixed << std::setprecision(6);
  for (const auto& p : tracks)
    out << p.frame + 1 << ',' << p.id << ',' << p.box.x << ',' << p.box.y << ',' << p.box.w << ',' << p.box.h << ','
        << p.score << ",-1,-1,-1\n";
}

// ---------------------------------------------------------------------------
// KITTI tracking labels: frame track_id type truncated occluded alpha
// left top right bottom h w l x y z rotation_y [score].

inline const std::set<std::string>& kitti_types() {
  static const std::set<std::string> types{"Car",     "Van",  "Truck", "Pedestrian", "Person_sitting",
                                           "Cyclist", "Tram", "Misc"};
  return types;
}

/// `classes` keeps only the listed object types (all known types when empty).
inline LabelFile parse_kitti(std::istream& in, const std::string& name = "<kitti>",
                             const std::set<std::string>& classes = {}) {
  detail::LineReader r(in, name);
  LabelFile out;
  std::string line;
  while (r.next(line)) {
    const auto f = detail::split(line, ' ');
    if (f.size() != 17 && f.size() != 18) r.fail("expected 17 or 18 fields, got " + std::to_string(f.size()));
    const int frame = r.integer(f[0]);
    if (frame < 0) r.fail("negative frame");
    const int id = r.integer(f[1]);
    const std::string& type = f[2];
    if (type == "DontCare") continue;
    if (!kitti_types().contains(type)) {
      warn(r.path() + ": skipping row with unknown type '" + type + "'");
      continue;
    }
    if (!classes.empty() && !classes.contains(type)) continue;
    const double left = r.number(f[6]), top = r.number(f[7]), right = r.number(f[8]), bottom = r.number(f[9]);
    const BoundingBox box{left, top, right - left, bottom - top};
    if (!box.valid()) r.fail("box must have right > left and bottom > top");
    const double score = f.size() == 18 ? r.number(f[17]) : 1.0;
    if (id == -1) {
      out.detections.push_back({frame, box, score, static_cast<int>(out.detections.size())});
      out.detection_types.push_back(type);
    } else {
      out.tracks.push_back({frame, id, box, score});
      out.track_types.push_back(type);
    }
  }
  return out;
}

inline LabelFile parse_kitti(const std::string& path, const std::set<std::string>& classes = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_kitti(in, path, classes);
}

namespace detail {
inline void kitti_row(std::ostream& out, int frame, int id, const std::string& type, const BoundingBox& b,
                      double score) {
  out << frame << ' ' << id << ' ' << type << " 0 0 -10 " << b.x << ' ' << b.y << ' ' << b.right() << ' '
      << b.bottom() << " -1 -1 -1 -1000 -1000 -1000 -10 " << score << '\n';
}
}  // namespace detail

/// Detections with track id -1; `types` may be empty (all written as `type`).
inline void write_kitti(std::ostream& out, std::span<const Detection> dets, std::span<const std::string> types = {},
                        const std::string& type = "Car") {
  out << std::fixed << std::setprecision(6);
  for (std::size_t k = 0; k < dets.size(); ++k)
    detail::kitti_row(out, dets[k].frame, -1, k < types.size() ? types[k] : type, dets[k].box, dets[k].score);
}

inline void write_kitti(std::ostream& out, const Tracks& tracks, const std::string& type = "Car") {
  out << std::fixed << std::setprecision(6);
  for (const auto& p : tracks) detail::kitti_row(out, p.frame, p.id, type, p.box, p.score);
}

/// Guesses the label format from the first data line: commas mean MOT.
inline Flavor sniff_flavor(const std::string& path) {
  detail::LineReader r(path);
  std::string line;
  if (!r.next(line)) return Flavor::Mot;
  return line.find(',') != std::string::npos ? Flavor::Mot : Flavor::Kitti;
}

inline LabelFile parse_labels(const std::string& path, Flavor flavor) {
  return flavor == Flavor::Kitti ? parse_kitti(path) : parse_mot(path);
}

inline void write_tracks(const std::string& path, const Tracks& tracks, Flavor flavor) {
  auto out = detail::open_out(path);
  if (flavor == Flavor::Kitti)
    write_kitti(out, tracks);
  else
    write_mot(out, tracks);
}

inline void write_detections(const std::string& path, std::span<const Detection> dets, Flavor flavor) {
  auto out = detail::open_out(path);
  if (flavor == Flavor::Kitti)
    write_kitti(out, dets);
  else
    write_mot(out, dets);
}

// ---------------------------------------------------------------------------
// IPT CSV: id,frame,x,y with the rows of one id on consecutive frames.

inline IptStore parse_ipt(std::istream& in, const std::string& name = "<ipt>") {
  detail::LineReader r(in, name);
  IptStore store;
  std::map<int, std::pair<int, std::vector<Point2>>> tracks;  // id -> (first frame, samples)
  std::string line;
  bool first = true;
  while (r.next(line)) {
    const auto f = detail::split(line, ',');
    if (first && !f.empty() && f[0] == "id") {
      first = false;
      continue;
    }
    first = false;
    if (f.size() != 4) r.fail("expected 4 fields (id,frame,x,y), got " + std::to_string(f.size()));
    const int id = r.integer(f[0]);
    const int frame = r.integer(f[1]);
    const Point2 p{r.number(f[2]), r.number(f[3])};
    auto it = tracks.find(id);
    if (it == tracks.end()) {
      if (frame < 0) r.fail("negative frame");
      tracks.emplace(id, std::make_pair(frame, std::vector<Point2>{p}));
      continue;
    }
    auto& [start, samples] = it->second;
    if (frame != start + static_cast<int>(samples.size()))
      r.fail("trajectory " + std::to_string(id) + " is not contiguous: frame " + std::to_string(frame) +
             " follows frame " + std::to_string(start + static_cast<int>(samples.size()) - 1));
    samples.push_back(p);
  }
  for (auto& [id, v] : tracks) store.add(Ipt(id, v.first, std::move(v.second)));
  return store;
}

inline IptStore parse_ipt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_ipt(in, path);
}

inline void write_ipt(std::ostream& out, const IptStore& store) {
  out << std::fixed << std::setprecision(6) << "id,frame,x,y\n";
  for (const auto& ipt : store.trajectories())
    for (std::size_t k = 0; k < ipt.samples().size(); ++k)
      out << ipt.id() << ',' << ipt.first_frame() + static_cast<int>(k) << ',' << ipt.samples()[k].x << ','
          << ipt.samples()[k].y << '\n';
}

// ---------------------------------------------------------------------------
// Model file: one line per gap, "dt G w_0 ... w_{N-1}".

inline AlfdModel parse_model(std::istream& in, const std::string& name = "<model>") {
  detail::LineReader r(in, name);
  std::optional<AlfdModel> model;
  std::string line;
  while (r.next(line)) {
    const auto f = detail::split(line, ' ');
    if (f.size() < 2) r.fail("expected 'dt G weights...'");
    const int dt = r.integer(f[0]);
    const int grid = r.integer(f[1]);
    if (dt < 1 || grid < 1) r.fail("dt and G must be positive");
    if (!model) model.emplace(grid);
    if (model->grid() != grid) r.fail("mixed grid sizes in one model");
    const int size = descriptor_size(grid);
    if (static_cast<int>(f.size()) != 2 + size)
      r.fail("expected " + std::to_string(size) + " weights, got " + std::to_string(f.size() - 2));
    if (model->has(dt)) r.fail("duplicate record for dt=" + std::to_string(dt));
    std::vector<double> w(size);
    for (int k = 0; k < size; ++k) {
      w[k] = r.number(f[2 + k]);
      if (w[k] < -1.0 || w[k] > 1.0) r.fail("weight outside [-1, 1]");
    }
    model->set(dt, std::move(w));
  }
  if (!model) throw InputError(name + ": model file has no records");
  return *model;
}

inline AlfdModel parse_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_model(in, path);
}

inline void write_model(std::ostream& out, const AlfdModel& model) {
  out << std::fixed << std::setprecision(6);
  for (const auto& [dt, w] : model.all()) {
    out << dt << ' ' << model.grid();
    for (double v : w) out << ' ' << v;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Configuration: key=value lines; unknown keys are errors.

inline Config parse_config(std::istream& in, const std::string& name = "<config>", Config base = {}) {
  detail::LineReader r(in, name);
  Config c = std::move(base);
  std::string line;
  bool t_active_set = false;
  std::optional<double> fps;
  while (r.next(line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("expected key=value");
    const std::string key{detail::trim(std::string_view(line).substr(0, eq))};
    const std::string value{detail::trim(std::string_view(line).substr(eq + 1))};
    auto real = [&] { return r.number(value); };
    auto integer = [&] { return r.integer(value); };
    if (key == "tau") c.tau = integer();
    else if (key == "lambda") c.lambda = real();
    else if (key == "alpha") c.alpha = real();
    else if (key == "beta") c.beta = real();
    else if (key == "gamma") c.gamma = real();
    else if (key == "epsilon") c.epsilon = real();
    else if (key == "theta") c.theta = real();
    else if (key == "eta") c.eta = real();
    else if (key == "neighbor_set") {
      c.neighbor_set.clear();
      for (const auto& tok : detail::split(value, ',')) c.neighbor_set.push_back(r.integer(tok));
    } else if (key == "tracklet_affinity_min") c.tracklet_affinity_min = real();
    else if (key == "gating_iou_min") c.gating_iou_min = real();
    else if (key == "fps") fps = real();
    else if (key == "t_active") {
      c.t_active = integer();
      t_active_set = true;
    } else if (key == "poly_order") c.poly_order = integer();
    else if (key == "grid_n") c.grid_n = integer();
    else if (key == "workers") c.workers = integer();
    else if (key == "jt_budget") c.jt_budget = real();
    else if (key == "trim_iou_min") c.trim_iou_min = real();
    else if (key == "kalman_measurement_std") c.kalman_measurement_std = real();
    else if (key == "kalman_process_std") c.kalman_process_std = real();
    else r.fail("unknown key '" + key + "'");
  }
  if (fps) {
    const int t_active = c.t_active;
    c.set_fps(*fps);
    if (t_active_set) c.t_active = t_active;
  }
  c.validate();
  return c;
}

inline Config parse_config(const std::string& path, Config base = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_config(in, path, std::move(base));
}

inline void write_config(std::ostream& out, const Config& c) {
  out << std::fixed << std::setprecision(6);
  out << "tau=" << c.tau << "\nlambda=" << c.lambda << "\nalpha=" << c.alpha << "\nbeta=" << c.beta
      << "\ngamma=" << c.gamma << "\nepsilon=" << c.epsilon << "\ntheta=" << c.theta << "\neta=" << c.eta
      << "\nneighbor_set=";
  for (std::size_t k = 0; k < c.neighbor_set.size(); ++k) out << (k ? "," : "") << c.neighbor_set[k];
  out << "\ntracklet_affinity_min=" << c.tracklet_affinity_min << "\ngating_iou_min=" << c.gating_iou_min
      << "\nfps=" << c.fps << "\nt_active=" << c.t_active << "\npoly_order=" << c.poly_order
      << "\ngrid_n=" << c.grid_n << "\nworkers=" << c.workers << "\njt_budget=" << c.jt_budget
      << "\ntrim_iou_min=" << c.trim_iou_min
      << "\nkalman_measurement_std=" << c.kalman_measurement_std
      << "\nkalman_process_std=" << c.kalman_process_std << '\n';
}

// ---------------------------------------------------------------------------
// Histograms: "detection_id b_0 ... b_159" per line.

inline HistogramTable parse_histograms(std::istream& in, const std::string& name = "<histograms>") {
  detail::LineReader r(in, name);
  HistogramTable table;
  std::string line;
  while (r.next(line)) {
    const auto f = detail::split(line, ' ');
    if (f.size() != 1 + ColorHistogram::kSize)
      r.fail("expected " + std::to_string(1 + ColorHistogram::kSize) + " fields, got " + std::to_string(f.size()));
    const int id = r.integer(f[0]);
    ColorHistogram h;
    for (int k = 0; k < ColorHistogram::kSize; ++k) {
      h.bins[k] = r.number(f[1 + k]);
      if (h.bins[k] < 0.0) r.fail("negative histogram bin");
    }
    if (!table.emplace(id, h).second) r.fail("duplicate histogram for detection " + std::to_string(id));
  }
  return table;
}

inline HistogramTable parse_histograms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_histograms(in, path);
}

/// Rows sorted by detection id.
inline void write_histograms(std::ostream& out, const HistogramTable& table) {
  std::vector<int> ids;
  for (const auto& [id, h] : table) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  out << std::fixed << std::setprecision(6);
  for (int id : ids) {
    out << id;
    for (double v : table.at(id).bins) out << ' ' << v;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sequence bundle: a directory with seq.ini, det.txt and optionally gt.txt,
// ipt.csv, hist.txt and img/NNNNNN.ppm.

struct SequenceBundle {
  std::string name = "sequence";
  Flavor flavor = Flavor::Synth;
  double fps = 10.0;
  int frames = 0;
  std::vector<Detection> detections;
  Tracks ground_truth;
  std::optional<IptStore> ipts;
  std::optional<HistogramTable> histograms;
  std::vector<std::string> images;  // one path per frame, may be empty
};

inline SequenceBundle load_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  SequenceBundle b;
  {
    const auto ini = (root / "seq.ini").string();
    detail::LineReader r(ini);
    std::string line;
    while (r.next(line)) {
      if (line.front() == '[') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) r.fail("expected key=value");
      const std::string key{detail::trim(std::string_view(line).substr(0, eq))};
      const std::string value{detail::trim(std::string_view(line).substr(eq + 1))};
      if (key == "name") b.name = value;
      else if (key == "flavor") b.flavor = parse_flavor(value);
      else if (key == "fps") b.fps = r.number(value);
      else if (key == "frames") b.frames = r.integer(value);
      else r.fail("unknown key '" + key + "'");
    }
    if (!(b.fps > 0.0)) throw InputError(ini + ": fps must be positive");
  }
  auto labels = parse_labels((root / "det.txt").string(), b.flavor);
  b.detections = std::move(labels.detections);
  if (fs::exists(root / "gt.txt")) b.ground_truth = parse_labels((root / "gt.txt").string(), b.flavor).tracks;
  if (fs::exists(root / "ipt.csv")) b.ipts = parse_ipt((root / "ipt.csv").string());
  if (fs::exists(root / "hist.txt")) b.histograms = parse_histograms((root / "hist.txt").string());
  if (fs::exists(root / "img")) {
    for (int f = 0; f < b.frames; ++f) {
      std::ostringstream name;
      name << std::setw(6) << std::setfill('0') << f << ".ppm";
      const auto p = root / "img" / name.str();
      if (!fs::exists(p)) throw InputError("missing image " + p.string());
      b.images.push_back(p.string());
    }
  }
  for (const auto& d : b.detections) b.frames = std::max(b.frames, d.frame + 1);
  return b;
}

inline void save_bundle(const SequenceBundle& b, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);
  {
    auto out = detail::open_out((root / "seq.ini").string());
    out << "name=" << b.name << "\nflavor=" << to_string(b.flavor) << "\nfps=" << b.fps << "\nframes=" << b.frames
        << '\n';
  }
  write_detections((root / "det.txt").string(), b.detections, b.flavor);
  if (!b.ground_truth.empty()) write_tracks((root / "gt.txt").string(), b.ground_truth, b.flavor);
  if (b.ipts) {
    auto out = detail::open_out((root / "ipt.csv").string());
    write_ipt(out, *b.ipts);
  }
  if (b.histograms) {
    auto out = detail::open_out((root / "hist.txt").string());
    write_histograms(out, *b.histograms);
  }
}

/// Appearance histograms of every detection computed from the bundle's
/// frame images.
inline HistogramTable histograms_from_images(const SequenceBundle& b) {
  if (b.images.empty()) throw InputError("bundle '" + b.name + "' has no images");
  std::map<int, std::vector<const Detection*>> by_frame;
  for (const auto& d : b.detections) by_frame[d.frame].push_back(&d);
  HistogramTable table;
  for (const auto& [frame, dets] : by_frame) {
    if (frame < 0 || frame >= static_cast<int>(b.images.size()))
      throw InputError("no image for frame " + std::to_string(frame));
    const RgbImage img = read_ppm(b.images[frame]);
    for (const Detection* d : dets) table[d->id] = histogram(img, d->box);
  }
  return table;
}

}  // namespace nomt
