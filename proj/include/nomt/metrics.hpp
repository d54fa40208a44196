#pragma once

// CLEAR MOT evaluation and the affinity ablation (ROC / AUC of ALFD against
// the NDist2 and HistIK baselines).

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "nomt/alfd.hpp"
#include "nomt/appearance.hpp"
#include "nomt/assignment.hpp"
#include "nomt/core.hpp"
#include "nomt/ipt.hpp"
#include "nomt/parallel.hpp"

namespace nomt {

struct MotReport {
  double mota = 0.0;
  double motp = 0.0;
  double mt = 0.0;  // fraction of GT tracks covered for at least 80% of their boxes
  double ml = 0.0;  // fraction covered for at most 20%
  int ids = 0;
  int frag = 0;
  int fp = 0;
  int fn = 0;
  int matches = 0;
  int gt_count = 0;
  int gt_tracks = 0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline std::map<int, std::map<int, BoundingBox>> by_frame(const Tracks& tracks, const char* what) {
  std::map<int, std::map<int, BoundingBox>> out;
  for (const auto& p : tracks)
    if (!out[p.frame].emplace(p.id, p.box).second)
      throw InputError(std::string(what) + ": id " + std::to_string(p.id) + " appears twice in frame " +
                       std::to_string(p.frame));
  return out;
}

}  // namespace detail

/// CLEAR MOT. A ground-truth object keeps its hypothesis from the previous
/// frame while their IoU stays at or above the threshold; the rest are
/// matched by minimum-cost assignment on 1 - IoU. An identity switch is
/// counted when an object's matched hypothesis differs from its previous
/// one; a fragmentation when a matched object goes unmatched and is matched
/// again.
inline MotReport clear_mot(const Tracks& gt, const Tracks& hyp, double threshold = 0.5) {
  if (gt.empty()) throw InputError("clear_mot: empty ground truth");
  const auto gt_frames = detail::by_frame(gt, "ground truth");
  const auto hyp_frames = detail::by_frame(hyp, "hypotheses");
  std::set<int> frames;
  for (const auto& [f, v] : gt_frames) frames.insert(f);
  for (const auto& [f, v] : hyp_frames) frames.insert(f);

  MotReport r;
  std::map<int, int> previous;   // gt id -> hyp id matched in the previous frame
  std::map<int, int> last_hyp;   // gt id -> last matched hyp id
  std::map<int, bool> broken;    // gt id -> unmatched since its last match
  std::map<int, int> present, covered;
  double overlap_sum = 0.0;
  static const std::map<int, BoundingBox> kNone;

  for (int f : frames) {
    auto gi = gt_frames.find(f);
    auto hi = hyp_frames.find(f);
    const auto& g = gi == gt_frames.end() ? kNone : gi->second;
    const auto& h = hi == hyp_frames.end() ? kNone : hi->second;

    std::map<int, int> current;
    std::set<int> used;
    for (const auto& [gid, hid] : previous) {
      auto gb = g.find(gid);
      auto hb = h.find(hid);
      if (gb == g.end() || hb == h.end()) continue;
      if (iou(gb->second, hb->second) >= threshold) {
        current[gid] = hid;
        used.insert(hid);
      }
    }
    std::vector<int> rows, cols;
    for (const auto& [gid, box] : g)
      if (!current.contains(gid)) rows.push_back(gid);
    for (const auto& [hid, box] : h)
      if (!used.contains(hid)) cols.push_back(hid);
    if (!rows.empty() && !cols.empty()) {
      constexpr double kForbidden = 1e6;
      std::vector<std::vector<double>> cost(rows.size(), std::vector<double>(cols.size()));
      for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) {
          const double o = iou(g.at(rows[a]), h.at(cols[b]));
          cost[a][b] = o >= threshold ? 1.0 - o : kForbidden;
        }
      const auto assign = solve_assignment(cost);
      for (std::size_t a = 0; a < rows.size(); ++a)
        if (assign[a] >= 0 && cost[a][assign[a]] < kForbidden) current[rows[a]] = cols[assign[a]];
    }

    for (const auto& [gid, box] : g) {
      ++present[gid];
      auto m = current.find(gid);
      if (m == current.end()) {
        if (last_hyp.contains(gid)) broken[gid] = true;
        continue;
      }
      ++covered[gid];
      overlap_sum += iou(box, h.at(m->second));
      auto last = last_hyp.find(gid);
      if (last != last_hyp.end() && last->second != m->second) ++r.ids;
      if (broken[gid]) ++r.frag;
      broken[gid] = false;
      last_hyp[gid] = m->second;
    }
    r.gt_count += static_cast<int>(g.size());
    r.matches += static_cast<int>(current.size());
    r.fp += static_cast<int>(h.size() - current.size());
    r.fn += static_cast<int>(g.size() - current.size());
    previous = std::move(current);
  }

  r.gt_tracks = static_cast<int>(present.size());
  int mt = 0, ml = 0;
  for (const auto& [gid, n] : present) {
    const double ratio = static_cast<double>(covered[gid]) / n;
    mt += ratio >= 0.8;
    ml += ratio <= 0.2;
  }
  r.mt = static_cast<double>(mt) / r.gt_tracks;
  r.ml = static_cast<double>(ml) / r.gt_tracks;
  r.mota = 1.0 - static_cast<double>(r.fp + r.fn + r.ids) / r.gt_count;
  r.motp = r.matches > 0 ? overlap_sum / r.matches : 0.0;
  r.recall = static_cast<double>(r.matches) / r.gt_count;
  r.precision = r.matches + r.fp > 0 ? static_cast<double>(r.matches) / (r.matches + r.fp) : 0.0;
  r.f1 = r.recall + r.precision > 0.0 ? 2.0 * r.recall * r.precision / (r.recall + r.precision) : 0.0;
  return r;
}

/// Machine-readable key=value report.
inline void write_report(std::ostream& out, const MotReport& r) {
  out << std::fixed << std::setprecision(6);
  out << "mota=" << r.mota << "\nmotp=" << r.motp << "\nmt=" << r.mt << "\nml=" << r.ml << "\nids=" << r.ids
      << "\nfrag=" << r.frag << "\nfp=" << r.fp << "\nfn=" << r.fn << "\nmatches=" << r.matches
      << "\ngt_count=" << r.gt_count << "\ngt_tracks=" << r.gt_tracks << "\nrecall=" << r.recall
      << "\nprecision=" << r.precision << "\nf1=" << r.f1 << '\n';
}

/// One-line summary in percent, the form printed by the CLI.
inline void print_summary(std::ostream& out, const MotReport& r) {
  out << std::fixed << std::setprecision(2) << "MOTA " << 100.0 * r.mota << "  MOTP " << 100.0 * r.motp << "  MT "
      << 100.0 * r.mt << "  ML " << 100.0 * r.ml << "  IDS " << r.ids << "  FRAG " << r.frag << "  FP " << r.fp
      << "  FN " << r.fn << "  Rec " << 100.0 * r.recall << "  Prec " << 100.0 * r.precision << '\n';
}

// ---------------------------------------------------------------------------
// ROC / AUC.

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct AffinityRoc {
  std::string metric;
  int dt = 0;
  int positives = 0;
  int negatives = 0;
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1), non-decreasing in fpr
  double auc = 0.0;
};

/// ROC curve by sweeping the threshold over distinct scores (descending);
/// tied scores form a single step.
inline std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const char> labels) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double pos = 0.0, neg = 0.0;
  for (char l : labels) (l ? pos : neg) += 1.0;
  std::vector<RocPoint> pts{{0.0, 0.0}};
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (labels[order[k]] ? tp : fp) += 1.0;
      ++k;
    }
    pts.push_back({neg > 0 ? fp / neg : 0.0, pos > 0 ? tp / pos : 0.0});
  }
  return pts;
}

inline double auc_trapezoid(std::span<const RocPoint> pts) {
  double a = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k)
    a += (pts[k].fpr - pts[k - 1].fpr) * 0.5 * (pts[k].tpr + pts[k - 1].tpr);
  return a;
}

/// Probability that a random positive outscores a random negative (ties
/// count one half), computed from midranks.
inline double auc_mann_whitney(std::span<const double> scores, std::span<const char> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0, pos = 0.0;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e < n && scores[order[e]] == scores[order[k]]) ++e;
    const double midrank = 0.5 * (static_cast<double>(k + 1) + static_cast<double>(e));
    for (std::size_t j = k; j < e; ++j)
      if (labels[order[j]]) rank_sum += midrank;
    k = e;
  }
  for (char l : labels) pos += l ? 1.0 : 0.0;
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return 0.0;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// Negated distance between bottom centres, normalised by the mean height.
inline double ndist2(const BoundingBox& a, const BoundingBox& b) {
  const double dx = a.center_x() - b.center_x();
  const double dy = a.bottom() - b.bottom();
  return -std::hypot(dx, dy) / (0.5 * (a.h + b.h));
}

struct AblationOptions {
  std::vector<int> gaps{1, 2, 5, 10, 20};
  double lambda = 20.0;
  int workers = 1;
};

/// Scores every pair of labelled detections at each frame gap with ALFD,
/// NDist2 and HistIK (when histograms are given) and returns one ROC per
/// metric and gap. Gaps without both positive and negative pairs, and ALFD at
/// gaps the model lacks, are skipped with a warning.
inline std::vector<AffinityRoc> affinity_ablation(std::span<const Detection> dets, const Tracks& gt,
                                                  const IptStore& store, const HistogramTable* histograms,
                                                  const AlfdModel& model, const AblationOptions& opt = {}) {
  const auto labels = label_detections(dets, gt);
  std::map<int, std::vector<std::size_t>> by_frame;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (labels[i].id >= 0) by_frame[dets[i].frame].push_back(i);

  std::unordered_map<std::size_t, DetectionSupport> supports;
  {
    std::vector<std::size_t> labelled;
    for (const auto& [f, v] : by_frame) labelled.insert(labelled.end(), v.begin(), v.end());
    std::vector<DetectionSupport> s(labelled.size());
    parallel_for(labelled.size(), opt.workers,
                 [&](std::size_t k) { s[k] = detection_support(dets[labelled[k]], store, model.grid()); });
    for (std::size_t k = 0; k < labelled.size(); ++k) supports.emplace(labelled[k], std::move(s[k]));
  }

  std::vector<AffinityRoc> out;
  for (int dt : opt.gaps) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<char> positive;
    for (const auto& [f, members] : by_frame) {
      auto later = by_frame.find(f + dt);
      if (later == by_frame.end()) continue;
      for (std::size_t i : members)
        for (std::size_t j : later->second) {
          pairs.emplace_back(i, j);
          positive.push_back(labels[i].id == labels[j].id);
        }
    }
    const auto n_pos = std::count(positive.begin(), positive.end(), 1);
    if (n_pos == 0 || n_pos == static_cast<long>(positive.size())) {
      warn("ablation: dt=" + std::to_string(dt) + " lacks positive or negative pairs; skipped");
      continue;
    }
    auto emit = [&](const std::string& metric, const std::vector<double>& scores) {
      AffinityRoc roc;
      roc.metric = metric;
      roc.dt = dt;
      roc.positives = static_cast<int>(n_pos);
      roc.negatives = static_cast<int>(positive.size() - n_pos);
      roc.points = roc_curve(scores, positive);
      roc.auc = auc_trapezoid(roc.points);
      out.push_back(std::move(roc));
    };

    if (model.has(dt)) {
      std::vector<double> s(pairs.size());
      parallel_for(pairs.size(), opt.workers, [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        s[k] = model.score(dt, descriptor(supports.at(i), dets[i], supports.at(j), dets[j], model.grid(), opt.lambda));
      });
      emit("ALFD", s);
    } else {
      warn("ablation: model has no weights for dt=" + std::to_string(dt) + "; ALFD skipped");
    }

    std::vector<double> nd(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) nd[k] = ndist2(dets[pairs[k].first].box, dets[pairs[k].second].box);
    emit("NDist2", nd);

    if (histograms != nullptr) {
      std::vector<double> hk(pairs.size());
      bool complete = true;
      for (std::size_t k = 0; k < pairs.size() && complete; ++k) {
        auto a = histograms->find(dets[pairs[k].first].id);
        auto b = histograms->find(dets[pairs[k].second].id);
        if (a == histograms->end() || b == histograms->end()) {
          complete = false;
          break;
        }
        hk[k] = intersection_kernel(a->second, b->second);
      }
      if (complete)
        emit("HistIK", hk);
      else
        warn("ablation: missing histograms; HistIK skipped at dt=" + std::to_string(dt));
    }
  }
  return out;
}

/// AUC table: one row per metric, one column per gap.
inline void print_auc_table(std::ostream& out, std::span<const AffinityRoc> rocs) {
  std::set<int> gaps;
  std::vector<std::string> metrics;
  for (const auto& r : rocs) {
    gaps.insert(r.dt);
    if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) metrics.push_back(r.metric);
  }
  out << std::left << std::setw(8) << "metric";
  for (int dt : gaps) out << std::right << std::setw(9) << ("dt=" + std::to_string(dt));
  out << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& m : metrics) {
    out << std::left << std::setw(8) << m;
    for (int dt : gaps) {
      auto it = std::find_if(rocs.begin(), rocs.end(), [&](const AffinityRoc& r) { return r.metric == m && r.dt == dt; });
      if (it == rocs.end())
        out << std::right << std::setw(9) << "-";
      else
        out << std::right << std::setw(9) << it->auc;
    }
    out << '\n';
  }
}

/// ROC points as CSV "fpr,tpr".
inline void write_roc_csv(std::ostream& out, const AffinityRoc& roc) {
  out << "fpr,tpr\n" << std::fixed << std::setprecision(6);
  for (const auto& p : roc.points) out << p.fpr << ',' << p.tpr << '\n';
}

}  // namespace nomt
