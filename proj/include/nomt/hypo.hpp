#pragma once

// Candidate generation inside the temporal window [t - tau, t]: greedy
// ALFD tracklets, a polynomial motion predictor used for gating, and the
// hypothesis sets of existing and newly entering targets.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "nomt/core.hpp"
#include "nomt/parallel.hpp"

namespace nomt {

/// Detection ids ordered by frame, at most one per frame.
struct Tracklet {
  std::vector<int> detections;
  friend auto operator<=>(const Tracklet&, const Tracklet&) = default;
};

/// A candidate set of window detections for one target; empty means the
/// target is terminated (receives nothing in the window).
struct Hypothesis {
  std::vector<int> detections;
  bool empty() const { return detections.empty(); }
  friend auto operator<=>(const Hypothesis&, const Hypothesis&) = default;
};

inline constexpr int kNewTarget = -1;

struct HypothesisSet {
  int target_id = kNewTarget;      // kNewTarget for an entering target
  std::vector<Hypothesis> hypotheses;  // hypotheses[0] is always the empty hypothesis
};

// ---------------------------------------------------------------------------
// Polynomial least-squares predictor.

class PolyPredictor {
 public:
  PolyPredictor() = default;

  /// Fits x, y, w, h independently against frame number. With fewer than
  /// order + 1 samples the predictor is constant at the last sample.
  static PolyPredictor fit(std::span<const std::pair<int, BoundingBox>> samples, int order) {
    if (samples.empty()) throw InputError("cannot fit a predictor without samples");
    PolyPredictor p;
    p.ref_frame_ = samples.back().first;
    const int n = static_cast<int>(samples.size());
    if (n < order + 1 || order == 0) {
      const auto& b = samples.back().second;
      p.coeffs_ = {{{b.x}, {b.y}, {b.w}, {b.h}}};
      return p;
    }
    Eigen::MatrixXd design(n, order + 1);
    Eigen::MatrixXd rhs(n, 4);
    for (int r = 0; r < n; ++r) {
      const double s = samples[r].first - p.ref_frame_;
      double v = 1.0;
      for (int c = 0; c <= order; ++c, v *= s) design(r, c) = v;
      const auto& b = samples[r].second;
      rhs.row(r) << b.x, b.y, b.w, b.h;
    }
    const Eigen::MatrixXd sol = design.colPivHouseholderQr().solve(rhs);
    for (int k = 0; k < 4; ++k) {
      p.coeffs_[k].resize(order + 1);
      for (int c = 0; c <= order; ++c) p.coeffs_[k][c] = sol(c, k);
    }
    return p;
  }

  BoundingBox predict(int frame) const {
    const double s = frame - ref_frame_;
    std::array<double, 4> v{};
    for (int k = 0; k < 4; ++k) {
      double acc = 0.0;
      for (auto c = coeffs_[k].rbegin(); c != coeffs_[k].rend(); ++c) acc = acc * s + *c;
      v[k] = acc;
    }
    constexpr double kMinSize = 1e-3;
    return {v[0], v[1], std::max(v[2], kMinSize), std::max(v[3], kMinSize)};
  }

  int order() const { return static_cast<int>(coeffs_[0].size()) - 1; }

 private:
  int ref_frame_ = 0;
  std::array<std::vector<double>, 4> coeffs_;
};

/// Predictor over the most recent 2 * tau associations of `associations`
/// (frame -> detection id).
inline PolyPredictor fit_predictor(const std::map<int, int>& associations, const DetectionTable& dets,
                                   const Config& config) {
  if (associations.empty()) throw InputError("cannot fit a predictor for an empty target");
  const std::size_t window = static_cast<std::size_t>(2 * config.tau);
  std::vector<std::pair<int, BoundingBox>> samples;
  auto it = associations.end();
  while (it != associations.begin() && samples.size() < window) {
    --it;
    samples.emplace_back(it->first, dets.at(it->second).box);
  }
  std::reverse(samples.begin(), samples.end());
  return PolyPredictor::fit(samples, config.poly_order);
}

inline PolyPredictor fit_predictor(const Target& target, const DetectionTable& dets, const Config& config) {
  return fit_predictor(target.associations, dets, config);
}

// ---------------------------------------------------------------------------
// Tracklets.

/// Grows a tracklet from `seed` by repeatedly adding the window detection in
/// an uncovered frame with the highest affinity to any member. Stops when the
/// best affinity drops below the threshold or every window frame is covered.
/// Ties go to the lowest detection id.
template <class Affinity>
Tracklet grow_tracklet(int seed, std::span<const int> window, const DetectionTable& dets, Affinity&& affinity,
                       const Config& config) {
  const Detection& s = dets.at(seed);
  std::vector<int> members{seed};
  std::set<int> covered{s.frame};

  struct Candidate {
    int id;
    int frame;
    double best;
  };
  std::vector<Candidate> candidates;
  for (int id : window) {
    const Detection& d = dets.at(id);
    if (d.frame == s.frame) continue;
    candidates.push_back({id, d.frame, affinity(seed, id)});
  }
  const std::size_t full = static_cast<std::size_t>(config.tau + 1);
  while (members.size() < full) {
    const Candidate* pick = nullptr;
    for (const auto& c : candidates) {
      if (covered.contains(c.frame)) continue;
      if (pick == nullptr || c.best > pick->best || (c.best == pick->best && c.id < pick->id)) pick = &c;
    }
    if (pick == nullptr || pick->best < config.tracklet_affinity_min) break;
    const int added = pick->id;
    members.push_back(added);
    covered.insert(pick->frame);
    for (auto& c : candidates)
      if (!covered.contains(c.frame)) c.best = std::max(c.best, affinity(added, c.id));
  }
  std::sort(members.begin(), members.end(),
            [&](int a, int b) { return dets.at(a).frame < dets.at(b).frame; });
  return {std::move(members)};
}

/// Window detection ids in frames [t - tau, t].
inline std::vector<int> window_detections(const DetectionTable& dets, int t, const Config& config) {
  std::vector<int> out;
  for (int f = std::max(0, t - config.tau); f <= t; ++f) {
    auto ids = dets.frame(f);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

/// Associations of `target` inside [t - tau, t - 1], as a tracklet.
inline Tracklet residual_tracklet(const Target& target, int t, const Config& config) {
  Tracklet r;
  for (auto it = target.associations.lower_bound(t - config.tau); it != target.associations.end(); ++it)
    if (it->first <= t - 1) r.detections.push_back(it->second);
  return r;
}

/// One grown tracklet per confident window detection plus the residual
/// window associations of every target; duplicates removed. The result is in
/// lexicographic order of detection ids.
template <class Affinity>
std::vector<Tracklet> generate_tracklets(int t, const DetectionTable& dets, std::span<const Target> targets,
                                         Affinity&& affinity, const Config& config) {
  const auto window = window_detections(dets, t, config);
  std::vector<int> seeds;
  for (int id : window)
    if (dets.at(id).score > 0.0) seeds.push_back(id);
  std::vector<Tracklet> grown(seeds.size());
  parallel_for(seeds.size(), config.workers,
               [&](std::size_t k) { grown[k] = grow_tracklet(seeds[k], window, dets, affinity, config); });

  std::set<Tracklet> unique(grown.begin(), grown.end());
  for (const auto& target : targets) {
    auto r = residual_tracklet(target, t, config);
    if (!r.detections.empty()) unique.insert(std::move(r));
  }
  return {unique.begin(), unique.end()};
}

// ---------------------------------------------------------------------------
// Hypothesis sets.

/// A target takes part in the window problem while it has an association in
/// [t - tau - t_active, t].
inline bool is_active(const Target& target, int t, const Config& config) {
  auto it = target.associations.lower_bound(t - config.tau - config.t_active);
  return it != target.associations.end() && it->first <= t;
}

/// True when some detection of the tracklet overlaps the prediction of its
/// frame by more than the gating threshold.
inline bool gated(const Tracklet& tracklet, const PolyPredictor& predictor, int t, const DetectionTable& dets,
                  const Config& config) {
  for (int id : tracklet.detections) {
    const Detection& d = dets.at(id);
    if (d.frame < t - config.tau || d.frame > t) continue;
    if (iou(predictor.predict(d.frame), d.box) > config.gating_iou_min) return true;
  }
  return false;
}

/// {empty} plus every tracklet passing the gate; nullopt for inactive targets.
/// A gated tracklet lying entirely before or after the target's residual
/// window detections also yields their union, so a target can bridge a gap
/// no single tracklet spans.
/// Each gated tracklet also yields its trimmed variant, the detections close
/// to the prediction, which lets a target drop a detection a tracklet picked
/// up from a crossing neighbour.
inline std::optional<HypothesisSet> hypotheses_for_target(const Target& target, std::span<const Tracklet> tracklets,
                                                          const PolyPredictor& predictor, int t,
                                                          const DetectionTable& dets, const Config& config) {
  if (!is_active(target, t, config)) return std::nullopt;
  HypothesisSet set;
  set.target_id = target.id;
  set.hypotheses.emplace_back();
  const Tracklet residual = residual_tracklet(target, t, config);
  const bool has_residual = !residual.detections.empty();
  const int residual_begin = has_residual ? dets.at(residual.detections.front()).frame : 0;
  const int residual_end = has_residual ? dets.at(residual.detections.back()).frame : -1;
  std::set<std::vector<int>> seen;
  auto add = [&](std::vector<int> ids) {
    if (seen.insert(ids).second) set.hypotheses.push_back({std::move(ids)});
  };
  auto add_with_extension = [&](const std::vector<int>& ids) {
    if (ids.empty()) return;
    add(ids);
    if (!has_residual) return;
    if (dets.at(ids.front()).frame > residual_end) {
      std::vector<int> joined = residual.detections;
      joined.insert(joined.end(), ids.begin(), ids.end());
      add(std::move(joined));
    } else if (dets.at(ids.back()).frame < residual_begin) {
      std::vector<int> joined = ids;
      joined.insert(joined.end(), residual.detections.begin(), residual.detections.end());
      add(std::move(joined));
    }
  };
  for (const auto& tr : tracklets) {
    if (!gated(tr, predictor, t, dets, config)) continue;
    add_with_extension(tr.detections);
    if (config.trim_iou_min > 0.0) {
      std::vector<int> trimmed;
      for (int id : tr.detections)
        if (iou(predictor.predict(dets.at(id).frame), dets.at(id).box) >= config.trim_iou_min) trimmed.push_back(id);
      if (trimmed.size() != tr.detections.size()) add_with_extension(trimmed);
    }
  }
  return set;
}

inline double tracklet_score(const Tracklet& tr, const DetectionTable& dets) {
  double s = 0.0;
  for (int id : tr.detections) s += dets.at(id).score;
  return s;
}

/// Tracklet non-maximum suppression: visit tracklets by decreasing summed
/// score and drop any that shares more than half of its detections with an
/// already kept one.
inline std::vector<Tracklet> suppress_tracklets(std::span<const Tracklet> tracklets, const DetectionTable& dets) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t k = 0; k < tracklets.size(); ++k) order.emplace_back(tracklet_score(tracklets[k], dets), k);
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  std::vector<Tracklet> kept;
  std::vector<std::set<int>> kept_sets;
  for (const auto& [score, k] : order) {
    const auto& tr = tracklets[k];
    bool suppressed = false;
    for (const auto& ks : kept_sets) {
      std::size_t shared = 0;
      for (int id : tr.detections) shared += ks.contains(id);
      if (2 * shared > tr.detections.size()) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    kept.push_back(tr);
    kept_sets.emplace_back(tr.detections.begin(), tr.detections.end());
  }
  return kept;
}

/// One {empty, tracklet} set per tracklet surviving suppression.
inline std::vector<HypothesisSet> new_target_sets(std::span<const Tracklet> tracklets, const DetectionTable& dets) {
  std::vector<HypothesisSet> out;
  for (auto& tr : suppress_tracklets(tracklets, dets)) {
    HypothesisSet set;
    set.hypotheses.emplace_back();
    set.hypotheses.push_back({std::move(tr.detections)});
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace nomt
