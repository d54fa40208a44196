#pragma once

// Energy terms of the window association problem.
//
//   E = sum_m Psi(A*_m, H_m) + sum_{m<l} Phi(H_m, H_l)
//   Psi = sum_i psi_u + sum_{i<j} psi_p + psi_h
//
// A*_m is the clean target (associations before the window) and H_m the
// selected hypothesis.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "nomt/appearance.hpp"
#include "nomt/core.hpp"
#include "nomt/hypo.hpp"

namespace nomt {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Everything the potentials read. `affinity` takes two detection ids and
/// returns a_A; `histograms` may be null, which disables the appearance term.
struct PotentialContext {
  const DetectionTable& dets;
  const Config& config;
  std::function<double(int, int)> affinity;
  const HistogramTable* histograms = nullptr;
  int t = 0;  // current frame; the window is [t - tau, t]
};

struct EnergyBreakdown {
  double unary = 0.0;
  double pairwise = 0.0;
  double high_order = 0.0;
  double exclusion = 0.0;
  double total = 0.0;
};

/// Clean target: associations strictly before the window.
inline Target clean_target(const Target& target, int t, const Config& config) {
  Target clean;
  clean.id = target.id;
  for (const auto& [frame, id] : target.associations)
    if (frame < t - config.tau) clean.associations.emplace(frame, id);
  return clean;
}

/// -sum over neighbour gaps of a_A(target detection at t_i - dt, d_i).
/// Gaps without an associated detection are skipped.
inline double mu_A(const Target& target, const Detection& d, const PotentialContext& ctx) {
  double s = 0.0;
  for (int dt : ctx.config.neighbor_set) {
    const int prev = target.at(d.frame - dt);
    if (prev >= 0) s -= ctx.affinity(prev, d.id);
  }
  return s;
}

/// Target-dynamics term: +inf unless the prediction overlaps d with
/// o2 >= 0.5, otherwise -eta^(t_i - last frame) * o2.
inline double mu_T(const Target& target, const Detection& d, const PolyPredictor* predictor, const Config& config) {
  if (target.empty() || predictor == nullptr) return kInfinity;
  const double overlap = o2(predictor->predict(d.frame), d.box);
  if (overlap < 0.5) return kInfinity;
  return -std::pow(config.eta, d.frame - target.last_frame()) * overlap;
}

inline double psi_u(const Target& target, const Detection& d, const PolyPredictor* predictor,
                    const PotentialContext& ctx) {
  if (target.empty()) return -d.score;
  return std::min(mu_A(target, d, ctx), mu_T(target, d, predictor, ctx.config)) - d.score;
}

inline double psi_p(const Detection& a, const Detection& b, const PotentialContext& ctx) {
  if (!ctx.config.in_neighbor_set(std::abs(a.frame - b.frame))) return 0.0;
  return -ctx.affinity(a.id, b.id);
}

/// Normalised appearance kernel of two detections, if both have histograms.
inline std::optional<double> appearance_kernel(int a, int b, const PotentialContext& ctx) {
  if (ctx.histograms == nullptr) return std::nullopt;
  auto ha = ctx.histograms->find(a);
  auto hb = ctx.histograms->find(b);
  if (ha == ctx.histograms->end() || hb == ctx.histograms->end()) return std::nullopt;
  return normalized_kernel(ha->second, hb->second);
}

struct HighOrderTerms {
  double smoothness = 0.0;  // gamma * sum xi
  double appearance = 0.0;  // epsilon * sum (theta - K)
  double total() const { return smoothness + appearance; }
};

/// Smoothness against a predictor refit on A* u H, plus appearance
/// consistency over all pairs of A* u H within the last 3 tau frames.
inline HighOrderTerms psi_h_terms(const Target& target, const Hypothesis& hyp, const PotentialContext& ctx) {
  const Config& cfg = ctx.config;
  HighOrderTerms out;
  std::map<int, int> merged = target.associations;
  for (int id : hyp.detections) merged[ctx.dets.at(id).frame] = id;

  if (!hyp.empty()) {
    const PolyPredictor pred = fit_predictor(merged, ctx.dets, cfg);
    double mean_h = 0.0;
    int n = 0;
    for (int f = ctx.t - cfg.tau; f <= ctx.t; ++f, ++n) mean_h += pred.predict(f).h;
    mean_h /= n;
    double xi_sum = 0.0;
    for (int id : hyp.detections) {
      const Detection& d = ctx.dets.at(id);
      const BoundingBox p = pred.predict(d.frame);
      const double dx = p.x - d.box.x, dy = p.y - d.box.y, dh = p.h - d.box.h;
      xi_sum += (dx * dx + dy * dy + dh * dh) / (mean_h * mean_h);
    }
    out.smoothness = cfg.gamma * xi_sum;
  }

  if (ctx.histograms != nullptr) {
    std::vector<int> recent;
    for (auto it = merged.lower_bound(ctx.t - 3 * cfg.tau); it != merged.end(); ++it) recent.push_back(it->second);
    double s = 0.0;
    for (std::size_t a = 0; a < recent.size(); ++a)
      for (std::size_t b = a + 1; b < recent.size(); ++b)
        if (auto k = appearance_kernel(recent[a], recent[b], ctx)) s += cfg.theta - *k;
    out.appearance = cfg.epsilon * s;
  }
  return out;
}

inline double psi_h(const Target& target, const Hypothesis& hyp, const PotentialContext& ctx) {
  return psi_h_terms(target, hyp, ctx).total();
}

/// Mutual exclusion between hypotheses of two different targets.
inline double phi(const Hypothesis& a, const Hypothesis& b, const PotentialContext& ctx) {
  if (a.empty() || b.empty()) return 0.0;
  std::map<int, const Detection*> by_frame;
  for (int id : a.detections) by_frame[ctx.dets.at(id).frame] = &ctx.dets.at(id);
  double s = 0.0;
  for (int id : b.detections) {
    const Detection& d = ctx.dets.at(id);
    if (d.frame < ctx.t - ctx.config.tau || d.frame > ctx.t) continue;
    auto it = by_frame.find(d.frame);
    if (it == by_frame.end()) continue;
    s += ctx.config.alpha * o2(it->second->box, d.box);
    if (it->second->id == d.id) s += ctx.config.beta;
  }
  return s;
}

/// Single-target consistency split into its parts.
struct TargetCost {
  double unary = 0.0;
  double pairwise = 0.0;
  double high_order = 0.0;
  double total() const { return unary + pairwise + high_order; }
};

/// `predictor` is the fit on the clean target (null when it is empty).
inline TargetCost target_cost(const Target& target, const Hypothesis& hyp, const PolyPredictor* predictor,
                              const PotentialContext& ctx) {
  TargetCost c;
  for (std::size_t a = 0; a < hyp.detections.size(); ++a) {
    const Detection& da = ctx.dets.at(hyp.detections[a]);
    c.unary += psi_u(target, da, predictor, ctx);
    for (std::size_t b = a + 1; b < hyp.detections.size(); ++b)
      c.pairwise += psi_p(da, ctx.dets.at(hyp.detections[b]), ctx);
  }
  c.high_order = psi_h(target, hyp, ctx);
  return c;
}

/// Energy of a full selection; `targets[m]` is the clean target of `sets[m]`
/// (empty for entering targets) and `states[m]` indexes its hypotheses.
inline EnergyBreakdown total_energy(std::span<const Target> targets, std::span<const HypothesisSet> sets,
                                    std::span<const int> states, const PotentialContext& ctx) {
  EnergyBreakdown e;
  std::vector<const Hypothesis*> chosen(sets.size());
  for (std::size_t m = 0; m < sets.size(); ++m) {
    chosen[m] = &sets[m].hypotheses.at(states[m]);
    std::optional<PolyPredictor> pred;
    if (!targets[m].empty()) pred = fit_predictor(targets[m], ctx.dets, ctx.config);
    const TargetCost c = target_cost(targets[m], *chosen[m], pred ? &*pred : nullptr, ctx);
    e.unary += c.unary;
    e.pairwise += c.pairwise;
    e.high_order += c.high_order;
  }
  for (std::size_t m = 0; m < sets.size(); ++m)
    for (std::size_t l = m + 1; l < sets.size(); ++l) e.exclusion += phi(*chosen[m], *chosen[l], ctx);
  e.total = e.unary + e.pairwise + e.high_order + e.exclusion;
  return e;
}

}  // namespace nomt
