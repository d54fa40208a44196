#pragma once

// Near-online tracking loop, the online Hungarian baseline, output filtering,
// Kalman smoothing and latency accounting.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nomt/alfd.hpp"
#include "nomt/appearance.hpp"
#include "nomt/assignment.hpp"
#include "nomt/core.hpp"
#include "nomt/hypo.hpp"
#include "nomt/infer.hpp"
#include "nomt/ipt.hpp"
#include "nomt/parallel.hpp"
#include "nomt/potentials.hpp"

namespace nomt {

// ---------------------------------------------------------------------------
// Affinity cache.

/// Precomputes a_A for every detection pair the tracker can ask for: each new
/// frame is paired with the frames `gaps` before it. Supports (IPTs inside a
/// box) are computed once per detection.
class AffinityCache {
 public:
  AffinityCache(const AlfdModel& model, const IptStore& store, const Config& config, std::vector<int> gaps)
      : model_(model), store_(store), config_(config), gaps_(std::move(gaps)) {
    for (int dt : gaps_)
      if (!model_.has(dt)) throw ModelError("model has no weights for frame gap " + std::to_string(dt));
  }

  void add_frame(int t, const DetectionTable& dets) {
    const auto fresh = dets.frame(t);
    std::vector<DetectionSupport> supports(fresh.size());
    parallel_for(fresh.size(), config_.workers, [&](std::size_t k) {
      supports[k] = detection_support(dets.at(fresh[k]), store_, model_.grid());
    });
    for (std::size_t k = 0; k < fresh.size(); ++k) supports_[fresh[k]] = std::move(supports[k]);

    std::vector<std::pair<int, int>> pairs;
    for (int dt : gaps_) {
      if (t - dt < 0) continue;
      for (int old : dets.frame(t - dt))
        for (int id : fresh) pairs.emplace_back(old, id);
    }
    std::vector<double> values(pairs.size());
    parallel_for(pairs.size(), config_.workers,
                 [&](std::size_t k) { values[k] = compute(dets, pairs[k].first, pairs[k].second); });
    auto& bucket = buckets_[t];
    bucket.reserve(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) bucket.emplace(key(pairs[k].first, pairs[k].second), values[k]);
    dets_ = &dets;
  }

  /// Drops pairs whose later detection precedes `pair_frame` and supports of
  /// detections before `support_frame`.
  void evict(int pair_frame, int support_frame) {
    buckets_.erase(buckets_.begin(), buckets_.lower_bound(pair_frame));
    if (dets_ == nullptr) return;
    std::erase_if(supports_, [&](const auto& kv) { return dets_->at(kv.first).frame < support_frame; });
  }

  /// a_A(a, b); pairs outside the cache are computed on the fly.
  double operator()(int a, int b) const {
    const int fa = dets_->at(a).frame, fb = dets_->at(b).frame;
    auto bucket = buckets_.find(std::max(fa, fb));
    if (bucket != buckets_.end()) {
      auto it = bucket->second.find(key(a, b));
      if (it != bucket->second.end()) return it->second;
    }
    return compute(*dets_, a, b);
  }

 private:
  static std::uint64_t key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }

  double compute(const DetectionTable& dets, int a, int b) const {
    const Detection& da = dets.at(a);
    const Detection& db = dets.at(b);
    const int dt = std::abs(da.frame - db.frame);
    const auto& w = model_.weights(dt);
    auto sa = supports_.find(a);
    auto sb = supports_.find(b);
    const DetectionSupport support_a = sa != supports_.end() ? sa->second : detection_support(da, store_, model_.grid());
    const DetectionSupport support_b = sb != supports_.end() ? sb->second : detection_support(db, store_, model_.grid());
    const int grid = model_.grid();
    const int target_bins = grid * grid + 2;
    double dot = 0.0;
    int count = 0;
    auto vote = [&](const DetectionSupport& from, const Detection& to) {
      for (const auto& m : from.members) {
        auto p = m.ipt->at(to.frame);
        if (!p) continue;
        dot += w[m.cell * target_bins + target_bin(to.box, *p, grid)];
        ++count;
      }
    };
    vote(support_a, db);
    vote(support_b, da);
    return dot / (count + config_.lambda);
  }

  const AlfdModel& model_;
  const IptStore& store_;
  const Config& config_;
  std::vector<int> gaps_;
  const DetectionTable* dets_ = nullptr;
  std::unordered_map<int, DetectionSupport> supports_;
  std::map<int, std::unordered_map<std::uint64_t, double>> buckets_;  // keyed by the later frame
};

// ---------------------------------------------------------------------------
// Near-online tracker.

/// Per-frame run log. Times are wall-clock seconds.
struct StepStats {
  int frame = 0;
  int tracklets = 0;
  int hypotheses = 0;
  int nodes = 0;
  int edges = 0;
  int components = 0;
  int largest_component = 0;
  int fallbacks = 0;
  double energy = 0.0;
  double time_affinity = 0.0;
  double time_hypotheses = 0.0;
  double time_inference = 0.0;
};

/// The window problem handed to an observer right after inference, before
/// the selection is applied. `clean[m]` is the clean target of `sets[m]`,
/// restricted to the associations the potentials can read.
struct WindowProblem {
  int t = 0;
  std::span<const Target> clean;
  std::span<const HypothesisSet> sets;
  const AssociationGraph* graph = nullptr;
  const Solution* solution = nullptr;
  const PotentialContext* context = nullptr;
};

/// Clean target keeping only what the potentials read at frame t: the last
/// 2 tau associations (predictor fits) and everything newer than
/// t - tau - max(max neighbour gap, 3 tau).
inline Target clean_target_view(const Target& target, int t, const Config& config) {
  Target clean;
  clean.id = target.id;
  const int limit = t - config.tau;
  const int recent = t - config.tau - std::max(config.max_neighbor(), 3 * config.tau);
  auto end = target.associations.lower_bound(limit);
  auto it = end;
  int kept = 0;
  while (it != target.associations.begin()) {
    --it;
    if (kept >= 2 * config.tau && it->first < recent) break;
    clean.associations.emplace_hint(clean.associations.begin(), it->first, it->second);
    ++kept;
  }
  return clean;
}

namespace detail {

/// Detections of `h` already held by `target`.
inline int shared_detections(const Hypothesis& h, const Target& target, const DetectionTable& dets) {
  int n = 0;
  for (int id : h.detections)
    if (target.at(dets.at(id).frame) == id) ++n;
  return n;
}

}  // namespace detail

class NomtTracker {
 public:
  using Observer = std::function<void(const WindowProblem&)>;

  NomtTracker(Config config, const AlfdModel& model, const IptStore& store,
              const HistogramTable* histograms = nullptr)
      : config_(std::move(config)),
        model_(model),
        store_(store),
        histograms_(histograms),
        cache_(model_, store_, config_, config_.model_gaps()) {
    config_.validate();
  }

  void set_observer(Observer obs) { observer_ = std::move(obs); }

  /// Processes frame t with its detections (all must carry frame t).
  void step(int t, std::span<const Detection> frame_dets) {
    if (t <= frame_) throw InputError("frame " + std::to_string(t) + " is not after frame " + std::to_string(frame_));
    for (const auto& d : frame_dets) {
      if (d.frame != t) throw InputError("detection " + std::to_string(d.id) + " does not belong to frame " + std::to_string(t));
      dets_.add(d);
    }
    frame_ = t;
    StepStats stats;
    stats.frame = t;
    const Config& cfg = config_;
    using clock = std::chrono::steady_clock;

    auto t0 = clock::now();
    cache_.add_frame(t, dets_);
    cache_.evict(t - cfg.tau, t - std::max(cfg.tau, cfg.max_neighbor()));
    auto t1 = clock::now();

    PotentialContext ctx{dets_, cfg, [this](int a, int b) { return cache_(a, b); }, histograms_, t};

    // Active targets, their clean views and predictors.
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < targets_.size(); ++i)
      if (is_active(targets_[i], t, cfg)) active.push_back(i);
    const std::size_t n_old = active.size();

    const auto window = window_detections(dets_, t, cfg);
    const auto tracklets = grow_all(t, window);

    std::vector<Target> clean(n_old);
    std::vector<std::optional<PolyPredictor>> clean_pred(n_old);
    std::vector<HypothesisSet> sets(n_old);
    parallel_for(n_old, cfg.workers, [&](std::size_t k) {
      const Target& target = targets_[active[k]];
      clean[k] = clean_target_view(target, t, cfg);
      if (!clean[k].empty()) clean_pred[k] = fit_predictor(clean[k], dets_, cfg);
      sets[k] = *hypotheses_for_target(target, tracklets, fit_predictor(target, dets_, cfg), t, dets_, cfg);
    });
    for (auto& s : new_target_sets(tracklets, dets_)) {
      sets.push_back(std::move(s));
      clean.emplace_back();
      clean_pred.emplace_back();
    }
    const std::size_t n_nodes = sets.size();
    stats.tracklets = static_cast<int>(tracklets.size());
    for (const auto& s : sets) stats.hypotheses += static_cast<int>(s.hypotheses.size());
    auto t2 = clock::now();

    // Potential tables and inference.
    std::vector<std::vector<double>> costs(n_nodes);
    parallel_for(n_nodes, cfg.workers, [&](std::size_t m) {
      const PolyPredictor* pred = clean_pred[m] ? &*clean_pred[m] : nullptr;
      costs[m].reserve(sets[m].hypotheses.size());
      for (const auto& h : sets[m].hypotheses) costs[m].push_back(target_cost(clean[m], h, pred, ctx).total());
    });
    const auto candidates = candidate_pairs(sets, window);
    const AssociationGraph graph = build_graph(costs, candidates, [&](int m, int k, int l, int kk) {
      return phi(sets[m].hypotheses[k], sets[l].hypotheses[kk], ctx);
    });
    SolveStats solve_stats;
    const Solution solution = solve(graph, cfg.workers, cfg.jt_budget, &solve_stats);
    auto t3 = clock::now();

    if (observer_) observer_({t, clean, sets, &graph, &solution, &ctx});

    apply(t, active, clean, sets, solution.states);

    stats.nodes = static_cast<int>(n_nodes);
    stats.edges = static_cast<int>(graph.edges.size());
    stats.components = solve_stats.components;
    stats.largest_component = solve_stats.largest_component;
    stats.fallbacks = solve_stats.fallbacks;
    stats.energy = solution.energy;
    stats.time_affinity = std::chrono::duration<double>(t1 - t0).count();
    stats.time_hypotheses = std::chrono::duration<double>(t2 - t1).count();
    stats.time_inference = std::chrono::duration<double>(t3 - t2).count();
    log_.push_back(stats);
  }

  const std::vector<Target>& targets() const { return targets_; }
  const DetectionTable& detections() const { return dets_; }
  const std::vector<StepStats>& log() const { return log_; }
  const Config& config() const { return config_; }
  int frame() const { return frame_; }

 private:
  std::vector<Tracklet> grow_all(int t, std::span<const int> window) {
    // Dense affinity matrix over the window so growth does not hit the cache.
    std::unordered_map<int, int> local;
    local.reserve(window.size());
    for (std::size_t k = 0; k < window.size(); ++k) local.emplace(window[k], static_cast<int>(k));
    const std::size_t n = window.size();
    std::vector<double> dense(n * n, 0.0);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        if (dets_.at(window[a]).frame == dets_.at(window[b]).frame) continue;
        dense[a * n + b] = dense[b * n + a] = cache_(window[a], window[b]);
      }
    auto aff = [&](int a, int b) { return dense[local.at(a) * n + local.at(b)]; };
    return generate_tracklets(t, dets_, std::span<const Target>(targets_), aff, config_);
  }

  /// Node pairs whose hypotheses can interact through the exclusion term:
  /// some detections at a shared frame are identical or overlap.
  std::vector<std::pair<int, int>> candidate_pairs(const std::vector<HypothesisSet>& sets,
                                                   std::span<const int> window) const {
    std::unordered_map<int, std::vector<int>> owners;
    for (std::size_t m = 0; m < sets.size(); ++m) {
      std::set<int> ids;
      for (const auto& h : sets[m].hypotheses) ids.insert(h.detections.begin(), h.detections.end());
      for (int id : ids) owners[id].push_back(static_cast<int>(m));
    }
    std::set<std::pair<int, int>> pairs;
    auto link = [&](int a, int b) {
      auto oa = owners.find(a), ob = owners.find(b);
      if (oa == owners.end() || ob == owners.end()) return;
      for (int m : oa->second)
        for (int l : ob->second)
          if (m != l) pairs.emplace(std::min(m, l), std::max(m, l));
    };
    std::map<int, std::vector<int>> by_frame;
    for (int id : window) by_frame[dets_.at(id).frame].push_back(id);
    for (const auto& [frame, ids] : by_frame)
      for (std::size_t a = 0; a < ids.size(); ++a) {
        link(ids[a], ids[a]);
        for (std::size_t b = a + 1; b < ids.size(); ++b)
          if (iou(dets_.at(ids[a]).box, dets_.at(ids[b]).box) > 0.0) link(ids[a], ids[b]);
      }
    return {pairs.begin(), pairs.end()};
  }

  /// Augments targets with the selected hypotheses. Nodes without a clean
  /// history (targets born inside the window and entering tracklets) are
  /// interchangeable in the energy, so their selections are matched back to
  /// the existing identities they overlap most.
  void apply(int t, const std::vector<std::size_t>& active, const std::vector<Target>& clean,
             const std::vector<HypothesisSet>& sets, std::span<const int> states) {
    const Config& cfg = config_;
    const std::size_t n_old = active.size();
    std::vector<const Hypothesis*> chosen(sets.size());
    for (std::size_t m = 0; m < sets.size(); ++m) chosen[m] = &sets[m].hypotheses[states[m]];

    std::vector<std::size_t> owner(sets.size(), SIZE_MAX);  // node -> index into `active`, or new
    for (std::size_t m = 0; m < n_old; ++m)
      if (!clean[m].empty()) owner[m] = m;

    std::vector<std::size_t> floating;  // nodes with a non-empty selection and no clean history
    for (std::size_t m = 0; m < sets.size(); ++m)
      if (owner[m] == SIZE_MAX && !chosen[m]->empty()) floating.push_back(m);
    std::vector<std::size_t> orphans;  // existing targets without clean history
    for (std::size_t k = 0; k < n_old; ++k)
      if (clean[k].empty()) orphans.push_back(k);

    struct Match {
      int shared;
      int target_id;
      std::size_t node;
      std::size_t orphan;
    };
    std::vector<Match> matches;
    for (std::size_t node : floating)
      for (std::size_t k : orphans) {
        const int s = detail::shared_detections(*chosen[node], targets_[active[k]], dets_);
        if (s > 0) matches.push_back({s, targets_[active[k]].id, node, k});
      }
    std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
      if (a.shared != b.shared) return a.shared > b.shared;
      if (a.target_id != b.target_id) return a.target_id < b.target_id;
      return a.node < b.node;
    });
    std::set<std::size_t> taken;
    for (const auto& mt : matches) {
      if (owner[mt.node] != SIZE_MAX || taken.contains(mt.orphan)) continue;
      owner[mt.node] = mt.orphan;
      taken.insert(mt.orphan);
    }
    for (std::size_t node : floating)
      if (owner[node] == SIZE_MAX && node < n_old && !taken.contains(node)) {
        owner[node] = node;
        taken.insert(node);
      }

    // Selection per existing active target.
    std::vector<const Hypothesis*> selected(n_old, nullptr);
    for (std::size_t m = 0; m < sets.size(); ++m)
      if (owner[m] != SIZE_MAX) selected[owner[m]] = chosen[m];

    static const Hypothesis kEmpty;
    for (std::size_t k = 0; k < n_old; ++k) {
      Target& target = targets_[active[k]];
      const Target previous = target;
      const Hypothesis& h = selected[k] ? *selected[k] : kEmpty;
      target.associations.erase(target.associations.lower_bound(t - cfg.tau), target.associations.end());
      std::erase_if(target.last_assoc_time, [&](const auto& kv) { return dets_.at(kv.first).frame >= t - cfg.tau; });
      for (int id : h.detections) {
        const int f = dets_.at(id).frame;
        target.associations[f] = id;
        auto prev = previous.last_assoc_time.find(id);
        target.last_assoc_time[id] =
            previous.at(f) == id && prev != previous.last_assoc_time.end() ? prev->second : t;
      }
    }

    // Entering targets, ordered by first frame then tracklet score.
    std::vector<std::size_t> entering;
    for (std::size_t m = n_old; m < sets.size(); ++m)
      if (owner[m] == SIZE_MAX && !chosen[m]->empty()) entering.push_back(m);
    std::sort(entering.begin(), entering.end(), [&](std::size_t a, std::size_t b) {
      const auto& ha = chosen[a]->detections;
      const auto& hb = chosen[b]->detections;
      const int fa = dets_.at(ha.front()).frame, fb = dets_.at(hb.front()).frame;
      if (fa != fb) return fa < fb;
      const double sa = tracklet_score({ha}, dets_), sb = tracklet_score({hb}, dets_);
      if (sa != sb) return sa > sb;
      return ha < hb;
    });
    for (std::size_t m : entering) {
      Target target;
      target.id = next_id_++;
      for (int id : chosen[m]->detections) {
        target.associations[dets_.at(id).frame] = id;
        target.last_assoc_time[id] = t;
      }
      targets_.push_back(std::move(target));
    }
    std::erase_if(targets_, [](const Target& target) { return target.empty(); });
  }

  Config config_;
  const AlfdModel& model_;
  const IptStore& store_;
  const HistogramTable* histograms_;
  AffinityCache cache_;
  DetectionTable dets_;
  std::vector<Target> targets_;
  std::vector<StepStats> log_;
  Observer observer_;
  int frame_ = -1;
  int next_id_ = 0;
};

// ---------------------------------------------------------------------------
// Online Hungarian baseline.

class HmTracker {
 public:
  static constexpr double kMaxCost = -0.5;

  HmTracker(Config config, const AlfdModel& model, const IptStore& store)
      : config_(std::move(config)), model_(model), store_(store), cache_(model_, store_, config_, config_.neighbor_set) {
    config_.validate();
  }

  void step(int t, std::span<const Detection> frame_dets) {
    if (t <= frame_) throw InputError("frame " + std::to_string(t) + " is not after frame " + std::to_string(frame_));
    for (const auto& d : frame_dets) {
      if (d.frame != t) throw InputError("detection " + std::to_string(d.id) + " does not belong to frame " + std::to_string(t));
      dets_.add(d);
    }
    frame_ = t;
    cache_.add_frame(t, dets_);
    cache_.evict(t, t - config_.max_neighbor());
    PotentialContext ctx{dets_, config_, [this](int a, int b) { return cache_(a, b); }, nullptr, t};

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < targets_.size(); ++i)
      if (is_active(targets_[i], t, config_)) rows.push_back(i);
    const auto cols = dets_.frame(t);

    std::vector<char> matched(cols.size(), 0);
    if (!rows.empty() && !cols.empty()) {
      const auto cost = costs(rows, cols, ctx);
      const auto assignment = solve_assignment(cost);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const int c = assignment[r];
        if (c < 0 || cost[r][c] > kMaxCost) continue;
        Target& target = targets_[rows[r]];
        target.associations[t] = cols[c];
        target.last_assoc_time[cols[c]] = t;
        matched[c] = 1;
      }
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (matched[c] || dets_.at(cols[c]).score <= 0.0) continue;
      Target target;
      target.id = next_id_++;
      target.associations[t] = cols[c];
      target.last_assoc_time[cols[c]] = t;
      targets_.push_back(std::move(target));
    }
  }

  /// psi_u cost matrix between the given targets and detection ids.
  std::vector<std::vector<double>> costs(std::span<const std::size_t> rows, std::span<const int> cols,
                                         const PotentialContext& ctx) const {
    std::vector<std::vector<double>> cost(rows.size(), std::vector<double>(cols.size()));
    parallel_for(rows.size(), config_.workers, [&](std::size_t r) {
      const Target& target = targets_[rows[r]];
      const PolyPredictor pred = fit_predictor(target, dets_, config_);
      for (std::size_t c = 0; c < cols.size(); ++c) cost[r][c] = psi_u(target, dets_.at(cols[c]), &pred, ctx);
    });
    return cost;
  }

  const std::vector<Target>& targets() const { return targets_; }
  const DetectionTable& detections() const { return dets_; }
  int frame() const { return frame_; }

 private:
  Config config_;
  const AlfdModel& model_;
  const IptStore& store_;
  AffinityCache cache_;
  DetectionTable dets_;
  std::vector<Target> targets_;
  int frame_ = -1;
  int next_id_ = 0;
};

// ---------------------------------------------------------------------------
// Output.

inline double median_score(const Target& target, const DetectionTable& dets) {
  std::vector<double> s;
  for (const auto& [frame, id] : target.associations) s.push_back(dets.at(id).score);
  if (s.empty()) return 0.0;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

/// Drops targets with a single detection or a negative median score and
/// renumbers the rest 0, 1, 2, ... in their current order.
inline std::vector<Target> finalize(std::span<const Target> targets, const DetectionTable& dets) {
  std::vector<Target> out;
  for (const auto& target : targets) {
    if (target.associations.size() <= 1 || median_score(target, dets) < 0.0) continue;
    out.push_back(target);
    out.back().id = static_cast<int>(out.size()) - 1;
  }
  return out;
}

/// Detection boxes of every target as track points.
inline Tracks to_tracks(std::span<const Target> targets, const DetectionTable& dets) {
  Tracks out;
  for (const auto& target : targets)
    for (const auto& [frame, id] : target.associations) {
      const Detection& d = dets.at(id);
      out.push_back({frame, target.id, d.box, d.score});
    }
  std::sort(out.begin(), out.end(), [](const TrackPoint& a, const TrackPoint& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
  return out;
}

struct KalmanParams {
  double measurement_std = 1.0;
  double process_std = 0.5;
};

/// Constant-velocity Kalman filter with a Rauch-Tung-Striebel backward pass
/// over (x, y, w, h) and their velocities. Returns one box per frame of the
/// target's span; frames without a detection are predicted.
inline std::vector<std::pair<int, BoundingBox>> smooth(const Target& target, const DetectionTable& dets,
                                                       const KalmanParams& params = {}) {
  using Vec8 = Eigen::Matrix<double, 8, 1>;
  using Mat8 = Eigen::Matrix<double, 8, 8>;
  using Vec4 = Eigen::Matrix<double, 4, 1>;
  if (target.empty()) throw InputError("cannot smooth an empty target");

  auto measure = [&](int id) {
    const auto& b = dets.at(id).box;
    return Vec4(b.x, b.y, b.w, b.h);
  };
  const int f0 = target.first_frame();
  const int f1 = target.last_frame();
  const int n = f1 - f0 + 1;

  Mat8 F = Mat8::Identity();
  F.topRightCorner<4, 4>().setIdentity();
  const double q = params.process_std * params.process_std;
  Mat8 Q = Mat8::Zero();
  Q.topLeftCorner<4, 4>() = Eigen::Matrix4d::Identity() * (0.25 * q);
  Q.topRightCorner<4, 4>() = Eigen::Matrix4d::Identity() * (0.5 * q);
  Q.bottomLeftCorner<4, 4>() = Eigen::Matrix4d::Identity() * (0.5 * q);
  Q.bottomRightCorner<4, 4>() = Eigen::Matrix4d::Identity() * q;
  const double r = params.measurement_std * params.measurement_std;
  const Eigen::Matrix4d R = Eigen::Matrix4d::Identity() * r;
  Eigen::Matrix<double, 4, 8> H = Eigen::Matrix<double, 4, 8>::Zero();
  H.leftCols<4>().setIdentity();

  Vec8 x = Vec8::Zero();
  x.head<4>() = measure(target.associations.begin()->second);
  Mat8 P = Mat8::Zero();
  P.topLeftCorner<4, 4>() = R;
  P.bottomRightCorner<4, 4>() = Eigen::Matrix4d::Identity() * (2.0 * r + 100.0 * q);
  if (target.associations.size() >= 2) {
    auto second = std::next(target.associations.begin());
    x.tail<4>() = (measure(second->second) - x.head<4>()) / (second->first - f0);
  }

  std::vector<Vec8> xp(n), xf(n);
  std::vector<Mat8> Pp(n), Pf(n);
  for (int k = 0; k < n; ++k) {
    if (k > 0) {
      x = F * x;
      P = F * P * F.transpose() + Q;
    }
    xp[k] = x;
    Pp[k] = P;
    const int id = target.at(f0 + k);
    if (id >= 0) {
      const Vec4 innovation = measure(id) - x.head<4>();
      const Eigen::Matrix4d S = P.topLeftCorner<4, 4>() + R;
      const Eigen::Matrix<double, 8, 4> K = P.leftCols<4>() * S.inverse();
      x += K * innovation;
      P = (Mat8::Identity() - K * H) * P;
    }
    xf[k] = x;
    Pf[k] = P;
  }

  std::vector<Vec8> xs(n);
  xs[n - 1] = xf[n - 1];
  for (int k = n - 2; k >= 0; --k) {
    const Mat8 C = Pf[k] * F.transpose() * Pp[k + 1].inverse();
    xs[k] = xf[k] + C * (xs[k + 1] - xp[k + 1]);
  }

  std::vector<std::pair<int, BoundingBox>> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) out.emplace_back(f0 + k, BoundingBox{xs[k](0), xs[k](1), xs[k](2), xs[k](3)});
  return out;
}

/// Smoothed per-frame boxes of every target as track points. Gap frames get
/// the score of the preceding detection.
inline Tracks smooth_tracks(std::span<const Target> targets, const DetectionTable& dets, const KalmanParams& params = {}) {
  Tracks out;
  for (const auto& target : targets) {
    double score = 0.0;
    for (const auto& [frame, box] : smooth(target, dets, params)) {
      const int id = target.at(frame);
      if (id >= 0) score = dets.at(id).score;
      BoundingBox b = box;
      b.w = std::max(b.w, 1e-3);
      b.h = std::max(b.h, 1e-3);
      out.push_back({frame, target.id, b, score});
    }
  }
  std::sort(out.begin(), out.end(), [](const TrackPoint& a, const TrackPoint& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
  return out;
}

struct LatencyReport {
  std::vector<int> latencies;  // one per associated detection, in frames
  double mean = 0.0;
  double stddev = 0.0;
  double zero_fraction = 0.0;
  int max = 0;
};

inline LatencyReport latency_report(std::span<const Target> targets, const DetectionTable& dets) {
  LatencyReport rep;
  for (const auto& target : targets)
    for (const auto& [frame, id] : target.associations) {
      auto it = target.last_assoc_time.find(id);
      const int last = it == target.last_assoc_time.end() ? frame : it->second;
      rep.latencies.push_back(last - dets.at(id).frame);
    }
  if (rep.latencies.empty()) return rep;
  const double n = static_cast<double>(rep.latencies.size());
  int zeros = 0;
  for (int l : rep.latencies) {
    rep.mean += l;
    zeros += l == 0;
    rep.max = std::max(rep.max, l);
  }
  rep.mean /= n;
  for (int l : rep.latencies) rep.stddev += (l - rep.mean) * (l - rep.mean);
  rep.stddev = std::sqrt(rep.stddev / n);
  rep.zero_fraction = zeros / n;
  return rep;
}

}  // namespace nomt
