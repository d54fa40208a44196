#pragma once

// Aggregated local flow descriptor (ALFD) and the learned affinity built on it.
//
// For a detection pair (d_i, d_j) every trajectory that lies inside d_i at
// t_i and still exists at t_j votes into a 2-level spatial histogram: the
// anchor cell (G x G grid of d_i) times the target bin (G x G grid of d_j plus
// a "near" and a "far" outside bin). Both directions are summed and divided
// by |K(i,j)| + |K(j,i)| + lambda, so the L1 norm stays below one.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nomt/core.hpp"
#include "nomt/ipt.hpp"
#include "nomt/parallel.hpp"

namespace nomt {

class ModelError : public Error {
 public:
  using Error::Error;
};

struct RelativeLocation {
  double rx = 0.0;
  double ry = 0.0;
};

inline RelativeLocation relative_location(const BoundingBox& box, Point2 p) {
  return {(p.x - box.x) / box.w, (p.y - box.y) / box.h};
}

inline int descriptor_size(int grid) { return grid * grid * (grid * grid + 2); }

/// Interior cell of a point inside `box`; r = 1.0 is clamped into the last cell.
inline int anchor_cell(const BoundingBox& box, Point2 p, int grid) {
  const auto r = relative_location(box, p);
  const int cx = std::clamp(static_cast<int>(std::floor(grid * r.rx)), 0, grid - 1);
  const int cy = std::clamp(static_cast<int>(std::floor(grid * r.ry)), 0, grid - 1);
  return cx + grid * cy;
}

/// Target-side bin: an interior cell, G^2 for the neighbourhood margin
/// (closer than w/4 horizontally and h/4 vertically), G^2+1 beyond it.
inline int target_bin(const BoundingBox& box, Point2 p, int grid) {
  if (box.contains(p.x, p.y)) return anchor_cell(box, p, grid);
  const double dx = std::max({0.0, box.x - p.x, p.x - box.right()});
  const double dy = std::max({0.0, box.y - p.y, p.y - box.bottom()});
  if (dx < 0.25 * box.w && dy < 0.25 * box.h) return grid * grid;
  return grid * grid + 1;
}

/// Trajectories inside a detection at its frame, with their anchor cells.
struct DetectionSupport {
  struct Member {
    const Ipt* ipt;
    int cell;
  };
  std::vector<Member> members;
};

inline DetectionSupport detection_support(const Detection& d, const IptStore& store, int grid) {
  DetectionSupport s;
  for (const auto& sample : store.points_at(d.frame)) {
    if (!d.box.contains(sample.p.x, sample.p.y)) continue;
    s.members.push_back({&store.trajectories()[sample.index], anchor_cell(d.box, sample.p, grid)});
  }
  return s;
}

/// Adds the votes of `from`'s support towards `to` into `counts`; returns the
/// number of contributing trajectories.
inline int accumulate_votes(const DetectionSupport& from, const Detection& to, int grid, std::span<double> counts) {
  const int target_bins = grid * grid + 2;
  int n = 0;
  for (const auto& m : from.members) {
    auto p = m.ipt->at(to.frame);
    if (!p) continue;
    counts[m.cell * target_bins + target_bin(to.box, *p, grid)] += 1.0;
    ++n;
  }
  return n;
}

/// Raw vote counts of the one-directional descriptor from d_i to d_j.
inline std::vector<double> unidirectional(const Detection& d_i, const Detection& d_j, const IptStore& store,
                                          int grid = 4) {
  std::vector<double> counts(descriptor_size(grid), 0.0);
  accumulate_votes(detection_support(d_i, store, grid), d_j, grid, counts);
  return counts;
}

struct AlfdDescriptor {
  std::vector<double> bins;
  int support_count = 0;

  double l1() const {
    double s = 0.0;
    for (double b : bins) s += b;
    return s;
  }
};

/// Symmetric descriptor from precomputed supports.
inline AlfdDescriptor descriptor(const DetectionSupport& s_i, const Detection& d_i, const DetectionSupport& s_j,
                                 const Detection& d_j, int grid, double lambda) {
  AlfdDescriptor out;
  std::vector<double> forward(descriptor_size(grid), 0.0);
  std::vector<double> backward(descriptor_size(grid), 0.0);
  out.support_count = accumulate_votes(s_i, d_j, grid, forward) + accumulate_votes(s_j, d_i, grid, backward);
  const double n = out.support_count + lambda;
  out.bins.resize(forward.size());
  for (std::size_t k = 0; k < forward.size(); ++k) out.bins[k] = (forward[k] + backward[k]) / n;
  return out;
}

inline AlfdDescriptor descriptor(const Detection& d_i, const Detection& d_j, const IptStore& store, int grid = 4,
                                 double lambda = 20.0) {
  return descriptor(detection_support(d_i, store, grid), d_i, detection_support(d_j, store, grid), d_j, grid,
                    lambda);
}

/// Learned weight vectors, one per frame gap.
class AlfdModel {
 public:
  explicit AlfdModel(int grid = 4) : grid_(grid) {}

  int grid() const { return grid_; }

  void set(int dt, std::vector<double> w) {
    if (static_cast<int>(w.size()) != descriptor_size(grid_))
      throw ModelError("weight vector for dt=" + std::to_string(dt) + " has wrong length");
    weights_[dt] = std::move(w);
  }

  bool has(int dt) const { return weights_.contains(dt); }

  const std::vector<double>& weights(int dt) const {
    auto it = weights_.find(dt);
    if (it == weights_.end()) throw ModelError("no affinity model trained for dt=" + std::to_string(dt));
    return it->second;
  }

  std::vector<int> gaps() const {
    std::vector<int> out;
    for (const auto& [dt, w] : weights_) out.push_back(dt);
    return out;
  }

  const std::map<int, std::vector<double>>& all() const { return weights_; }

  /// Inner product of w_dt with the descriptor.
  double score(int dt, const AlfdDescriptor& rho) const {
    const auto& w = weights(dt);
    double a = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) a += w[k] * rho.bins[k];
    return a;
  }

  friend bool operator==(const AlfdModel&, const AlfdModel&) = default;

 private:
  int grid_;
  std::map<int, std::vector<double>> weights_;
};

inline double affinity(const AlfdModel& model, const Detection& d_i, const Detection& d_j, const IptStore& store,
                       double lambda = 20.0) {
  const int dt = std::abs(d_j.frame - d_i.frame);
  if (!model.has(dt)) throw ModelError("no affinity model trained for dt=" + std::to_string(dt));
  return model.score(dt, descriptor(d_i, d_j, store, model.grid(), lambda));
}

// ---------------------------------------------------------------------------
// Weight learning by margin-weighted voting.

struct DetectionLabel {
  int id = -1;          // ground-truth id, -1 when unmatched
  double overlap = 0.0; // best IoU with a ground-truth box of the same frame
};

/// Labels each detection with the best-overlapping ground-truth id when the
/// overlap exceeds `threshold`.
inline std::vector<DetectionLabel> label_detections(std::span<const Detection> dets, const Tracks& gt,
                                                    double threshold = 0.5) {
  std::map<int, std::vector<const TrackPoint*>> gt_by_frame;
  for (const auto& g : gt) gt_by_frame[g.frame].push_back(&g);
  std::vector<DetectionLabel> labels(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    auto it = gt_by_frame.find(dets[i].frame);
    if (it == gt_by_frame.end()) continue;
    DetectionLabel best;
    for (const TrackPoint* g : it->second) {
      const double o = iou(dets[i].box, g->box);
      if (o > best.overlap) best = {g->id, o};
    }
    labels[i] = {best.overlap > threshold ? best.id : -1, best.overlap};
  }
  return labels;
}

/// Signed margin of a training pair: positive for the same target, negative
/// otherwise, scaled by both localisation qualities.
inline double pair_margin(double o_i, double o_j, bool same_id) {
  const double m = (o_i - 0.5) * (o_j - 0.5);
  return same_id ? m : -m;
}

/// Accumulates the weighted votes behind w_dt over one or more training
/// sequences. Only pairs where both detections are matched to ground truth
/// contribute.
class WeightAccumulator {
 public:
  WeightAccumulator(int dt, int grid = 4)
      : dt_(dt), grid_(grid), numerator_(descriptor_size(grid), 0.0), denominator_(descriptor_size(grid), 0.0) {}

  void add(std::span<const Detection> dets, const Tracks& gt, const IptStore& store) {
    const int size = descriptor_size(grid_);
    const auto labels = label_detections(dets, gt);
    std::map<int, std::vector<std::size_t>> by_frame;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (labels[i].id >= 0) by_frame[dets[i].frame].push_back(i);

    std::map<std::size_t, DetectionSupport> supports;
    auto support = [&](std::size_t k) -> const DetectionSupport& {
      auto it = supports.find(k);
      if (it == supports.end()) it = supports.emplace(k, detection_support(dets[k], store, grid_)).first;
      return it->second;
    };

    std::vector<double> votes(size);
    for (const auto& [frame, members] : by_frame) {
      auto partners = by_frame.find(frame + dt_);
      if (partners == by_frame.end()) continue;
      for (std::size_t i : members) {
        for (std::size_t j : partners->second) {
          const double m = pair_margin(labels[i].overlap, labels[j].overlap, labels[i].id == labels[j].id);
          if (m == 0.0) continue;
          ++pairs_;
          std::fill(votes.begin(), votes.end(), 0.0);
          accumulate_votes(support(i), dets[j], grid_, votes);
          accumulate_votes(support(j), dets[i], grid_, votes);
          for (int k = 0; k < size; ++k) {
            if (votes[k] == 0.0) continue;
            numerator_[k] += m * votes[k];
            denominator_[k] += std::abs(m) * votes[k];
          }
        }
      }
    }
  }

  /// Elementwise quotient, so every weight lies in [-1, 1]; bins without
  /// votes get weight 0.
  std::vector<double> weights() const {
    if (pairs_ == 0) warn("learn_weights: no labelled pairs for dt=" + std::to_string(dt_) + "; returning zero weights");
    std::vector<double> w(numerator_.size(), 0.0);
    for (std::size_t k = 0; k < w.size(); ++k)
      if (denominator_[k] > 0.0) w[k] = std::clamp(numerator_[k] / denominator_[k], -1.0, 1.0);
    return w;
  }

  std::size_t pairs() const { return pairs_; }

 private:
  int dt_;
  int grid_;
  std::vector<double> numerator_;
  std::vector<double> denominator_;
  std::size_t pairs_ = 0;
};

/// Learns w_dt from the labelled detections of one sequence.
inline std::vector<double> learn_weights(std::span<const Detection> dets, const Tracks& gt, const IptStore& store,
                                         int dt, int grid = 4) {
  WeightAccumulator acc(dt, grid);
  acc.add(dets, gt, store);
  return acc.weights();
}

/// One labelled training sequence.
struct TrainingSequence {
  std::span<const Detection> detections;
  const Tracks* ground_truth = nullptr;
  const IptStore* store = nullptr;
};

/// Learns one weight vector per gap in `gaps` from all sequences, in
/// parallel across gaps.
inline AlfdModel learn_model(std::span<const TrainingSequence> sequences, std::span<const int> gaps, int grid = 4,
                             int workers = 1) {
  std::vector<std::vector<double>> weights(gaps.size());
  parallel_for(gaps.size(), workers, [&](std::size_t k) {
    WeightAccumulator acc(gaps[k], grid);
    for (const auto& s : sequences) acc.add(s.detections, *s.ground_truth, *s.store);
    weights[k] = acc.weights();
  });
  AlfdModel model(grid);
  for (std::size_t k = 0; k < gaps.size(); ++k) model.set(gaps[k], std::move(weights[k]));
  return model;
}

inline AlfdModel learn_model(std::span<const Detection> dets, const Tracks& gt, const IptStore& store,
                             std::span<const int> gaps, int grid = 4, int workers = 1) {
  const TrainingSequence one{dets, &gt, &store};
  return learn_model(std::span<const TrainingSequence>(&one, 1), gaps, grid, workers);
}

}  // namespace nomt
