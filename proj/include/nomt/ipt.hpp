#pragma once

// Interest point trajectories (IPTs) and the store that owns them.
//
// The store is fed either by ingesting complete trajectories (file input) or
// frame by frame through advance(), which applies the trajectory lifecycle:
// new points must keep a minimum spacing to live trajectories, and a
// trajectory whose forward and backward flow disagree is terminated.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nomt/core.hpp"

namespace nomt {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Flow of one live trajectory from t-1 to t. `forward` is the endpoint at t;
/// `backward` is where the backward flow started at `forward` lands at t-1.
struct FlowPair {
  int id = -1;
  Point2 forward;
  Point2 backward;
};

class Ipt {
 public:
  Ipt() = default;
  Ipt(int id, int first_frame) : id_(id), first_frame_(first_frame) {}
  Ipt(int id, int first_frame, std::vector<Point2> samples)
      : id_(id), first_frame_(first_frame), samples_(std::move(samples)) {}

  int id() const { return id_; }
  int first_frame() const { return first_frame_; }
  int last_frame() const { return first_frame_ + static_cast<int>(samples_.size()) - 1; }
  bool alive_at(int frame) const { return frame >= first_frame_ && frame <= last_frame(); }

  /// Location at `frame`; empty outside the trajectory's lifetime.
  std::optional<Point2> at(int frame) const {
    if (!alive_at(frame)) return std::nullopt;
    return samples_[frame - first_frame_];
  }

  const std::vector<Point2>& samples() const { return samples_; }
  void extend(Point2 p) { samples_.push_back(p); }

  friend bool operator==(const Ipt&, const Ipt&) = default;

 private:
  int id_ = -1;
  int first_frame_ = 0;
  std::vector<Point2> samples_;
};

struct IptRules {
  double min_spacing = 4.0;   // px; closer candidates are dropped
  double max_fb_error = 10.0; // px; larger forward/backward disagreement terminates
};

struct AdvanceResult {
  std::vector<int> created;
  std::vector<std::size_t> accepted;  // index into new_points of each created trajectory
  std::vector<int> terminated;
};

class IptStore {
 public:
  struct FrameSample {
    std::uint32_t index;  // into trajectories()
    Point2 p;
  };

  IptStore() = default;
  explicit IptStore(IptRules rules) : rules_(rules) {}

  const IptRules& rules() const { return rules_; }
  const std::vector<Ipt>& trajectories() const { return trajectories_; }
  std::size_t size() const { return trajectories_.size(); }

  const Ipt* find(int id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &trajectories_[it->second];
  }

  /// Last frame with any sample, or -1 for an empty store.
  int current_frame() const { return current_frame_; }

  /// Samples present at `frame`.
  std::span<const FrameSample> points_at(int frame) const {
    if (frame < 0 || static_cast<std::size_t>(frame) >= frames_.size()) return {};
    return frames_[frame];
  }

  /// Ingests a complete trajectory.
  void add(Ipt ipt) {
    if (ipt.samples().empty()) throw InputError("IPT " + std::to_string(ipt.id()) + " has no samples");
    if (ipt.first_frame() < 0) throw InputError("IPT " + std::to_string(ipt.id()) + " starts before frame 0");
    if (by_id_.contains(ipt.id())) throw InputError("duplicate IPT id " + std::to_string(ipt.id()));
    const auto index = static_cast<std::uint32_t>(trajectories_.size());
    by_id_.emplace(ipt.id(), index);
    next_id_ = std::max(next_id_, ipt.id() + 1);
    current_frame_ = std::max(current_frame_, ipt.last_frame());
    if (static_cast<std::size_t>(ipt.last_frame()) >= frames_.size()) frames_.resize(ipt.last_frame() + 1);
    for (int f = ipt.first_frame(); f <= ipt.last_frame(); ++f) frames_[f].push_back({index, *ipt.at(f)});
    trajectories_.push_back(std::move(ipt));
  }

  /// Moves the store to `frame`: terminates trajectories failing the
  /// forward/backward check, extends the rest, then starts trajectories for
  /// candidate points that keep the minimum spacing (checked greedily in
  /// input order against live and already accepted points).
  AdvanceResult advance(int frame, std::span<const Point2> new_points, std::span<const FlowPair> flows) {
    const bool first = current_frame_ < 0;
    if (!first && frame != current_frame_ + 1)
      throw InputError("advance expects frame " + std::to_string(current_frame_ + 1) + ", got " + std::to_string(frame));
    if (frame < 0) throw InputError("advance to negative frame");

    AdvanceResult result;
    std::vector<std::uint32_t> live;
    if (!first) {
      for (const auto& s : points_at(current_frame_)) live.push_back(s.index);
    }
    std::unordered_map<int, const FlowPair*> flow_by_id;
    for (const auto& f : flows) {
      const Ipt* ipt = find(f.id);
      if (ipt == nullptr || first || ipt->last_frame() != current_frame_)
        throw InputError("flow supplied for unknown or inactive IPT " + std::to_string(f.id));
      flow_by_id[f.id] = &f;
    }
    if (flow_by_id.size() != live.size()) throw InputError("flows must be given for every live IPT");

    if (static_cast<std::size_t>(frame) >= frames_.size()) frames_.resize(frame + 1);
    SpacingGrid grid(rules_.min_spacing);
    for (std::uint32_t index : live) {
      Ipt& ipt = trajectories_[index];
      const FlowPair& f = *flow_by_id.at(ipt.id());
      const Point2 start = ipt.samples().back();
      if (distance(start, f.backward) > rules_.max_fb_error) {
        result.terminated.push_back(ipt.id());
        continue;
      }
      ipt.extend(f.forward);
      frames_[frame].push_back({index, f.forward});
      grid.insert(f.forward);
    }

    for (std::size_t k = 0; k < new_points.size(); ++k) {
      const Point2 p = new_points[k];
      if (grid.too_close(p)) continue;
      grid.insert(p);
      const int id = next_id_++;
      const auto index = static_cast<std::uint32_t>(trajectories_.size());
      trajectories_.emplace_back(id, frame, std::vector<Point2>{p});
      by_id_.emplace(id, index);
      frames_[frame].push_back({index, p});
      result.created.push_back(id);
      result.accepted.push_back(k);
    }
    current_frame_ = frame;
    return result;
  }

  /// Trajectories located inside `box` at t_i (closed boundary) that also
  /// exist at t_j.
  std::vector<const Ipt*> query(const BoundingBox& box, int t_i, int t_j) const {
    std::vector<const Ipt*> out;
    for (const auto& s : points_at(t_i)) {
      const Ipt& ipt = trajectories_[s.index];
      if (box.contains(s.p.x, s.p.y) && ipt.alive_at(t_j)) out.push_back(&ipt);
    }
    return out;
  }

  std::vector<const Ipt*> query(const Detection& d_i, int t_j) const { return query(d_i.box, d_i.frame, t_j); }

  friend bool operator==(const IptStore& a, const IptStore& b) {
    if (a.size() != b.size()) return false;
    for (const auto& ipt : a.trajectories_) {
      const Ipt* other = b.find(ipt.id());
      if (other == nullptr || !(*other == ipt)) return false;
    }
    return true;
  }

 private:
  // Uniform hash grid answering "is any inserted point closer than r".
  class SpacingGrid {
   public:
    explicit SpacingGrid(double r) : r_(r), cell_(std::max(r, 1e-9)) {}
    void insert(Point2 p) { cells_[key(cx(p.x), cx(p.y))].push_back(p); }
    bool too_close(Point2 p) const {
      const std::int64_t gx = cx(p.x), gy = cx(p.y);
      for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          auto it = cells_.find(key(gx + dx, gy + dy));
          if (it == cells_.end()) continue;
          for (const Point2& q : it->second)
            if (distance(p, q) < r_) return true;
        }
      return false;
    }

   private:
    std::int64_t cx(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
    static std::uint64_t key(std::int64_t gx, std::int64_t gy) {
      return (static_cast<std::uint64_t>(gx) << 32) ^ (static_cast<std::uint64_t>(gy) & 0xffffffffULL);
    }
    double r_;
    double cell_;
    std::unordered_map<std::uint64_t, std::vector<Point2>> cells_;
  };

  IptRules rules_;
  std::vector<Ipt> trajectories_;
  std::unordered_map<int, std::uint32_t> by_id_;
  std::vector<std::vector<FrameSample>> frames_;
  int current_frame_ = -1;
  int next_id_ = 0;
};

}  // namespace nomt
