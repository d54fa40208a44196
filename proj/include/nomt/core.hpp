#pragma once

// Shared domain types for the tracker: boxes, detections, targets and the
// global configuration that carries every model constant.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace nomt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when input data violates a documented precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Destination for non-fatal warnings; defaults to stderr. Replace with an
/// empty function to silence them.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

/// Axis-aligned box; (x, y) is the top-left corner, all values in pixels.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  double center_x() const { return x + 0.5 * w; }
  double center_y() const { return y + 0.5 * h; }

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }

  /// Closed-interval membership [x, x+w] x [y, y+h].
  bool contains(double px, double py) const {
    return px >= x && px <= x + w && py >= y && py <= y + h;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Detection {
  int frame = 0;
  BoundingBox box;
  double score = 0.0;
  int id = -1;
};

/// A labelled box belonging to a track (ground truth or tracker output).
struct TrackPoint {
  int frame = 0;
  int id = -1;
  BoundingBox box;
  double score = 1.0;
};

using Tracks = std::vector<TrackPoint>;

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  // Identical boxes must give exactly 1 regardless of rounding.
  if (a == b) return 1.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Squared-overlap score 2 * IoU^2; zero when either box is absent.
inline double o2(const BoundingBox* a, const BoundingBox* b) {
  if (a == nullptr || b == nullptr) return 0.0;
  const double v = iou(*a, *b);
  return 2.0 * v * v;
}

inline double o2(const BoundingBox& a, const BoundingBox& b) { return o2(&a, &b); }

/// Detections of one sequence, addressable by id and by frame.
class DetectionTable {
 public:
  DetectionTable() = default;
  explicit DetectionTable(std::span<const Detection> dets) {
    for (const auto& d : dets) add(d);
  }

  void add(const Detection& d) {
    if (d.frame < 0) throw InputError("detection with negative frame");
    if (!d.box.valid()) throw InputError("detection " + std::to_string(d.id) + " has an invalid box");
    if (index_.contains(d.id)) throw InputError("duplicate detection id " + std::to_string(d.id));
    index_.emplace(d.id, dets_.size());
    dets_.push_back(d);
    if (static_cast<std::size_t>(d.frame) >= by_frame_.size()) by_frame_.resize(d.frame + 1);
    by_frame_[d.frame].push_back(d.id);
  }

  const Detection& at(int id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InputError("unknown detection id " + std::to_string(id));
    return dets_[it->second];
  }

  const Detection* find(int id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &dets_[it->second];
  }

  bool contains(int id) const { return index_.contains(id); }

  /// Ids of detections at `frame`, in insertion order.
  std::span<const int> frame(int frame) const {
    if (frame < 0 || static_cast<std::size_t>(frame) >= by_frame_.size()) return {};
    return by_frame_[frame];
  }

  int frame_count() const { return static_cast<int>(by_frame_.size()); }
  std::size_t size() const { return dets_.size(); }
  const std::vector<Detection>& all() const { return dets_; }

 private:
  std::vector<Detection> dets_;
  std::unordered_map<int, std::size_t> index_;
  std::vector<std::vector<int>> by_frame_;
};

/// A target is the set of detections assigned to it, one per frame.
struct Target {
  int id = -1;
  std::map<int, int> associations;          // frame -> detection id
  std::map<int, int> last_assoc_time;       // detection id -> frame of last (re)association

  bool empty() const { return associations.empty(); }
  int last_frame() const { return associations.empty() ? -1 : associations.rbegin()->first; }
  int first_frame() const { return associations.empty() ? -1 : associations.begin()->first; }

  /// Detection id at `frame`, or -1.
  int at(int frame) const {
    auto it = associations.find(frame);
    return it == associations.end() ? -1 : it->second;
  }
};

struct Config {
  int tau = 10;
  double lambda = 20.0;
  double alpha = 0.5;
  double beta = 100.0;
  double gamma = 20.0;
  double epsilon = 0.4;
  double theta = 0.8;
  double eta = 0.98;
  std::vector<int> neighbor_set{1, 2, 5, 10, 20};
  double tracklet_affinity_min = 0.4;
  double gating_iou_min = 0.1;
  double fps = 10.0;
  int t_active = 10;  // frames; 1 s at `fps`
  int poly_order = 1;
  int grid_n = 4;

  // Engine settings without a counterpart in the model.
  int workers = 1;
  double jt_budget = 1e7;
  double trim_iou_min = 0.5;  // trimmed hypothesis variants keep detections at least this close to the prediction; 0 disables
  double kalman_measurement_std = 1.0;
  double kalman_process_std = 0.5;

  /// Sets fps and derives t_active as one second worth of frames.
  void set_fps(double frames_per_second) {
    fps = frames_per_second;
    t_active = std::max(1, static_cast<int>(std::lround(frames_per_second)));
  }

  int max_neighbor() const { return neighbor_set.empty() ? 0 : neighbor_set.back(); }

  bool in_neighbor_set(int dt) const {
    return std::binary_search(neighbor_set.begin(), neighbor_set.end(), dt);
  }

  /// Frame gaps the affinity model must cover: 1..tau plus the neighbour set.
  std::vector<int> model_gaps() const {
    std::vector<int> gaps;
    for (int dt = 1; dt <= tau; ++dt) gaps.push_back(dt);
    for (int dt : neighbor_set)
      if (dt > tau) gaps.push_back(dt);
    return gaps;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw InputError("invalid config: " + what); };
    if (tau < 1) fail("tau must be >= 1");
    if (grid_n < 1) fail("grid_n must be >= 1");
    for (double v : {lambda, alpha, beta, gamma, epsilon, theta, eta})
      if (!(v >= 0.0)) fail("weights must be non-negative");
    if (!std::is_sorted(neighbor_set.begin(), neighbor_set.end())) fail("neighbor_set must be sorted");
    for (int dt : neighbor_set)
      if (dt < 1) fail("neighbor_set entries must be >= 1");
    if (poly_order < 0 || poly_order > 3) fail("poly_order must be in [0, 3]");
    if (!(fps > 0.0)) fail("fps must be positive");
    if (t_active < 0) fail("t_active must be >= 0");
    if (workers < 1) fail("workers must be >= 1");
    if (trim_iou_min < 0.0 || trim_iou_min > 1.0) fail("trim_iou_min must be in [0, 1]");
  }
};

}  // namespace nomt
