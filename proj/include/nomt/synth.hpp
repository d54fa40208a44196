#pragma once

// Synthetic scenes: ground-truth motion, noisy detections, simulated
// interest-point trajectories and appearance histograms.
//
// Targets live in world coordinates; the camera drifts linearly, so image
// position = world position - drift * t. A target is visible (annotated and
// detectable) while its box lies fully inside the image and it is not
// occluded. IPTs are created inside visible boxes and then follow their
// host rigidly; a share of them (the outlier rate) follows the background or
// another target instead. IPTs of an occluded target move over to the
// target in front of it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "nomt/appearance.hpp"
#include "nomt/core.hpp"
#include "nomt/io.hpp"
#include "nomt/ipt.hpp"

namespace nomt {

enum class Motion {
  ConstantVelocity,  // free 2D motion, reflected at the arena border
  Lanes,             // one horizontal lane per target, no overlaps
  Polynomial,        // constant acceleration, speed clamped, reflected
  CrossingPairs,     // pairs walking towards each other on a shared line
};

inline std::string to_string(Motion m) {
  switch (m) {
    case Motion::ConstantVelocity: return "constant_velocity";
    case Motion::Lanes: return "lanes";
    case Motion::Polynomial: return "polynomial";
    case Motion::CrossingPairs: return "crossing_pairs";
  }
  return "?";
}

inline Motion parse_motion(const std::string& s) {
  for (Motion m : {Motion::ConstantVelocity, Motion::Lanes, Motion::Polynomial, Motion::CrossingPairs})
    if (to_string(m) == s) return m;
  throw InputError("unknown motion model '" + s + "'");
}

/// Target `target` is hidden in frames [begin, end).
struct Occlusion {
  int target = 0;
  int begin = 0;
  int end = 0;
};

struct ScenarioSpec {
  std::uint64_t seed = 1;
  int n_targets = 10;
  int frames = 200;
  double width = 1280.0;
  double height = 720.0;
  double fps = 10.0;
  Motion motion = Motion::ConstantVelocity;
  double speed = 4.0;        // px/frame
  double acceleration = 0.05;  // px/frame^2, polynomial motion only
  double min_height = 80.0;
  double max_height = 160.0;
  double aspect = 0.41;      // width / height
  double band_top = 0.0;     // box tops are placed in [band_top, band_bottom] * image height
  double band_bottom = 1.0;
  double drift_x = 0.0;      // camera drift, px/frame
  double drift_y = 0.0;

  // Detections.
  double pos_std = 0.0;
  double size_std = 0.0;
  double miss_rate = 0.0;
  double fp_rate = 0.0;      // expected false positives per frame
  double score_mean = 1.0;
  double score_std = 0.0;
  double fp_score_mean = -0.3;
  double fp_score_std = 0.3;

  // Interest points.
  int ipt_density = 40;      // points per box
  int background_points = 100;
  double ipt_noise_std = 0.0;
  double outlier_rate = 0.0;
  double ipt_loss_rate = 0.0;  // per trajectory and frame

  // Occlusions.
  int occlusion_length = 5;  // frames the back target of a crossing pair is hidden
  std::vector<Occlusion> occlusions;

  // Appearance.
  bool histograms = true;
  int palette_size = 6;
  double hist_noise = 0.0;

  void validate() const {
    auto fail = [](const std::string& what) { throw InputError("invalid scenario: " + what); };
    if (n_targets < 0 || frames < 1) fail("n_targets >= 0 and frames >= 1 required");
    if (!(width > 0 && height > 0)) fail("arena must be non-empty");
    if (!(min_height > 0 && max_height >= min_height && aspect > 0)) fail("bad box size range");
    if (max_height >= height || max_height * aspect >= width) fail("boxes must fit in the image");
    for (double r : {miss_rate, outlier_rate, ipt_loss_rate})
      if (r < 0.0 || r > 1.0) fail("rates must be in [0, 1]");
    for (double s : {pos_std, size_std, score_std, fp_score_std, ipt_noise_std, hist_noise, fp_rate, speed})
      if (s < 0.0) fail("standard deviations and rates must be >= 0");
    if (band_top < 0.0 || band_bottom > 1.0 || band_top > band_bottom) fail("band must satisfy 0 <= top <= bottom <= 1");
    if (ipt_density < 0 || background_points < 0 || palette_size < 1 || occlusion_length < 0) fail("bad counts");
    for (const auto& o : occlusions)
      if (o.target < 0 || o.target >= n_targets || o.begin > o.end) fail("bad occlusion interval");
  }
};

using Rgb = std::array<std::uint8_t, 3>;

struct SyntheticSequence {
  SequenceBundle bundle;
  std::vector<std::array<Rgb, 2>> colors;     // per target: upper and lower body colour
  std::vector<std::vector<std::optional<BoundingBox>>> boxes;  // [target][frame], visible boxes only
  std::vector<std::vector<double>> depth;     // [target][frame], larger is closer to the camera
};

namespace synth_detail {

inline double round6(double v) { return std::round(v * 1e6) / 1e6; }

inline BoundingBox round6(const BoundingBox& b) { return {round6(b.x), round6(b.y), round6(b.w), round6(b.h)}; }

inline const std::vector<Rgb>& palette() {
  static const std::vector<Rgb> colors{{200, 30, 30},  {30, 160, 40},  {40, 60, 200},  {220, 200, 40},
                                       {150, 50, 170}, {30, 170, 170}, {230, 120, 30}, {90, 90, 90},
                                       {240, 240, 240}, {120, 70, 30}};
  return colors;
}

inline int ab_index(const Rgb& c) {
  const Lab lab = srgb_to_lab(c[0], c[1], c[2]);
  return ab_bin(lab.a) * ColorHistogram::kChannelBins + ab_bin(lab.b);
}

/// Noise-free histogram of a box painted upper half `top`, lower half `bottom`.
inline ColorHistogram signature(const std::array<Rgb, 2>& look) {
  ColorHistogram h;
  const int top = ab_index(look[0]), bottom = ab_index(look[1]);
  for (int cy = 0; cy < 3; ++cy)
    for (int cx = 0; cx < 3; ++cx) {
      const int base = ColorHistogram::kCellBins * (1 + cx + 3 * cy);
      if (cy == 0) h.bins[base + top] += 1.0;
      if (cy == 2) h.bins[base + bottom] += 1.0;
      if (cy == 1) {
        h.bins[base + top] += 0.5;
        h.bins[base + bottom] += 0.5;
      }
    }
  h.bins[top] += 0.5;
  h.bins[bottom] += 0.5;
  h.normalize();
  return h;
}

struct SimIpt {
  int id;
  int host;      // target index, or -1 for the background
  double rx, ry; // relative location in the host box, or world position for the background
};

}  // namespace synth_detail

inline SyntheticSequence generate(const ScenarioSpec& spec) {
  using namespace synth_detail;
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

  const int n = spec.n_targets;
  const int frames = spec.frames;
  const double cam_x0 = spec.drift_x < 0 ? -spec.drift_x * frames : 0.0;
  const double cam_y0 = spec.drift_y < 0 ? -spec.drift_y * frames : 0.0;
  auto cam_x = [&](int t) { return cam_x0 + spec.drift_x * t; };
  auto cam_y = [&](int t) { return cam_y0 + spec.drift_y * t; };
  const double world_w = spec.width + std::abs(spec.drift_x) * frames;
  const double world_h = spec.height + std::abs(spec.drift_y) * frames;

  SyntheticSequence out;
  out.boxes.assign(n, std::vector<std::optional<BoundingBox>>(frames));
  out.depth.assign(n, std::vector<double>(frames, 0.0));
  std::vector<std::vector<BoundingBox>> world(n, std::vector<BoundingBox>(frames));
  std::vector<Occlusion> occlusions = spec.occlusions;

  // Ground-truth motion in world coordinates.
  auto reflect = [](double& pos, double& vel, double lo, double hi) {
    if (hi <= lo) {
      pos = lo;
      return;
    }
    for (int guard = 0; guard < 8 && (pos < lo || pos > hi); ++guard) {
      if (pos < lo) {
        pos = 2 * lo - pos;
        vel = std::abs(vel);
      } else if (pos > hi) {
        pos = 2 * hi - pos;
        vel = -std::abs(vel);
      }
    }
    pos = std::clamp(pos, lo, hi);
  };

  if (spec.motion == Motion::CrossingPairs) {
    const int pairs = n / 2;
    for (int p = 0; p < pairs; ++p) {
      const int a = 2 * p, b = 2 * p + 1;
      const double h = uniform(spec.min_height, spec.max_height);
      const double w = h * spec.aspect;
      // Each pair walks in its own horizontal band.
      const double band = (spec.band_bottom - spec.band_top) * spec.height / pairs;
      const double band_lo = spec.band_top * spec.height + band * p;
      const double band_hi = std::max(band_lo, band_lo + band - h * 1.05 - 5.0);
      const double y = uniform(band_lo, band_hi);
      const double v = uniform(0.75, 1.0) * std::max(spec.speed, 0.5);
      const int cross = static_cast<int>(uniform(0.35, 0.65) * frames);
      const double meet_x = uniform(0.3, 0.7) * spec.width + cam_x(cross) - 0.5 * w;
      for (int t = 0; t < frames; ++t) {
        const double dt = t - cross;
        // Target a walks right and stands slightly closer (front); b walks left.
        world[a][t] = {meet_x + v * dt, y + 4.0, w * 1.05, h * 1.05};
        world[b][t] = {meet_x - v * dt, y, w, h};
        out.depth[a][t] = 1.0;
        out.depth[b][t] = 0.0;
      }
      const int half = spec.occlusion_length / 2;
      if (spec.occlusion_length > 0) occlusions.push_back({b, cross - half, cross - half + spec.occlusion_length});
    }
    for (int k = 2 * pairs; k < n; ++k) {  // odd one out walks alone
      const double h = uniform(spec.min_height, spec.max_height);
      const double y = uniform(spec.band_top * spec.height, std::max(spec.band_top * spec.height, spec.band_bottom * spec.height - h - 1.0));
      double x = uniform(0.0, world_w - h * spec.aspect);
      double vx = (unit(rng) < 0.5 ? -1 : 1) * spec.speed;
      for (int t = 0; t < frames; ++t) {
        world[k][t] = {x, y, h * spec.aspect, h};
        x += vx;
        reflect(x, vx, 0.0, world_w - h * spec.aspect);
      }
    }
  } else {
    const int lanes = std::max(1, n);
    for (int k = 0; k < n; ++k) {
      const double h = uniform(spec.min_height, spec.max_height);
      const double w = h * spec.aspect;
      double x = 0.0, y = 0.0, vx = 0.0, vy = 0.0, ax = 0.0, ay = 0.0;
      double y_lo = spec.band_top * spec.height;
      double y_hi = std::max(y_lo, spec.band_bottom * spec.height - h - 1.0);
      if (spec.motion == Motion::Lanes) {
        const double lane = (spec.band_bottom - spec.band_top) * spec.height / lanes;
        y_lo = y_hi = spec.band_top * spec.height + lane * k + 0.5 * std::max(0.0, lane - h);
        x = uniform(0.0, world_w - w);
        vx = (unit(rng) < 0.5 ? -1 : 1) * uniform(0.5, 1.0) * spec.speed;
      } else {
        x = uniform(0.0, world_w - w);
        const double angle = uniform(0.0, 2.0 * std::numbers::pi);
        const double s = uniform(0.5, 1.0) * spec.speed;
        vx = s * std::cos(angle);
        vy = s * std::sin(angle);
        if (spec.motion == Motion::Polynomial) {
          const double b = uniform(0.0, 2.0 * std::numbers::pi);
          ax = spec.acceleration * std::cos(b);
          ay = spec.acceleration * std::sin(b);
        }
      }
      y = uniform(y_lo, y_hi);
      // The vertical extent of the world grows with vertical drift.
      const double world_y_hi = y_hi + (world_h - spec.height);
      for (int t = 0; t < frames; ++t) {
        world[k][t] = {x, y, w, h};
        out.depth[k][t] = y + h;
        x += vx;
        y += vy;
        vx += ax;
        vy += ay;
        const double s = std::hypot(vx, vy);
        if (s > 2.0 * spec.speed && s > 0) {
          vx *= 2.0 * spec.speed / s;
          vy *= 2.0 * spec.speed / s;
        }
        reflect(x, vx, 0.0, world_w - w);
        reflect(y, vy, y_lo, world_y_hi);
      }
    }
  }

  // Visibility in the image.
  std::vector<std::vector<char>> hidden(n, std::vector<char>(frames, 0));
  for (const auto& o : occlusions)
    for (int t = std::max(0, o.begin); t < std::min(frames, o.end); ++t) hidden[o.target][t] = 1;
  for (int k = 0; k < n; ++k)
    for (int t = 0; t < frames; ++t) {
      const auto& wb = world[k][t];
      const BoundingBox b = round6(BoundingBox{wb.x - cam_x(t), wb.y - cam_y(t), wb.w, wb.h});
      const bool inside = b.x >= 0 && b.y >= 0 && b.right() <= spec.width && b.bottom() <= spec.height;
      if (inside && !hidden[k][t]) out.boxes[k][t] = b;
    }

  // Looks.
  const auto& pal = palette();
  const int pal_n = std::min<int>(spec.palette_size, static_cast<int>(pal.size()));
  out.colors.resize(n);
  for (int k = 0; k < n; ++k) {
    out.colors[k][0] = pal[static_cast<std::size_t>(unit(rng) * pal_n) % pal_n];
    out.colors[k][1] = pal[static_cast<std::size_t>(unit(rng) * pal_n) % pal_n];
  }

  SequenceBundle& b = out.bundle;
  b.name = "synth-" + std::to_string(spec.seed);
  b.flavor = Flavor::Synth;
  b.fps = spec.fps;
  b.frames = frames;
  HistogramTable hists;
  auto noisy_histogram = [&](const ColorHistogram& base) {
    ColorHistogram h = base;
    if (spec.hist_noise > 0.0)
      for (double& v : h.bins) v += std::abs(gauss(rng)) * spec.hist_noise;
    h.normalize();
    for (double& v : h.bins) v = round6(v);
    return h;
  };

  // Ground truth and detections.
  std::poisson_distribution<int> fp_count(spec.fp_rate > 0 ? spec.fp_rate : 1.0);
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < n; ++k) {
      const auto& box = out.boxes[k][t];
      if (!box) continue;
      b.ground_truth.push_back({t, k, *box, 1.0});
      const bool missed = spec.miss_rate > 0.0 && unit(rng) < spec.miss_rate;
      if (missed) continue;
      BoundingBox d = *box;
      if (spec.pos_std > 0.0) {
        d.x += spec.pos_std * gauss(rng);
        d.y += spec.pos_std * gauss(rng);
      }
      if (spec.size_std > 0.0) {
        d.w = std::max(4.0, d.w + spec.size_std * gauss(rng));
        d.h = std::max(4.0, d.h + spec.size_std * gauss(rng));
      }
      const double score = spec.score_std > 0.0 ? spec.score_mean + spec.score_std * gauss(rng) : spec.score_mean;
      const int id = static_cast<int>(b.detections.size());
      b.detections.push_back({t, round6(d), round6(score), id});
      if (spec.histograms) hists.emplace(id, noisy_histogram(signature(out.colors[k])));
    }
    const int fps_here = spec.fp_rate > 0.0 ? fp_count(rng) : 0;
    for (int q = 0; q < fps_here; ++q) {
      const double h = uniform(spec.min_height, spec.max_height);
      const double w = h * spec.aspect;
      const BoundingBox d{uniform(0.0, spec.width - w), uniform(0.0, spec.height - h), w, h};
      const double score = spec.fp_score_mean + spec.fp_score_std * gauss(rng);
      const int id = static_cast<int>(b.detections.size());
      b.detections.push_back({t, round6(d), round6(score), id});
      if (spec.histograms) {
        const std::array<Rgb, 2> look{pal[static_cast<std::size_t>(unit(rng) * pal_n) % pal_n],
                                      pal[static_cast<std::size_t>(unit(rng) * pal_n) % pal_n]};
        hists.emplace(id, noisy_histogram(signature(look)));
      }
    }
  }
  if (spec.histograms) b.histograms = std::move(hists);

  // Interest-point trajectories.
  IptStore store;
  std::vector<SimIpt> live;  // trajectories alive at the previous frame
  auto host_box = [&](int k, int t) { return out.boxes[k][t]; };
  auto ideal = [&](const SimIpt& s, int t) -> std::optional<Point2> {
    if (s.host < 0) return Point2{s.rx - cam_x(t), s.ry - cam_y(t)};
    const auto& wb = world[s.host][t];
    return Point2{wb.x - cam_x(t) + s.rx * wb.w, wb.y - cam_y(t) + s.ry * wb.h};
  };
  auto in_image = [&](Point2 p) { return p.x >= 0 && p.y >= 0 && p.x <= spec.width && p.y <= spec.height; };
  auto observe = [&](Point2 p) {
    if (spec.ipt_noise_std > 0.0) {
      p.x += spec.ipt_noise_std * gauss(rng);
      p.y += spec.ipt_noise_std * gauss(rng);
    }
    return Point2{round6(p.x), round6(p.y)};
  };

  for (int t = 0; t < frames; ++t) {
    // Existing trajectories: follow host, transfer on occlusion, or end.
    std::vector<FlowPair> flows;
    std::vector<SimIpt> survivors;
    flows.reserve(live.size());
    for (SimIpt s : live) {
      const Point2 start = store.find(s.id)->samples().back();
      bool alive = !(spec.ipt_loss_rate > 0.0 && unit(rng) < spec.ipt_loss_rate);
      if (alive && s.host >= 0 && !host_box(s.host, t)) {
        // Host hidden or out of view: hand the point to a visible target in
        // front of it, otherwise lose it.
        const auto p = ideal(s, t);
        int taker = -1;
        if (hidden[s.host][t])
          for (int j = 0; j < n; ++j) {
            if (j == s.host || !host_box(j, t) || !host_box(j, t)->contains(p->x, p->y)) continue;
            if (out.depth[j][t] < out.depth[s.host][t]) continue;
            if (taker < 0 || out.depth[j][t] > out.depth[taker][t]) taker = j;
          }
        if (taker >= 0) {
          const auto& wb = world[taker][t];
          s.rx = (p->x + cam_x(t) - wb.x) / wb.w;
          s.ry = (p->y + cam_y(t) - wb.y) / wb.h;
          s.host = taker;
        } else {
          alive = false;
        }
      }
      std::optional<Point2> next;
      if (alive) {
        next = ideal(s, t);
        if (!in_image(*next)) alive = false;
      }
      if (!alive) {
        flows.push_back({s.id, start, {start.x + 50.0, start.y}});
        continue;
      }
      const Point2 fwd = observe(*next);
      flows.push_back({s.id, fwd, start});
      survivors.push_back(s);
    }

    // Candidate new points: top every visible box up to the density, plus
    // background points.
    std::vector<int> hosted(n, 0);
    for (const auto& s : survivors)
      if (s.host >= 0) ++hosted[s.host];
    std::vector<Point2> candidates;
    std::vector<SimIpt> pending;
    for (int k = 0; k < n; ++k) {
      const auto& box = host_box(k, t);
      if (!box) continue;
      const int need = spec.ipt_density - hosted[k];
      for (int q = 0; q < need; ++q) {
        const double rx = unit(rng), ry = unit(rng);
        const Point2 p{round6(box->x + rx * box->w), round6(box->y + ry * box->h)};
        SimIpt s{-1, k, rx, ry};
        if (spec.outlier_rate > 0.0 && unit(rng) < spec.outlier_rate) {
          // Outliers stick to the background, or to a random other target.
          int other = n > 1 ? static_cast<int>(unit(rng) * n) % n : k;
          if (other == k || unit(rng) < 0.5 || !host_box(other, t)) {
            s.host = -1;
            s.rx = p.x + cam_x(t);
            s.ry = p.y + cam_y(t);
          } else {
            const auto& wb = world[other][t];
            s.host = other;
            s.rx = (p.x + cam_x(t) - wb.x) / wb.w;
            s.ry = (p.y + cam_y(t) - wb.y) / wb.h;
          }
        }
        candidates.push_back(p);
        pending.push_back(s);
      }
    }
    int background = 0;
    for (const auto& s : survivors) background += s.host < 0;
    for (int q = background; q < spec.background_points; ++q) {
      const Point2 p{round6(uniform(0.0, spec.width)), round6(uniform(0.0, spec.height))};
      candidates.push_back(p);
      pending.push_back({-1, -1, p.x + cam_x(t), p.y + cam_y(t)});
    }

    const auto result = store.advance(t, candidates, flows);
    live = std::move(survivors);
    for (std::size_t k = 0; k < result.created.size(); ++k) {
      SimIpt s = pending[result.accepted[k]];
      s.id = result.created[k];
      live.push_back(s);
    }
  }
  b.ipts = std::move(store);
  return out;
}

/// Paints the visible targets of one frame as two-colour rectangles on a
/// grey background, far targets first.
inline RgbImage render(const SyntheticSequence& seq, int frame, int width, int height) {
  RgbImage img(width, height);
  std::fill(img.data.begin(), img.data.end(), std::uint8_t{128});
  std::vector<int> order;
  for (std::size_t k = 0; k < seq.boxes.size(); ++k)
    if (seq.boxes[k][frame]) order.push_back(static_cast<int>(k));
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return seq.depth[a][frame] < seq.depth[b][frame]; });
  for (int k : order) {
    const BoundingBox& box = *seq.boxes[k][frame];
    const int x0 = std::max(0, static_cast<int>(std::ceil(box.x)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(box.y)));
    const int x1 = std::min(width, static_cast<int>(std::ceil(box.right())));
    const int y1 = std::min(height, static_cast<int>(std::ceil(box.bottom())));
    for (int y = y0; y < y1; ++y) {
      const Rgb& c = (y - box.y) < 0.5 * box.h ? seq.colors[k][0] : seq.colors[k][1];
      for (int x = x0; x < x1; ++x) std::copy(c.begin(), c.end(), img.pixel(x, y));
    }
  }
  return img;
}

/// Scenario files use the configuration syntax: key=value per line.
inline ScenarioSpec parse_scenario(std::istream& in, const std::string& name = "<scenario>") {
  detail::LineReader r(in, name);
  ScenarioSpec s;
  std::string line;
  while (r.next(line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("expected key=value");
    const std::string key{detail::trim(std::string_view(line).substr(0, eq))};
    const std::string value{detail::trim(std::string_view(line).substr(eq + 1))};
    auto real = [&] { return r.number(value); };
    auto integer = [&] { return r.integer(value); };
    if (key == "seed") s.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "n_targets") s.n_targets = integer();
    else if (key == "frames") s.frames = integer();
    else if (key == "width") s.width = real();
    else if (key == "height") s.height = real();
    else if (key == "fps") s.fps = real();
    else if (key == "motion") s.motion = parse_motion(value);
    else if (key == "speed") s.speed = real();
    else if (key == "acceleration") s.acceleration = real();
    else if (key == "min_height") s.min_height = real();
    else if (key == "max_height") s.max_height = real();
    else if (key == "aspect") s.aspect = real();
    else if (key == "band_top") s.band_top = real();
    else if (key == "band_bottom") s.band_bottom = real();
    else if (key == "drift_x") s.drift_x = real();
    else if (key == "drift_y") s.drift_y = real();
    else if (key == "pos_std") s.pos_std = real();
    else if (key == "size_std") s.size_std = real();
    else if (key == "miss_rate") s.miss_rate = real();
    else if (key == "fp_rate") s.fp_rate = real();
    else if (key == "score_mean") s.score_mean = real();
    else if (key == "score_std") s.score_std = real();
    else if (key == "fp_score_mean") s.fp_score_mean = real();
    else if (key == "fp_score_std") s.fp_score_std = real();
    else if (key == "ipt_density") s.ipt_density = integer();
    else if (key == "background_points") s.background_points = integer();
    else if (key == "ipt_noise_std") s.ipt_noise_std = real();
    else if (key == "outlier_rate") s.outlier_rate = real();
    else if (key == "ipt_loss_rate") s.ipt_loss_rate = real();
    else if (key == "occlusion_length") s.occlusion_length = integer();
    else if (key == "occlusion") {
      // occlusion=target,begin,end
      const auto f = detail::split(value, ',');
      if (f.size() != 3) r.fail("occlusion expects target,begin,end");
      s.occlusions.push_back({r.integer(f[0]), r.integer(f[1]), r.integer(f[2])});
    } else if (key == "histograms") s.histograms = integer() != 0;
    else if (key == "palette_size") s.palette_size = integer();
    else if (key == "hist_noise") s.hist_noise = real();
    else r.fail("unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

inline ScenarioSpec parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_scenario(in, path);
}

inline void write_scenario(std::ostream& out, const ScenarioSpec& s) {
  out << std::fixed << std::setprecision(6);
  out << "seed=" << s.seed << "\nn_targets=" << s.n_targets << "\nframes=" << s.frames << "\nwidth=" << s.width
      << "\nheight=" << s.height << "\nfps=" << s.fps << "\nmotion=" << to_string(s.motion) << "\nspeed=" << s.speed
      << "\nacceleration=" << s.acceleration << "\nmin_height=" << s.min_height << "\nmax_height=" << s.max_height
      << "\naspect=" << s.aspect << "\nband_top=" << s.band_top << "\nband_bottom=" << s.band_bottom
      << "\ndrift_x=" << s.drift_x << "\ndrift_y=" << s.drift_y << "\npos_std=" << s.pos_std
      << "\nsize_std=" << s.size_std << "\nmiss_rate=" << s.miss_rate << "\nfp_rate=" << s.fp_rate
      << "\nscore_mean=" << s.score_mean << "\nscore_std=" << s.score_std << "\nfp_score_mean=" << s.fp_score_mean
      << "\nfp_score_std=" << s.fp_score_std << "\nipt_density=" << s.ipt_density
      << "\nbackground_points=" << s.background_points << "\nipt_noise_std=" << s.ipt_noise_std
      << "\noutlier_rate=" << s.outlier_rate << "\nipt_loss_rate=" << s.ipt_loss_rate
      << "\nocclusion_length=" << s.occlusion_length << '\n';
  for (const auto& o : s.occlusions) out << "occlusion=" << o.target << ',' << o.begin << ',' << o.end << '\n';
  out << "histograms=" << (s.histograms ? 1 : 0) << "\npalette_size=" << s.palette_size << "\nhist_noise=" << s.hist_noise
      << '\n';
}

/// Named scenarios used by the acceptance suite and the command line tool.
///   noiseless       10 targets in lanes, 200 frames, perfect detections and IPTs
///   crossing        8 crossing pairs, 150 frames, 5-frame occlusions, noisy
///   moving_camera   30 targets in a crowded band, camera drifting 6 px/frame
///   throughput      20 freely moving targets, 1000 frames, mild noise
inline ScenarioSpec preset_scenario(const std::string& name, std::uint64_t seed = 1) {
  ScenarioSpec s;
  s.seed = seed;
  if (name == "noiseless") {
    s.motion = Motion::Lanes;
    s.n_targets = 10;
    s.frames = 200;
    s.min_height = 40.0;
    s.max_height = 60.0;
  } else if (name == "crossing") {
    s.motion = Motion::CrossingPairs;
    s.n_targets = 16;
    s.frames = 150;
    s.min_height = 50.0;
    s.max_height = 70.0;
    s.speed = 3.0;
    s.occlusion_length = 5;
    s.pos_std = 2.0;
    s.size_std = 2.0;
    s.miss_rate = 0.2;
    s.fp_rate = 0.5;
    s.score_std = 0.3;
    s.ipt_noise_std = 2.0;
    s.outlier_rate = 0.5;
    s.ipt_loss_rate = 0.02;
  } else if (name == "moving_camera") {
    s.motion = Motion::ConstantVelocity;
    s.n_targets = 30;
    s.frames = 200;
    s.min_height = 60.0;
    s.max_height = 100.0;
    s.speed = 5.0;
    s.drift_x = 6.0;
    s.band_top = 0.35;
    s.band_bottom = 0.55;
    s.pos_std = 2.0;
    s.size_std = 2.0;
    s.miss_rate = 0.1;
    s.score_std = 0.3;
    s.ipt_noise_std = 1.0;
    s.outlier_rate = 0.2;
    s.ipt_loss_rate = 0.02;
    s.hist_noise = 0.05;
  } else if (name == "throughput") {
    s.motion = Motion::ConstantVelocity;
    s.n_targets = 20;
    s.frames = 1000;
    s.min_height = 60.0;
    s.max_height = 120.0;
    s.speed = 3.0;
    s.pos_std = 1.0;
    s.size_std = 1.0;
    s.miss_rate = 0.05;
    s.fp_rate = 0.5;
    s.score_std = 0.3;
    s.ipt_noise_std = 0.5;
    s.outlier_rate = 0.1;
    s.ipt_loss_rate = 0.02;
  } else {
    throw InputError("unknown scenario preset '" + name + "'");
  }
  s.validate();
  return s;
}

inline std::vector<std::string> preset_names() { return {"noiseless", "crossing", "moving_camera", "throughput"}; }

}  // namespace nomt
