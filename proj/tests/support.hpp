#pragma once

// Helpers shared by the unit tests and the acceptance suite.

#include <random>
#include <vector>

#include "nomt/nomt.hpp"

namespace nomt::support {

/// Feeds every frame of a bundle to a tracker in order.
template <class Tracker>
void run_sequence(Tracker& tracker, const SequenceBundle& b) {
  const DetectionTable all(b.detections);
  std::vector<Detection> frame;
  for (int t = 0; t < b.frames; ++t) {
    frame.clear();
    for (int id : all.frame(t)) frame.push_back(all.at(id));
    tracker.step(t, frame);
  }
}

/// Model learned on one generated training sequence.
inline AlfdModel train_model(const ScenarioSpec& spec, const Config& config = {}) {
  const auto seq = generate(spec);
  const auto& b = seq.bundle;
  return learn_model(b.detections, b.ground_truth, *b.ipts, config.model_gaps(), config.grid_n);
}

/// Final output of a tracker as track points, filtered as for evaluation.
template <class Tracker>
Tracks final_tracks(const Tracker& tracker) {
  return to_tracks(finalize(tracker.targets(), tracker.detections()), tracker.detections());
}

inline BoundingBox random_box(std::mt19937_64& rng, double extent = 100.0) {
  std::uniform_real_distribution<double> pos(0.0, extent), size(1.0, extent / 2);
  return {pos(rng), pos(rng), size(rng), size(rng)};
}

}  // namespace nomt::support
