#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "nomt/tracker.hpp"
#include "support.hpp"

using namespace nomt;

namespace {

AlfdModel zero_model(const Config& cfg = {}) {
  AlfdModel m;
  for (int dt : cfg.model_gaps()) m.set(dt, std::vector<double>(descriptor_size(4), 0.0));
  return m;
}

Detection det(int id, int frame, double x, double score = 1.0) { return {frame, {x, 100, 40, 80}, score, id}; }

Target target_with(int id, std::map<int, int> assoc) {
  Target t;
  t.id = id;
  t.associations = std::move(assoc);
  for (const auto& [f, d] : t.associations) t.last_assoc_time[d] = f;
  return t;
}

}  // namespace

// Hungarian baseline. With a zero affinity model and a perfect constant
// prediction one frame later, psi_u = -1.96 - s.

TEST(HmBaseline, CostBelowLimitIsMatched) {
  const IptStore store;
  const auto model = zero_model();
  HmTracker hm(Config{}, model, store);
  hm.step(0, std::vector<Detection>{det(0, 0, 0)});
  hm.step(1, std::vector<Detection>{det(1, 1, 0, -0.96)});  // cost -1.0
  ASSERT_EQ(hm.targets().size(), 1u);
  EXPECT_EQ(hm.targets()[0].at(1), 1);
}

TEST(HmBaseline, CostAboveLimitIsVoided) {
  const IptStore store;
  const auto model = zero_model();
  HmTracker hm(Config{}, model, store);
  hm.step(0, std::vector<Detection>{det(0, 0, 0)});
  hm.step(1, std::vector<Detection>{det(1, 1, 0, -1.56)});  // cost -0.4
  ASSERT_EQ(hm.targets().size(), 1u);
  EXPECT_EQ(hm.targets()[0].at(1), -1);
}

TEST(HmBaseline, ClearDiagonalIsAssigned) {
  const IptStore store;
  const auto model = zero_model();
  const Config cfg;
  HmTracker hm(cfg, model, store);
  hm.step(0, std::vector<Detection>{det(0, 0, 0), det(1, 0, 500)});
  const std::vector<Detection> next{det(2, 1, 500), det(3, 1, 0)};
  hm.step(1, next);
  ASSERT_EQ(hm.targets().size(), 2u);
  EXPECT_EQ(hm.targets()[0].at(1), 3);
  EXPECT_EQ(hm.targets()[1].at(1), 2);
}

TEST(HmBaseline, UnmatchedConfidentDetectionsSpawnTargets) {
  const IptStore store;
  const auto model = zero_model();
  HmTracker hm(Config{}, model, store);
  hm.step(0, std::vector<Detection>{det(0, 0, 0), det(1, 0, 300, -0.2)});
  EXPECT_EQ(hm.targets().size(), 1u);
  EXPECT_THROW(hm.step(0, {}), InputError);
}

// Assignment solver against enumeration of all injective row-to-column maps.
TEST(Assignment, MatchesEnumeration) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 200; ++k) {
    const int rows = 1 + static_cast<int>(rng() % 4), cols = 1 + static_cast<int>(rng() % 4);
    std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
    for (auto& r : cost)
      for (auto& v : r) v = u(rng);
    const auto a = solve_assignment(cost);
    ASSERT_EQ(static_cast<int>(a.size()), rows);
    double got = 0.0;
    std::set<int> used;
    int assigned = 0;
    for (int r = 0; r < rows; ++r)
      if (a[r] >= 0) {
        got += cost[r][a[r]];
        EXPECT_TRUE(used.insert(a[r]).second);
        ++assigned;
      }
    EXPECT_EQ(assigned, std::min(rows, cols));
    // enumerate: permute columns padded with "unassigned" slots
    std::vector<int> slots(std::max(rows, cols));
    std::iota(slots.begin(), slots.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      int n = 0;
      for (int r = 0; r < rows; ++r)
        if (slots[r] < cols) s += cost[r][slots[r]], ++n;
      if (n == std::min(rows, cols)) best = std::min(best, s);
    } while (std::next_permutation(slots.begin(), slots.end()));
    EXPECT_NEAR(got, best, 1e-9);
  }
}

TEST(Finalize, DropsSingletonsAndNegativeMedians) {
  DetectionTable dets;
  for (int k = 0; k < 3; ++k) dets.add(det(k, k, 0, k == 2 ? 3.0 : -1.0));
  for (int k = 0; k < 5; ++k) dets.add(det(10 + k, k, 200, 0.2));
  dets.add(det(20, 0, 400, 5.0));
  const std::vector<Target> targets{target_with(7, {{0, 0}, {1, 1}, {2, 2}}),
                                    target_with(8, {{0, 10}, {1, 11}, {2, 12}, {3, 13}, {4, 14}}),
                                    target_with(9, {{0, 20}})};
  EXPECT_EQ(median_score(targets[0], dets), -1.0);
  const auto kept = finalize(targets, dets);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].id, 0);
  EXPECT_EQ(kept[0].associations.size(), 5u);
}

TEST(Kalman, StationaryDetectionsAreReproduced) {
  DetectionTable dets;
  std::map<int, int> assoc;
  for (int k = 0; k < 8; ++k) {
    dets.add(det(k, k, 50));
    assoc[k] = k;
  }
  const auto out = smooth(target_with(0, assoc), dets);
  ASSERT_EQ(out.size(), 8u);
  for (const auto& [f, b] : out) EXPECT_EQ(b, dets.at(0).box);
}

TEST(Kalman, LinearGapIsInterpolated) {
  DetectionTable dets;
  std::map<int, int> assoc;
  for (int f : {0, 1, 2, 4, 5, 6}) {
    dets.add({f, {10.0 + 5.0 * f, 20.0 - 2.0 * f, 40, 80}, 1.0, f});
    assoc[f] = f;
  }
  const auto out = smooth(target_with(0, assoc), dets, {1.0, 1e-9});
  ASSERT_EQ(out.size(), 7u);
  for (const auto& [f, b] : out) {
    EXPECT_NEAR(b.x, 10.0 + 5.0 * f, 1e-6);
    EXPECT_NEAR(b.y, 20.0 - 2.0 * f, 1e-6);
    EXPECT_NEAR(b.h, 80.0, 1e-6);
  }
}

TEST(Kalman, SingleDetection) {
  DetectionTable dets;
  dets.add(det(0, 3, 70));
  const auto out = smooth(target_with(0, {{3, 0}}), dets);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].first, 3);
  EXPECT_EQ(out[0].second, dets.at(0).box);
}

TEST(Latency, Bookkeeping) {
  DetectionTable dets;
  dets.add(det(0, 0, 0));
  dets.add(det(1, 1, 0));
  dets.add(det(2, 2, 0));
  Target t = target_with(0, {{0, 0}, {1, 1}, {2, 2}});
  t.last_assoc_time[1] = 4;  // joined three frames after it appeared
  const auto rep = latency_report(std::vector<Target>{t}, dets);
  EXPECT_EQ(rep.latencies, (std::vector<int>{0, 3, 0}));
  EXPECT_DOUBLE_EQ(rep.mean, 1.0);
  EXPECT_EQ(rep.max, 3);
  EXPECT_DOUBLE_EQ(rep.zero_fraction, 2.0 / 3.0);
}

TEST(Latency, AllZero) {
  DetectionTable dets;
  dets.add(det(0, 0, 0));
  dets.add(det(1, 1, 0));
  const auto rep = latency_report(std::vector<Target>{target_with(0, {{0, 0}, {1, 1}})}, dets);
  EXPECT_EQ(rep.mean, 0.0);
  EXPECT_EQ(rep.stddev, 0.0);
  EXPECT_EQ(rep.zero_fraction, 1.0);
}

TEST(Nomt, RejectsOutOfOrderFramesAndForeignDetections) {
  const IptStore store;
  const auto model = zero_model();
  NomtTracker nt(Config{}, model, store);
  nt.step(0, {});
  EXPECT_THROW(nt.step(0, {}), InputError);
  EXPECT_THROW(nt.step(1, std::vector<Detection>{det(0, 2, 0)}), InputError);
}

TEST(Nomt, EmptyFramesLeaveOldAssociationsAlone) {
  const auto seq = generate(preset_scenario("noiseless", 3));
  const auto model = support::train_model(preset_scenario("noiseless", 1));
  const auto& b = seq.bundle;
  NomtTracker nt(Config{}, model, *b.ipts, &*b.histograms);
  const DetectionTable all(b.detections);
  const int last = 40;
  for (int t = 0; t <= last; ++t) {
    std::vector<Detection> frame;
    for (int id : all.frame(t)) frame.push_back(all.at(id));
    nt.step(t, frame);
  }
  const auto before = nt.targets();
  for (int t = last + 1; t <= last + 15; ++t) nt.step(t, {});
  ASSERT_EQ(nt.targets().size(), before.size());
  for (std::size_t k = 0; k < before.size(); ++k)
    EXPECT_EQ(nt.targets()[k].associations, before[k].associations);
}

TEST(Nomt, NoiselessSequenceIsTrackedPerfectly) {
  ScenarioSpec spec = preset_scenario("noiseless", 7);
  spec.frames = 100;
  const auto seq = generate(spec);
  const auto model = support::train_model(preset_scenario("noiseless", 1));
  const auto& b = seq.bundle;
  NomtTracker nt(Config{}, model, *b.ipts, &*b.histograms);
  support::run_sequence(nt, b);
  const auto r = clear_mot(b.ground_truth, support::final_tracks(nt));
  EXPECT_EQ(r.mota, 1.0);
  EXPECT_EQ(r.ids, 0);
  EXPECT_EQ(r.frag, 0);
  EXPECT_GE(latency_report(nt.targets(), nt.detections()).zero_fraction, 0.95);
}

// Near-online contract on a noisy crossing sequence: associations older than
// the window never change and no detection is shared.
TEST(NomtProperty, NearOnlineContract) {
  ScenarioSpec spec = preset_scenario("crossing", 4);
  spec.frames = 80;
  const auto seq = generate(spec);
  const auto model = support::train_model(preset_scenario("crossing", 1000));
  const auto& b = seq.bundle;
  const Config cfg;
  NomtTracker nt(cfg, model, *b.ipts, &*b.histograms);
  const DetectionTable all(b.detections);
  for (int t = 0; t < b.frames; ++t) {
    std::map<int, std::map<int, int>> frozen;
    for (const auto& target : nt.targets())
      frozen[target.id] = {target.associations.begin(), target.associations.lower_bound(t - cfg.tau)};
    std::vector<Detection> frame;
    for (int id : all.frame(t)) frame.push_back(all.at(id));
    nt.step(t, frame);
    std::set<int> used;
    for (const auto& target : nt.targets()) {
      auto it = frozen.find(target.id);
      if (it != frozen.end()) {
        EXPECT_EQ((std::map<int, int>{target.associations.begin(), target.associations.lower_bound(t - cfg.tau)}),
                  it->second)
            << "frame " << t << " target " << target.id;
      }
      for (const auto& [f, id] : target.associations) {
        EXPECT_TRUE(used.insert(id).second) << "detection " << id << " assigned twice";
        EXPECT_LE(f, t);
      }
    }
    for (const auto& [id, assoc] : frozen) {
      bool present = false;
      for (const auto& target : nt.targets()) present = present || target.id == id;
      if (!assoc.empty()) {
        EXPECT_TRUE(present) << "target " << id << " vanished at frame " << t;
      }
    }
  }
}

TEST(NomtProperty, WorkerCountDoesNotChangeOutput) {
  ScenarioSpec spec = preset_scenario("crossing", 5);
  spec.frames = 60;
  const auto seq = generate(spec);
  const auto model = support::train_model(preset_scenario("crossing", 1000));
  const auto& b = seq.bundle;
  Config one, four;
  four.workers = 4;
  NomtTracker a(one, model, *b.ipts, &*b.histograms), c(four, model, *b.ipts, &*b.histograms);
  support::run_sequence(a, b);
  support::run_sequence(c, b);
  ASSERT_EQ(a.targets().size(), c.targets().size());
  for (std::size_t k = 0; k < a.targets().size(); ++k) {
    EXPECT_EQ(a.targets()[k].associations, c.targets()[k].associations);
    EXPECT_EQ(a.targets()[k].last_assoc_time, c.targets()[k].last_assoc_time);
  }
}

TEST(SmoothTracks, CoversEveryFrameOfEachTarget) {
  DetectionTable dets;
  dets.add(det(0, 0, 0));
  dets.add(det(1, 3, 30));
  const auto tracks = smooth_tracks(std::vector<Target>{target_with(4, {{0, 0}, {3, 1}})}, dets);
  ASSERT_EQ(tracks.size(), 4u);
  for (int f = 0; f < 4; ++f) {
    EXPECT_EQ(tracks[f].frame, f);
    EXPECT_EQ(tracks[f].id, 4);
  }
}
