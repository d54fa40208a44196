#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "nomt/metrics.hpp"

using namespace nomt;

namespace {

BoundingBox box_at(double x) { return {x, 50, 40, 80}; }

void add_track(Tracks& out, int id, double x, std::initializer_list<int> frames) {
  for (int f : frames) out.push_back({f, id, box_at(x), 1.0});
}

// Three ground-truth tracks over frames 0..9. A is tracked perfectly, B is
// lost on frames 3-5 and 8-9, C switches hypothesis id at frame 5.
std::pair<Tracks, Tracks> three_track_toy() {
  Tracks gt, hyp;
  const std::initializer_list<int> all{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  add_track(gt, 1, 0, all);
  add_track(gt, 2, 200, all);
  add_track(gt, 3, 400, all);
  add_track(hyp, 10, 0, all);
  add_track(hyp, 20, 200, {0, 1, 2, 6, 7});
  add_track(hyp, 30, 400, {0, 1, 2, 3, 4});
  add_track(hyp, 31, 400, {5, 6, 7, 8, 9});
  return {gt, hyp};
}

}  // namespace

TEST(ClearMot, PerfectTracking) {
  Tracks gt;
  add_track(gt, 0, 0, {0, 1, 2, 3});
  const auto r = clear_mot(gt, gt);
  EXPECT_EQ(r.mota, 1.0);
  EXPECT_EQ(r.motp, 1.0);
  EXPECT_EQ(r.ids + r.fp + r.fn + r.frag, 0);
  EXPECT_EQ(r.mt, 1.0);
}

TEST(ClearMot, HalfCoverage) {
  Tracks gt, hyp;
  add_track(gt, 0, 0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  add_track(hyp, 5, 0, {0, 1, 2, 3, 4});
  const auto r = clear_mot(gt, hyp);
  EXPECT_DOUBLE_EQ(r.mota, 0.5);
  EXPECT_EQ(r.fn, 5);
  EXPECT_EQ(r.fp, 0);
}

TEST(ClearMot, IdentitySwapCountsTwice) {
  Tracks gt, hyp;
  add_track(gt, 0, 0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  add_track(gt, 1, 300, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  add_track(hyp, 0, 0, {0, 1, 2, 3, 4});
  add_track(hyp, 1, 300, {0, 1, 2, 3, 4});
  add_track(hyp, 1, 0, {5, 6, 7, 8, 9});
  add_track(hyp, 0, 300, {5, 6, 7, 8, 9});
  const auto r = clear_mot(gt, hyp);
  EXPECT_EQ(r.ids, 2);
  EXPECT_DOUBLE_EQ(r.mota, 1.0 - 2.0 / 20.0);
}

TEST(ClearMot, ThreeTrackToy) {
  const auto [gt, hyp] = three_track_toy();
  const auto r = clear_mot(gt, hyp);
  EXPECT_EQ(r.gt_count, 30);
  EXPECT_EQ(r.fn, 5);
  EXPECT_EQ(r.fp, 0);
  EXPECT_EQ(r.ids, 1);
  EXPECT_EQ(r.frag, 1);
  EXPECT_NEAR(r.mota, 0.8, 1e-12);
  EXPECT_NEAR(r.mt, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(r.ml, 0.0);
}

TEST(ClearMot, BelowThresholdIsNoMatch) {
  Tracks gt, hyp;
  gt.push_back({0, 0, {0, 0, 10, 10}, 1});
  hyp.push_back({0, 0, {6, 0, 10, 10}, 1});  // IoU 4/16
  const auto r = clear_mot(gt, hyp);
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.fn, 1);
}

TEST(ClearMot, InputErrors) {
  Tracks gt;
  add_track(gt, 0, 0, {0});
  EXPECT_THROW(clear_mot({}, gt), InputError);
  add_track(gt, 0, 100, {0});
  EXPECT_THROW(clear_mot(gt, gt), InputError);
}

// Counts balance, MOTA follows from them, and neither input order nor
// hypothesis labels change the report.
TEST(ClearMotProperty, IdentityAndInvariance) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int run = 0; run < 100; ++run) {
    Tracks gt, hyp;
    for (int id = 0; id < 4; ++id)
      for (int f = 0; f < 30; ++f) {
        if (u(rng) < 0.1) continue;
        const double x = 150.0 * id + 2.0 * f;
        gt.push_back({f, id, box_at(x), 1.0});
        if (u(rng) < 0.85) hyp.push_back({f, id + (f > 15 && u(rng) < 0.1 ? 10 : 0), box_at(x + 8 * u(rng)), 1.0});
      }
    for (int f = 0; f < 30; ++f)
      if (u(rng) < 0.2) hyp.push_back({f, 50 + f, box_at(700 + 10 * f), 1.0});
    const auto r = clear_mot(gt, hyp);
    EXPECT_EQ(r.matches + r.fn, r.gt_count);
    EXPECT_EQ(r.matches + r.fp, static_cast<int>(hyp.size()));
    EXPECT_DOUBLE_EQ(r.mota, 1.0 - static_cast<double>(r.fp + r.fn + r.ids) / r.gt_count);
    EXPECT_GE(r.motp, 0.5);

    Tracks shuffled = hyp;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& p : shuffled) p.id += 1000;
    const auto s = clear_mot(gt, shuffled);
    EXPECT_EQ(s.ids, r.ids);
    EXPECT_EQ(s.frag, r.frag);
    EXPECT_EQ(s.fp, r.fp);
    EXPECT_EQ(s.fn, r.fn);
    EXPECT_DOUBLE_EQ(s.mota, r.mota);
  }
}

TEST(Roc, PerfectSeparation) {
  const std::vector<double> scores{0.9, 0.8, 0.7, 0.1, 0.0};
  const std::vector<char> labels{1, 1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(auc_trapezoid(roc_curve(scores, labels)), 1.0);
  EXPECT_DOUBLE_EQ(auc_mann_whitney(scores, labels), 1.0);
}

TEST(Roc, HandComputedWithTie) {
  // positives 3, 1; negatives 2, 1. Pairs: (3>2) (3>1) (1<2) (1=1 counts half)
  const std::vector<double> scores{3, 1, 2, 1};
  const std::vector<char> labels{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(auc_mann_whitney(scores, labels), 2.5 / 4.0);
  EXPECT_DOUBLE_EQ(auc_trapezoid(roc_curve(scores, labels)), 2.5 / 4.0);
}

// Trapezoid and rank-sum AUC agree, curves are monotone from (0,0) to (1,1)
// and random scores give chance level.
TEST(RocProperty, TrapezoidMatchesRankSum) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(0, 20);
  for (int run = 0; run < 100; ++run) {
    const int n = 2 + static_cast<int>(rng() % 200);
    std::vector<double> scores(n);
    std::vector<char> labels(n);
    for (int k = 0; k < n; ++k) {
      labels[k] = static_cast<char>(rng() % 2);
      scores[k] = level(rng) + (labels[k] ? 3 : 0);
    }
    labels[0] = 1, labels[1] = 0;
    const auto pts = roc_curve(scores, labels);
    ASSERT_FALSE(pts.empty());
    EXPECT_EQ(pts.front().fpr, 0.0);
    EXPECT_EQ(pts.front().tpr, 0.0);
    EXPECT_DOUBLE_EQ(pts.back().fpr, 1.0);
    EXPECT_DOUBLE_EQ(pts.back().tpr, 1.0);
    for (std::size_t k = 1; k < pts.size(); ++k) {
      EXPECT_GE(pts[k].fpr, pts[k - 1].fpr);
      EXPECT_GE(pts[k].tpr, pts[k - 1].tpr);
    }
    EXPECT_NEAR(auc_trapezoid(pts), auc_mann_whitney(scores, labels), 1e-6);
  }
}

TEST(RocProperty, RandomScoresAreAtChance) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(10000);
  std::vector<char> labels(10000);
  for (std::size_t k = 0; k < scores.size(); ++k) scores[k] = u(rng), labels[k] = static_cast<char>(rng() % 2);
  EXPECT_NEAR(auc_mann_whitney(scores, labels), 0.5, 0.05);
}

TEST(Ndist2, NegatedBottomCentreDistanceOverMeanHeight) {
  EXPECT_DOUBLE_EQ(ndist2({0, 0, 10, 20}, {30, 40, 10, 20}), -2.5);
  EXPECT_EQ(ndist2({0, 0, 10, 20}, {0, 0, 10, 20}), 0.0);
}
