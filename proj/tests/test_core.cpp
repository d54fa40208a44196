#include <gtest/gtest.h>

#include <random>

#include "nomt/core.hpp"
#include "support.hpp"

using namespace nomt;

TEST(Iou, IdenticalBoxesGiveOne) { EXPECT_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0); }

TEST(Iou, DisjointBoxesGiveZero) { EXPECT_EQ(iou({0, 0, 10, 10}, {100, 100, 5, 5}), 0.0); }

TEST(Iou, HalfShiftedBoxGivesOneThird) {
  // intersection 5 * 10 = 50, union 100 + 100 - 50 = 150
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 10, 10}), 50.0 / 150.0);
}

TEST(Iou, TouchingEdgesGiveZero) { EXPECT_EQ(iou({0, 0, 10, 10}, {10, 0, 10, 10}), 0.0); }

TEST(O2, IdenticalBoxesGiveTwo) {
  const BoundingBox a{3, 4, 20, 40};
  EXPECT_EQ(o2(a, a), 2.0);
}

TEST(O2, AbsentBoxGivesZero) {
  const BoundingBox a{0, 0, 10, 10};
  EXPECT_EQ(o2(&a, nullptr), 0.0);
  EXPECT_EQ(o2(nullptr, &a), 0.0);
  EXPECT_EQ(o2(nullptr, nullptr), 0.0);
}

TEST(O2, HalfIouGivesHalf) {
  // (0,0,10,10) vs (0,0,10,20): intersection 100, union 200
  EXPECT_DOUBLE_EQ(o2({0, 0, 10, 10}, {0, 0, 10, 20}), 2.0 * 0.25);
}

TEST(IouProperty, SymmetricBoundedAndReflexive) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 2000; ++k) {
    const auto a = support::random_box(rng), b = support::random_box(rng);
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(iou(a, a), 1.0);
    EXPECT_EQ(o2(a, a), 2.0);
  }
}

TEST(IouProperty, O2MonotoneInIou) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 2000; ++k) {
    const auto a = support::random_box(rng), b = support::random_box(rng), c = support::random_box(rng);
    if (iou(a, b) >= iou(a, c)) EXPECT_GE(o2(a, b), o2(a, c));
    else EXPECT_LE(o2(a, b), o2(a, c));
  }
}

TEST(IouProperty, MatchesPixelCountOnIntegerBoxes) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pos(0, 30), size(1, 20);
  for (int k = 0; k < 300; ++k) {
    const BoundingBox a{double(pos(rng)), double(pos(rng)), double(size(rng)), double(size(rng))};
    const BoundingBox b{double(pos(rng)), double(pos(rng)), double(size(rng)), double(size(rng))};
    int inter = 0, uni = 0;
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 60; ++x) {
        const bool in_a = x >= a.x && x < a.right() && y >= a.y && y < a.bottom();
        const bool in_b = x >= b.x && x < b.right() && y >= b.y && y < b.bottom();
        inter += in_a && in_b;
        uni += in_a || in_b;
      }
    EXPECT_NEAR(iou(a, b), double(inter) / uni, 1e-12);
  }
}

TEST(DetectionTable, IndexesByIdAndFrame) {
  const std::vector<Detection> dets{{0, {0, 0, 1, 1}, 1.0, 5}, {2, {0, 0, 1, 1}, 1.0, 7}, {2, {1, 1, 1, 1}, 0.5, 3}};
  const DetectionTable table(dets);
  EXPECT_EQ(table.at(7).frame, 2);
  EXPECT_EQ(table.frame(2).size(), 2u);
  EXPECT_TRUE(table.frame(1).empty());
  EXPECT_TRUE(table.frame(99).empty());
  EXPECT_EQ(table.find(42), nullptr);
  EXPECT_THROW(table.at(42), InputError);
}

TEST(DetectionTable, RejectsBadInput) {
  DetectionTable table;
  table.add({0, {0, 0, 1, 1}, 1.0, 0});
  EXPECT_THROW(table.add({0, {0, 0, 1, 1}, 1.0, 0}), InputError);
  EXPECT_THROW(table.add({-1, {0, 0, 1, 1}, 1.0, 1}), InputError);
  EXPECT_THROW(table.add({0, {0, 0, 0, 1}, 1.0, 2}), InputError);
}

TEST(Config, DefaultsAreValid) {
  const Config c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.tau, 10);
  EXPECT_EQ(c.lambda, 20.0);
  EXPECT_EQ(c.beta, 100.0);
  EXPECT_EQ(c.neighbor_set, (std::vector<int>{1, 2, 5, 10, 20}));
}

TEST(Config, ActiveWindowFollowsFps) {
  Config c;
  c.set_fps(30.0);
  EXPECT_EQ(c.t_active, 30);
  c.set_fps(7.4);
  EXPECT_EQ(c.t_active, 7);
}

TEST(Config, ModelGapsCoverWindowAndNeighbours) {
  const Config c;
  EXPECT_EQ(c.model_gaps(), (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20}));
  EXPECT_TRUE(c.in_neighbor_set(5));
  EXPECT_FALSE(c.in_neighbor_set(3));
}

TEST(Config, ValidationRejectsNonsense) {
  Config c;
  c.tau = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.neighbor_set = {5, 1};
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.beta = -1;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.trim_iou_min = 1.5;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(Target, LookupByFrame) {
  Target t;
  t.associations = {{3, 10}, {5, 11}};
  EXPECT_EQ(t.at(3), 10);
  EXPECT_EQ(t.at(4), -1);
  EXPECT_EQ(t.first_frame(), 3);
  EXPECT_EQ(t.last_frame(), 5);
}
