#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <optional>
#include <random>

#include "nomt/infer.hpp"
#include "nomt/potentials.hpp"

using namespace nomt;

namespace {

struct Fixture {
  DetectionTable dets;
  Config config;
  std::map<std::pair<int, int>, double> affinities;
  HistogramTable histograms;
  bool use_histograms = false;
  int t = 30;

  PotentialContext context() const {
    return {dets, config,
            [this](int a, int b) {
              auto it = affinities.find({std::min(a, b), std::max(a, b)});
              return it == affinities.end() ? 0.0 : it->second;
            },
            use_histograms ? &histograms : nullptr, t};
  }
};

Detection det(int id, int frame, double x, double score = 0.0) { return {frame, {x, 0, 40, 80}, score, id}; }

Target target_with(std::map<int, int> assoc) {
  Target t;
  t.id = 0;
  t.associations = std::move(assoc);
  return t;
}

PolyPredictor constant_at(const BoundingBox& b, int frame) {
  const std::vector<std::pair<int, BoundingBox>> s{{frame, b}};
  return PolyPredictor::fit(s, 1);
}

ColorHistogram unit_histogram(int bin) {
  ColorHistogram h;
  h.bins[bin] = 1.0;
  h.bins[ColorHistogram::kCellBins + bin] = 1.0;
  return h;
}

}  // namespace

TEST(MuA, EmptyTargetHasNoTerms) {
  Fixture f;
  f.dets.add(det(0, 10, 0));
  EXPECT_EQ(mu_A(Target{}, f.dets.at(0), f.context()), 0.0);
}

TEST(MuA, SingleNeighbour) {
  Fixture f;
  f.dets.add(det(0, 9, 0));
  f.dets.add(det(1, 10, 0));
  f.affinities[{0, 1}] = 0.9;
  EXPECT_DOUBLE_EQ(mu_A(target_with({{9, 0}}), f.dets.at(1), f.context()), -0.9);
}

TEST(MuA, AllFiveNeighbours) {
  Fixture f;
  f.dets.add(det(99, 25, 0));
  std::map<int, int> assoc;
  for (int dt : {1, 2, 5, 10, 20}) {
    f.dets.add(det(dt, 25 - dt, 0));
    f.affinities[{dt, 99}] = 1.0;
    assoc[25 - dt] = dt;
  }
  // A detection at a gap outside the neighbour set does not count.
  f.dets.add(det(3, 22, 0));
  f.affinities[{3, 99}] = 1.0;
  assoc[22] = 3;
  EXPECT_DOUBLE_EQ(mu_A(target_with(assoc), f.dets.at(99), f.context()), -5.0);
}

TEST(MuT, PerfectPredictionOneFrameLater) {
  Fixture f;
  f.dets.add(det(0, 4, 0));
  f.dets.add(det(1, 5, 0));
  const auto pred = constant_at(f.dets.at(0).box, 4);
  EXPECT_DOUBLE_EQ(mu_T(target_with({{4, 0}}), f.dets.at(1), &pred, f.config), -0.98 * 2.0);
}

TEST(MuT, LowOverlapIsInfinite) {
  Fixture f;
  f.dets.add(det(0, 4, 0));
  // shift s gives IoU (40 - s) / (40 + s) = 0.4 at s = 40 * 0.6 / 1.4
  f.dets.add(det(1, 5, 40.0 * 0.6 / 1.4));
  const auto pred = constant_at(f.dets.at(0).box, 4);
  EXPECT_NEAR(iou(f.dets.at(0).box, f.dets.at(1).box), 0.4, 1e-12);
  EXPECT_EQ(mu_T(target_with({{4, 0}}), f.dets.at(1), &pred, f.config), kInfinity);
}

TEST(MuT, DecaysOverTenFrames) {
  Fixture f;
  f.dets.add(det(0, 4, 0));
  f.dets.add(det(1, 14, 0));
  const auto pred = constant_at(f.dets.at(0).box, 4);
  const double v = mu_T(target_with({{4, 0}}), f.dets.at(1), &pred, f.config);
  EXPECT_DOUBLE_EQ(v, -std::pow(0.98, 10) * 2.0);
  EXPECT_NEAR(v, -1.6341, 1e-4);
}

TEST(PsiU, EmptyTargetIsNegatedScore) {
  Fixture f;
  f.dets.add(det(0, 4, 0, 1.2));
  EXPECT_EQ(psi_u(Target{}, f.dets.at(0), nullptr, f.context()), -1.2);
}

TEST(PsiU, AffinityWinsWhenDynamicsFail) {
  Fixture f;
  f.dets.add(det(0, 9, 0));
  f.dets.add(det(1, 10, 500, 0.0));
  f.affinities[{0, 1}] = 0.9;
  const auto pred = constant_at(f.dets.at(0).box, 9);
  EXPECT_DOUBLE_EQ(psi_u(target_with({{9, 0}}), f.dets.at(1), &pred, f.context()), -0.9);
}

TEST(PsiU, MinimumThenScore) {
  Fixture f;
  f.dets.add(det(0, 9, 0));
  f.dets.add(det(1, 10, 0, 0.5));
  f.affinities[{0, 1}] = 0.5;
  const auto pred = constant_at(f.dets.at(0).box, 9);
  EXPECT_DOUBLE_EQ(psi_u(target_with({{9, 0}}), f.dets.at(1), &pred, f.context()), -1.96 - 0.5);
}

TEST(PsiP, OnlyNeighbourGapsCount) {
  Fixture f;
  f.dets.add(det(0, 0, 0));
  f.dets.add(det(1, 3, 0));
  f.dets.add(det(2, 5, 0));
  f.dets.add(det(3, 20, 0));
  f.affinities[{0, 1}] = 0.7;
  f.affinities[{0, 2}] = 0.8;
  f.affinities[{0, 3}] = -0.2;
  const auto ctx = f.context();
  EXPECT_EQ(psi_p(f.dets.at(0), f.dets.at(1), ctx), 0.0);
  EXPECT_DOUBLE_EQ(psi_p(f.dets.at(0), f.dets.at(2), ctx), -0.8);
  EXPECT_DOUBLE_EQ(psi_p(f.dets.at(0), f.dets.at(3), ctx), 0.2);
}

TEST(PsiH, DetectionsOnRefitLineHaveNoSmoothnessCost) {
  Fixture f;
  std::map<int, int> assoc;
  for (int k = 0; k < 30; ++k) {
    f.dets.add(det(k, k, 3.0 * k));
    if (k < 20) assoc[k] = k;
  }
  const Hypothesis h{{20, 21, 25, 29}};
  f.t = 30;
  EXPECT_NEAR(psi_h_terms(target_with(assoc), h, f.context()).smoothness, 0.0, 1e-12);
}

TEST(PsiH, SmoothnessGrowsWithDeviation) {
  Fixture f;
  std::map<int, int> assoc;
  for (int k = 0; k < 20; ++k) {
    f.dets.add(det(k, k, 3.0 * k));
    assoc[k] = k;
  }
  f.dets.add(det(20, 25, 3.0 * 25));
  f.dets.add(det(21, 25, 3.0 * 25 + 30));
  EXPECT_LT(psi_h(target_with(assoc), Hypothesis{{20}}, f.context()),
            psi_h(target_with(assoc), Hypothesis{{21}}, f.context()));
}

TEST(PsiH, IdenticalHistogramsGiveMarginPerPair) {
  Fixture f;
  f.use_histograms = true;
  for (int k = 0; k < 3; ++k) {
    f.dets.add(det(k, 25 + k, 0));
    f.histograms[k] = unit_histogram(2);
  }
  f.t = 30;
  const auto terms = psi_h_terms(target_with({{25, 0}}), Hypothesis{{1, 2}}, f.context());
  // three pairs, each epsilon * (theta - 1)
  EXPECT_NEAR(terms.appearance, 3 * 0.4 * (0.8 - 1.0), 1e-12);
  EXPECT_NEAR(terms.appearance / 3, -0.08, 1e-12);
}

TEST(PsiH, DisjointHistogramsPayFullMargin) {
  Fixture f;
  f.use_histograms = true;
  f.dets.add(det(0, 25, 0));
  f.dets.add(det(1, 26, 0));
  f.histograms[0] = unit_histogram(2);
  f.histograms[1] = unit_histogram(5);
  const auto terms = psi_h_terms(target_with({{25, 0}}), Hypothesis{{1}}, f.context());
  EXPECT_NEAR(terms.appearance, 0.32, 1e-12);
}

TEST(PsiH, WithoutHistogramsAppearanceIsZero) {
  Fixture f;
  f.dets.add(det(0, 25, 0));
  f.dets.add(det(1, 26, 0));
  EXPECT_EQ(psi_h_terms(target_with({{25, 0}}), Hypothesis{{1}}, f.context()).appearance, 0.0);
}

TEST(Phi, SharedDetection) {
  Fixture f;
  f.dets.add(det(0, 25, 0));
  EXPECT_DOUBLE_EQ(phi(Hypothesis{{0}}, Hypothesis{{0}}, f.context()), 0.5 * 2 + 100);
}

TEST(Phi, DisjointFramesAndEmptyHypotheses) {
  Fixture f;
  f.dets.add(det(0, 25, 0));
  f.dets.add(det(1, 26, 0));
  EXPECT_EQ(phi(Hypothesis{{0}}, Hypothesis{{1}}, f.context()), 0.0);
  EXPECT_EQ(phi(Hypothesis{}, Hypothesis{{1}}, f.context()), 0.0);
}

TEST(Phi, OverlappingDistinctDetections) {
  Fixture f;
  f.dets.add({25, {0, 0, 10, 10}, 0.0, 0});
  f.dets.add({25, {0, 0, 10, 20}, 0.0, 1});  // IoU 0.5
  EXPECT_DOUBLE_EQ(phi(Hypothesis{{0}}, Hypothesis{{1}}, f.context()), 0.25);
}

TEST(TotalEnergy, AllEmptyLeavesOnlyHistoryAppearance) {
  Fixture f;
  f.use_histograms = true;
  for (int k = 0; k < 3; ++k) {
    f.dets.add(det(k, 10 + k, 0, 1.0));
    f.histograms[k] = unit_histogram(k == 2 ? 7 : 1);
  }
  const std::vector<Target> targets{target_with({{10, 0}, {11, 1}, {12, 2}}), Target{}};
  const std::vector<HypothesisSet> sets{{0, {Hypothesis{}}}, {kNewTarget, {Hypothesis{}}}};
  const std::vector<int> states{0, 0};
  const auto e = total_energy(targets, sets, states, f.context());
  EXPECT_EQ(e.unary, 0.0);
  EXPECT_EQ(e.pairwise, 0.0);
  EXPECT_EQ(e.exclusion, 0.0);
  // pairs (0,1): K = 1; (0,2) and (1,2): K = 0
  EXPECT_NEAR(e.total, 0.4 * ((0.8 - 1.0) + 0.8 + 0.8), 1e-12);
}

TEST(TotalEnergy, SingleNewDetectionIsNegatedScore) {
  Fixture f;
  f.dets.add(det(0, 25, 0, 1.5));
  const std::vector<Target> targets{Target{}};
  const std::vector<HypothesisSet> sets{{kNewTarget, {Hypothesis{}, Hypothesis{{0}}}}};
  const std::vector<int> states{1};
  const auto e = total_energy(targets, sets, states, f.context());
  EXPECT_DOUBLE_EQ(e.unary, -1.5);
  EXPECT_DOUBLE_EQ(e.total, -1.5);
}

TEST(TotalEnergy, DuplicateSelectionAddsExclusion) {
  Fixture f;
  f.dets.add(det(0, 25, 0, 1.0));
  const std::vector<Target> targets{Target{}, Target{}};
  const std::vector<HypothesisSet> sets{{kNewTarget, {Hypothesis{}, Hypothesis{{0}}}},
                                        {kNewTarget, {Hypothesis{}, Hypothesis{{0}}}}};
  const std::vector<int> states{1, 1};
  EXPECT_DOUBLE_EQ(total_energy(targets, sets, states, f.context()).exclusion, 101.0);
}

// Random instances: the breakdown equals the sum of separately evaluated
// terms, phi is symmetric, and the exact solver never hands one detection
// to two targets.
TEST(PotentialsProperty, EnergyDecomposesAndExclusionDominates) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int run = 0; run < 60; ++run) {
    Fixture f;
    f.use_histograms = run % 2 == 0;
    f.t = 30;
    int next = 0;
    std::vector<Target> targets;
    for (int m = 0; m < 3; ++m) {
      std::map<int, int> assoc;
      const double x0 = 150.0 * m;
      for (int fr = 5; fr < 20; ++fr)
        if (u(rng) < 0.8) {
          f.dets.add(det(next, fr, x0 + 2.0 * fr + u(rng), 2 * u(rng) - 0.5));
          assoc[fr] = next++;
        }
      targets.push_back(target_with(assoc));
    }
    std::vector<int> window;
    for (int fr = 20; fr <= 30; ++fr)
      for (int k = 0; k < 3; ++k)
        if (u(rng) < 0.7) {
          f.dets.add(det(next, fr, 150.0 * k + 2.0 * fr + 10 * u(rng), 3 * u(rng) - 1));
          window.push_back(next++);
        }
    for (int a = 0; a < next; ++a) {
      ColorHistogram h;
      h.bins[a % 4] = 1.0;
      h.bins[ColorHistogram::kCellBins + a % 3] = 1.0;
      f.histograms[a] = h;
      for (int b = a + 1; b < next; ++b) f.affinities[{a, b}] = 2 * u(rng) - 1;
    }
    std::vector<HypothesisSet> sets(targets.size());
    for (auto& s : sets) {
      s.hypotheses.emplace_back();
      for (int k = 0; k < 4; ++k) {
        Hypothesis h;
        std::map<int, int> per_frame;
        for (int id : window)
          if (u(rng) < 0.3) per_frame[f.dets.at(id).frame] = id;
        for (auto [fr, id] : per_frame) h.detections.push_back(id);
        s.hypotheses.push_back(h);
      }
    }
    const auto ctx = f.context();
    std::vector<int> states(sets.size());
    for (auto& s : states) s = static_cast<int>(rng() % 5);
    const auto e = total_energy(targets, sets, states, ctx);

    double expected = 0.0;
    for (std::size_t m = 0; m < sets.size(); ++m) {
      const auto& h = sets[m].hypotheses[states[m]];
      std::optional<PolyPredictor> pred;
      if (!targets[m].empty()) pred = fit_predictor(targets[m], f.dets, f.config);
      for (std::size_t a = 0; a < h.detections.size(); ++a) {
        expected += psi_u(targets[m], f.dets.at(h.detections[a]), pred ? &*pred : nullptr, ctx);
        for (std::size_t b = a + 1; b < h.detections.size(); ++b)
          expected += psi_p(f.dets.at(h.detections[a]), f.dets.at(h.detections[b]), ctx);
      }
      expected += psi_h(targets[m], h, ctx);
      for (std::size_t l = m + 1; l < sets.size(); ++l) {
        const auto& g = sets[l].hypotheses[states[l]];
        expected += phi(h, g, ctx);
        EXPECT_EQ(phi(h, g, ctx), phi(g, h, ctx));
      }
    }
    if (std::isfinite(expected)) EXPECT_NEAR(e.total, expected, 1e-9 * std::max(1.0, std::abs(expected)));
    else EXPECT_EQ(e.total, expected);
    EXPECT_NEAR(e.total, e.unary + e.pairwise + e.high_order + e.exclusion, 1e-9 * std::max(1.0, std::abs(e.total)));

    // Two new targets competing for one detection.
    const int shared = window.empty() ? -1 : window[rng() % window.size()];
    if (shared < 0) continue;
    const std::vector<HypothesisSet> pair{{kNewTarget, {Hypothesis{}, Hypothesis{{shared}}}},
                                          {kNewTarget, {Hypothesis{}, Hypothesis{{shared}}}}};
    const std::vector<Target> empty(2);
    std::vector<std::vector<double>> costs(2);
    for (int m = 0; m < 2; ++m)
      for (const auto& h : pair[m].hypotheses) costs[m].push_back(target_cost(empty[m], h, nullptr, ctx).total());
    const std::vector<std::pair<int, int>> candidates{{0, 1}};
    const auto g = build_graph(costs, candidates, [&](int m, int k, int l, int kk) {
      return phi(pair[m].hypotheses[k], pair[l].hypotheses[kk], ctx);
    });
    const auto sol = solve(g);
    EXPECT_FALSE(sol.states[0] == 1 && sol.states[1] == 1);
  }
}
