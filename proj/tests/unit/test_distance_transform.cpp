#include "gsgtrack/distance_transform.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gsg;

namespace {

// O(n^2) nearest-true-pixel search.
ScalarMap brute_force_dt(const Mask& m) {
  ScalarMap out(m.height, m.width);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      double best = kEmptyMaskDistance * kEmptyMaskDistance;
      bool any = false;
      for (int v = 0; v < m.height; ++v)
        for (int u = 0; u < m.width; ++u)
          if (m(v, u)) {
            const double d = double(u - x) * (u - x) + double(v - y) * (v - y);
            if (!any || d < best) best = d;
            any = true;
          }
      out(y, x) = std::sqrt(best);
    }
  }
  return out;
}

}  // namespace

TEST(DistanceTransform, AllTrueIsZero) {
  const ScalarMap d = euclidean_dt(Mask(5, 4, 1, 1));
  for (double v : d.data) EXPECT_EQ(v, 0.0);
}

TEST(DistanceTransform, CornerPixel) {
  Mask m(3, 3);
  m(0, 0) = 1;
  const ScalarMap d = euclidean_dt(m);
  EXPECT_DOUBLE_EQ(d(2, 2), 2.0 * std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(d(0, 2), 2.0);
  EXPECT_EQ(d(0, 0), 0.0);
}

TEST(DistanceTransform, EmptyMaskGivesSentinel) {
  const ScalarMap d = euclidean_dt(Mask(4, 4));
  for (double v : d.data) EXPECT_EQ(v, kEmptyMaskDistance);
}

TEST(DistanceTransform, MatchesBruteForceExactly) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<int> dim(1, 32);
    const int h = trial < 30 ? 32 : dim(rng), w = trial < 30 ? 32 : dim(rng);
    const double density = std::array<double, 5>{0.002, 0.01, 0.05, 0.3, 0.8}[trial % 5];
    std::bernoulli_distribution on(density);
    Mask m(h, w);
    for (auto& v : m.data) v = on(rng);
    EXPECT_EQ(euclidean_dt(m), brute_force_dt(m)) << "trial " << trial;
  }
}
