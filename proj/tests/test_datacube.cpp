#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include <sldmm/datacube.hpp>

#include "test_util.hpp"

using namespace sldmm;

TEST(DataCube, LayoutIsBandSequential) {
  std::vector<double> v(2 * 3 * 2);
  std::iota(v.begin(), v.end(), 0.0);
  const DataCube c(2, 3, 2, v);
  EXPECT_EQ(c(0, 0, 0), 0.0);
  EXPECT_EQ(c(0, 2, 0), 2.0);
  EXPECT_EQ(c(1, 0, 0), 3.0);
  EXPECT_EQ(c(0, 0, 1), 6.0);
  EXPECT_EQ(c(1, 2, 1), 11.0);
  EXPECT_EQ(c.at(4, 1), 10.0);
  EXPECT_EQ(c.band(1).size(), 6u);
  EXPECT_EQ(c.band(1)[0], 6.0);
}

TEST(DataCube, RejectsBadConstruction) {
  EXPECT_THROW(DataCube(0, 2, 2), std::invalid_argument);
  EXPECT_THROW(DataCube(2, 2, 1, std::vector<double>(3)), std::invalid_argument);
  EXPECT_THROW(DataCube(1, 1, 1, std::vector<double>{std::nan("")}), std::invalid_argument);
  EXPECT_THROW(DataCube(1, 1, 1, std::vector<double>{INFINITY}), std::invalid_argument);
}

TEST(MakeMask, FullRateSamplesEverything) {
  for (std::uint64_t seed : {0u, 5u, 99u}) {
    const MaskSet m = make_mask(4, 4, 2, 1.0, seed);
    EXPECT_EQ(m.count(0) + m.count(1), 32);
  }
}

TEST(MakeMask, FivePercentOf200x200) {
  const MaskSet m = make_mask(200, 200, 3, 0.05, 1);
  for (Index t = 0; t < 3; ++t)
    EXPECT_EQ(m.count(t), 2000);
}

TEST(MakeMask, DeterministicPerSeedAndIndependentPerBand) {
  const MaskSet a = make_mask(10, 10, 3, 0.10, 7);
  const MaskSet b = make_mask(10, 10, 3, 0.10, 7);
  for (Index t = 0; t < 3; ++t)
    EXPECT_EQ(a.count(t), 10);
  EXPECT_TRUE(std::equal(a.flags().begin(), a.flags().end(), b.flags().begin()));
  EXPECT_FALSE(std::equal(a.band(0).begin(), a.band(0).end(), a.band(1).begin()));
  const MaskSet c = make_mask(10, 10, 3, 0.10, 8);
  EXPECT_FALSE(std::equal(a.flags().begin(), a.flags().end(), c.flags().begin()));
}

TEST(MakeMask, CountIsFloorOfRateTimesPixels) {
  for (double rate : {0.01, 0.05, 0.1, 0.29, 0.33, 0.5, 0.999}) {
    const MaskSet m = make_mask(7, 13, 2, rate, 3);
    const auto expect = static_cast<Index>(std::floor(rate * 91 + 1e-9));
    EXPECT_EQ(m.count(0), expect) << rate;
    EXPECT_EQ(m.count(1), expect) << rate;
  }
}

TEST(MakeMask, RejectsBadArguments) {
  EXPECT_THROW(make_mask(4, 4, 1, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(make_mask(4, 4, 1, 1.5, 1), std::invalid_argument);
  EXPECT_THROW(make_mask(4, 4, 1, -0.1, 1), std::invalid_argument);
  EXPECT_THROW(make_mask(0, 4, 1, 0.5, 1), std::invalid_argument);
  EXPECT_THROW(make_mask(4, 4, 0, 0.5, 1), std::invalid_argument);
}

TEST(Noise, ZeroSigmaIsBitwiseIdentity) {
  const DataCube c = testutil::random_cube(5, 6, 3, 2);
  EXPECT_EQ(add_gaussian_noise(c, 0.0, 11), c);
}

TEST(Noise, StandardDeviationMatches) {
  const DataCube c = testutil::random_cube(100, 100, 12, 4);
  const DataCube n = add_gaussian_noise(c, 0.05, 9);
  double s = 0.0, s2 = 0.0;
  const auto a = c.values(), b = n.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    s += d;
    s2 += d * d;
  }
  const double N = static_cast<double>(a.size());
  const double sd = std::sqrt(s2 / N - (s / N) * (s / N));
  EXPECT_NEAR(sd, 0.05, 0.02 * 0.05);
}

TEST(Noise, MeanOfPureNoise) {
  const DataCube z(100, 100, 1);
  const DataCube n = add_gaussian_noise(z, 1.0, 3);
  const double mean = std::accumulate(n.values().begin(), n.values().end(), 0.0) / 1e4;
  EXPECT_LT(std::abs(mean), 3.0 / 100.0);
}

TEST(Noise, SeedDeterministicAndRejectsNegativeSigma) {
  const DataCube c = testutil::random_cube(4, 4, 2, 1);
  EXPECT_EQ(add_gaussian_noise(c, 0.1, 5), add_gaussian_noise(c, 0.1, 5));
  EXPECT_FALSE(add_gaussian_noise(c, 0.1, 5) == add_gaussian_noise(c, 0.1, 6));
  EXPECT_THROW(add_gaussian_noise(c, -1.0, 5), std::invalid_argument);
}

TEST(ApplyMask, Examples) {
  const DataCube c(2, 2, 1, {1, 2, 3, 4});
  EXPECT_EQ(apply_mask(c, MaskSet::full(2, 2, 1)), c);
  const MaskSet diag(2, 2, 1, {1, 0, 0, 1});
  EXPECT_EQ(apply_mask(c, diag), DataCube(2, 2, 1, {1, 0, 0, 4}));
  const DataCube c2 = testutil::random_cube(2, 2, 2, 3);
  const MaskSet half(2, 2, 2, {1, 1, 1, 1, 0, 0, 0, 0});
  const DataCube out = apply_mask(c2, half);
  for (Index p = 0; p < 4; ++p) {
    EXPECT_EQ(out.at(p, 0), c2.at(p, 0));
    EXPECT_EQ(out.at(p, 1), 0.0);
  }
  EXPECT_THROW(apply_mask(c2, MaskSet::full(2, 2, 1)), std::invalid_argument);
}

TEST(Psnr, IdenticalGivesInfinity) {
  const DataCube c = testutil::random_cube(3, 4, 2, 8);
  const Metrics m = psnr(c, c);
  EXPECT_EQ(m.mse, 0.0);
  EXPECT_TRUE(std::isinf(m.psnr_paper) && m.psnr_paper > 0);
  EXPECT_TRUE(std::isinf(m.psnr_standard) && m.psnr_standard > 0);
}

TEST(Psnr, ConstantClosedForm) {
  const DataCube ref(3, 3, 2, 1.0), cand(3, 3, 2, 0.9);
  const Metrics m = psnr(cand, ref);
  EXPECT_NEAR(m.mse, 0.01, 1e-15);
  EXPECT_NEAR(m.psnr_standard, 20.0, 1e-12);
  EXPECT_NEAR(m.psnr_paper, 20.0, 1e-12); // peak 1 makes both agree
  EXPECT_EQ(m.psnr(PsnrFormula::standard), m.psnr_standard);
}

TEST(Psnr, MatchesIndependentRecomputation) {
  const DataCube a = testutil::random_cube(8, 8, 2, 21, -2.0, 3.0);
  const DataCube b = testutil::random_cube(8, 8, 2, 22, -2.0, 3.0);
  long double sq = 0, peak = 0;
  for (Index t = 0; t < 2; ++t)
    for (Index r = 0; r < 8; ++r)
      for (Index c = 0; c < 8; ++c) {
        const long double d = static_cast<long double>(a(r, c, t)) - b(r, c, t);
        sq += d * d;
        peak = std::max(peak, std::abs(static_cast<long double>(b(r, c, t))));
      }
  const long double mse = sq / 128;
  const double paper = static_cast<double>(10 * std::log10(peak / mse));
  const double standard = static_cast<double>(10 * std::log10(peak * peak / mse));
  const Metrics m = psnr(a, b);
  EXPECT_NEAR(m.psnr_paper, paper, 1e-12);
  EXPECT_NEAR(m.psnr_standard, standard, 1e-12);
}

TEST(Psnr, InvariantUnderCommonSpatialPermutation) {
  const DataCube a = testutil::random_cube(4, 5, 3, 1), b = testutil::random_cube(4, 5, 3, 2);
  std::vector<Index> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  DataCube pa(4, 5, 3), pb(4, 5, 3);
  for (Index t = 0; t < 3; ++t)
    for (Index p = 0; p < 20; ++p) {
      pa.band(t)[p] = a.at(perm[p], t);
      pb.band(t)[p] = b.at(perm[p], t);
    }
  const Metrics m1 = psnr(a, b), m2 = psnr(pa, pb);
  EXPECT_NEAR(m1.psnr_paper, m2.psnr_paper, 1e-12);
  EXPECT_NEAR(m1.psnr_standard, m2.psnr_standard, 1e-12);
}

TEST(Psnr, ScalingBehaviour) {
  const DataCube a = testutil::random_cube(6, 6, 2, 31), b = testutil::random_cube(6, 6, 2, 32);
  const double c = 4.0; // power of two keeps the scaled cubes exact
  DataCube sa = a, sb = b;
  for (double &v : sa.values())
    v *= c;
  for (double &v : sb.values())
    v *= c;
  const Metrics m = psnr(a, b), s = psnr(sa, sb);
  EXPECT_NEAR(s.psnr_standard, m.psnr_standard, 1e-12);
  EXPECT_NEAR(s.psnr_paper, m.psnr_paper - 10.0 * std::log10(c), 1e-12);
}

TEST(Psnr, Errors) {
  const DataCube a(2, 2, 1, 1.0), z(2, 2, 1, 0.0);
  EXPECT_THROW(psnr(a, z), std::invalid_argument);
  EXPECT_THROW(psnr(a, DataCube(2, 2, 2, 1.0)), std::invalid_argument);
  EXPECT_EQ(parse_psnr_formula("paper"), PsnrFormula::paper);
  EXPECT_EQ(parse_psnr_formula("standard"), PsnrFormula::standard);
  EXPECT_THROW(parse_psnr_formula("db"), std::invalid_argument);
}

TEST(Crop, CopiesRectangle) {
  const DataCube c = testutil::random_cube(5, 6, 2, 4);
  const DataCube r = crop(c, 1, 2, 3, 4);
  EXPECT_EQ(r.rows(), 3);
  EXPECT_EQ(r.cols(), 4);
  EXPECT_EQ(r(2, 3, 1), c(3, 5, 1));
  EXPECT_THROW(crop(c, 3, 0, 3, 1), std::invalid_argument);
}
