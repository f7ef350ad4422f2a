#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <sldmm/hsc_io.hpp>

#include "test_util.hpp"

using namespace sldmm;

namespace {

// random f32 samples (negatives, tiny and subnormal magnitudes included) in
// the double form the reader produces for them
DataCube f32_cube(Index m, Index n, Index b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> U(-1e3f, 1e3f);
  std::vector<double> v(static_cast<std::size_t>(m * n * b));
  for (auto &x : v) {
    const float scale = rng() % 4 == 0 ? 1e-30f : (rng() % 4 == 0 ? 1e-42f : 1.0f);
    x = io::detail::widen(U(rng) * scale);
  }
  return {m, n, b, std::move(v)};
}

std::string bytes_of(const DataCube &c) {
  std::ostringstream os;
  io::write_hsc(os, c);
  return os.str();
}

} // namespace

TEST(Hsc, HeaderIsExact) {
  const DataCube c(32, 32, 8, 0.5);
  const std::string s = bytes_of(c);
  const std::string head = "HSC1\nm=32 n=32 B=8 dtype=f32 order=bsq\n";
  ASSERT_EQ(s.substr(0, head.size()), head);
  EXPECT_EQ(s.size(), head.size() + 32 * 32 * 8 * 4);
}

TEST(Hsc, SamplesAreLittleEndianF32InBandOrder) {
  const DataCube c(1, 2, 2, {1.0, -2.0, 0.5, 3.0});
  const std::string s = bytes_of(c);
  const std::string head = "HSC1\nm=1 n=2 B=2 dtype=f32 order=bsq\n";
  const auto *p = reinterpret_cast<const unsigned char *>(s.data() + head.size());
  const float expect[] = {1.0f, -2.0f, 0.5f, 3.0f};
  for (int i = 0; i < 4; ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(expect[i]);
    for (int k = 0; k < 4; ++k)
      EXPECT_EQ(p[i * 4 + k], (bits >> (8 * k)) & 0xffu);
  }
}

TEST(Hsc, RoundTripIsBitwiseLossless) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 dims(seed + 1000);
    const Index m = 1 + static_cast<Index>(dims() % 9), n = 1 + static_cast<Index>(dims() % 9),
                b = 1 + static_cast<Index>(dims() % 5);
    const DataCube c = f32_cube(m, n, b, seed);
    std::stringstream ss;
    io::write_hsc(ss, c);
    const DataCube r = io::read_hsc(ss);
    ASSERT_TRUE(r.same_shape(c));
    for (std::size_t i = 0; i < c.values().size(); ++i)
      ASSERT_EQ(std::bit_cast<std::uint64_t>(r.values()[i]),
                std::bit_cast<std::uint64_t>(c.values()[i]));
  }
}

TEST(Hsc, RewriteIsByteIdenticalForArbitraryDoubles) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DataCube c = testutil::random_cube(4, 5, 3, seed, -1e6, 1e6);
    const std::string first = bytes_of(c);
    std::istringstream is(first);
    EXPECT_EQ(bytes_of(io::read_hsc(is)), first);
  }
}

TEST(Hsc, DecimalValuesReadBackAsWritten) {
  const DataCube c(1, 4, 1, {0.9, 0.1, -2.675, 1e-7});
  std::stringstream ss;
  io::write_hsc(ss, c);
  EXPECT_EQ(io::read_hsc(ss), c);
}

TEST(Hsc, WidenNarrowsBackToTheSameFloat) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100000; ++i) {
    const auto bits = static_cast<std::uint32_t>(rng());
    const float f = std::bit_cast<float>(bits);
    if (!std::isfinite(f))
      continue;
    ASSERT_EQ(std::bit_cast<std::uint32_t>(static_cast<float>(io::detail::widen(f))), bits);
  }
}

TEST(Hsc, MaskRoundTrip) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const MaskSet m = make_mask(3 + seed % 5, 4 + seed % 3, 1 + seed % 4, 0.3, seed);
    std::stringstream ss;
    io::write_mask(ss, m);
    const std::string s = ss.str();
    EXPECT_NE(s.find("dtype=u8"), std::string::npos);
    const MaskSet r = io::read_mask(ss);
    ASSERT_EQ(r.rows(), m.rows());
    ASSERT_EQ(r.bands(), m.bands());
    EXPECT_TRUE(std::equal(m.flags().begin(), m.flags().end(), r.flags().begin()));
  }
}

TEST(Hsc, FileRoundTrip) {
  const auto dir = testutil::temp_dir("hsc");
  const DataCube c = f32_cube(5, 4, 3, 9);
  io::write_hsc((dir / "c.hsc").string(), c);
  EXPECT_EQ(io::read_hsc((dir / "c.hsc").string()), c);
  EXPECT_THROW(io::read_hsc((dir / "missing.hsc").string()), IoError);
  EXPECT_THROW(io::write_hsc((dir / "no" / "such" / "x.hsc").string(), c), IoError);
}

TEST(Hsc, RejectsMalformedInput) {
  auto parse = [](const std::string &s) {
    std::istringstream is(s);
    return io::read_hsc(is);
  };
  const std::string four(4 * 4, '\0');
  EXPECT_THROW(parse("HSC2\nm=1 n=1 B=1 dtype=f32 order=bsq\n" + four), IoError);
  EXPECT_THROW(parse("HSC1\nm=1 n=1 dtype=f32 order=bsq\n" + four), IoError);
  EXPECT_THROW(parse("HSC1\nm=1 n=1 B=1 dtype=f32 order=bip\n" + four), IoError);
  EXPECT_THROW(parse("HSC1\nm=0 n=1 B=1 dtype=f32 order=bsq\n"), IoError);
  EXPECT_THROW(parse("HSC1\nm=1 n=1 B=1 dtype=f32 order=bsq color=red\n" + four), IoError);
  EXPECT_THROW(parse("HSC1\nm=2 n=2 B=1 dtype=f32 order=bsq\n" + std::string(8, '\0')), IoError);
  EXPECT_THROW(parse("HSC1\nm=1 n=1 B=1 dtype=u8 order=bsq\n" + std::string(1, '\1')), IoError);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::string bad = "HSC1\nm=1 n=1 B=1 dtype=f32 order=bsq\n";
  bad.append(reinterpret_cast<const char *>(&nan), 4);
  EXPECT_THROW(parse(bad), IoError);

  std::istringstream m("HSC1\nm=1 n=2 B=1 dtype=u8 order=bsq\n\x01\x02");
  EXPECT_THROW(io::read_mask(m), IoError);
}

TEST(Export, CsvMatchesValues) {
  const DataCube c(2, 2, 1, {0.0, 1.0, 0.5, 0.25});
  std::ostringstream os;
  io::export_band_csv(os, c, 0);
  EXPECT_EQ(os.str(), "0,1\n0.5,0.25\n");
}

TEST(Export, PgmHeaderAndScaling) {
  const DataCube c(2, 3, 2, {0.0, 1.0, 0.5, 0.25, 0.75, 1.0, 7, 7, 7, 7, 7, 7});
  std::ostringstream os;
  io::export_band_pgm(os, c, 0);
  const std::string s = os.str();
  const std::string head = "P5\n# band=1 min=0 max=1\n3 2\n65535\n";
  ASSERT_EQ(s.substr(0, head.size()), head);
  ASSERT_EQ(s.size(), head.size() + 12);
  auto sample = [&](std::size_t i) {
    const auto *p = reinterpret_cast<const unsigned char *>(s.data() + head.size());
    return (p[2 * i] << 8) | p[2 * i + 1];
  };
  EXPECT_EQ(sample(0), 0);
  EXPECT_EQ(sample(1), 65535);
  EXPECT_EQ(sample(2), 32768); // round(0.5 * 65535)
  EXPECT_EQ(sample(3), 16384);
}

TEST(Export, ConstantBandIsMidGray) {
  const DataCube c(2, 3, 2, {0.0, 1.0, 0.5, 0.25, 0.75, 1.0, 7, 7, 7, 7, 7, 7});
  std::ostringstream os;
  io::export_band_pgm(os, c, 1);
  const std::string s = os.str();
  const auto body = s.substr(s.size() - 12);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(static_cast<unsigned char>(body[2 * i]), 0x80);
    EXPECT_EQ(static_cast<unsigned char>(body[2 * i + 1]), 0x00);
  }
  EXPECT_THROW(io::export_band_pgm(os, c, 2), std::invalid_argument);
  EXPECT_THROW(io::export_band_csv(os, c, -1), std::invalid_argument);
}
