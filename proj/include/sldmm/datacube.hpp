#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace sldmm {

/// Dense m x n x B hyperspectral volume.
///
/// Storage is band-sequential: band t occupies values[t*m*n, (t+1)*m*n) and
/// each band is row-major. Every per-band algorithm in this library walks a
/// contiguous span.
class DataCube {
public:
  DataCube() = default;

  DataCube(Index rows, Index cols, Index bands, double fill = 0.0)
      : m_(rows), n_(cols), b_(bands) {
    require(rows >= 1 && cols >= 1 && bands >= 1,
            "DataCube: dimensions must be positive");
    values_.assign(static_cast<std::size_t>(rows * cols * bands), fill);
  }

  DataCube(Index rows, Index cols, Index bands, std::vector<double> values)
      : m_(rows), n_(cols), b_(bands), values_(std::move(values)) {
    require(rows >= 1 && cols >= 1 && bands >= 1,
            "DataCube: dimensions must be positive");
    require(static_cast<Index>(values_.size()) == rows * cols * bands,
            "DataCube: value count does not match m*n*B");
    for (double v : values_)
      require(std::isfinite(v), "DataCube: non-finite value");
  }

  Index rows() const { return m_; }
  Index cols() const { return n_; }
  Index bands() const { return b_; }
  Index pixels() const { return m_ * n_; }
  Index size() const { return m_ * n_ * b_; }

  double &operator()(Index r, Index c, Index t) {
    return values_[static_cast<std::size_t>(t * m_ * n_ + r * n_ + c)];
  }
  double operator()(Index r, Index c, Index t) const {
    return values_[static_cast<std::size_t>(t * m_ * n_ + r * n_ + c)];
  }
  double &at(Index pixel, Index t) {
    return values_[static_cast<std::size_t>(t * m_ * n_ + pixel)];
  }
  double at(Index pixel, Index t) const {
    return values_[static_cast<std::size_t>(t * m_ * n_ + pixel)];
  }

  std::span<double> band(Index t) {
    return {values_.data() + t * m_ * n_, static_cast<std::size_t>(m_ * n_)};
  }
  std::span<const double> band(Index t) const {
    return {values_.data() + t * m_ * n_, static_cast<std::size_t>(m_ * n_)};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const DataCube &o) const {
    return m_ == o.m_ && n_ == o.n_ && b_ == o.b_;
  }

  friend bool operator==(const DataCube &, const DataCube &) = default;

private:
  Index m_ = 0, n_ = 0, b_ = 0;
  std::vector<double> values_;
};

/// Per-band sampling sets over the m x n grid, stored like DataCube
/// (band-sequential, one byte per voxel, 1 = sampled). Immutable.
class MaskSet {
public:
  MaskSet() = default;

  MaskSet(Index rows, Index cols, Index bands, std::vector<std::uint8_t> flags)
      : m_(rows), n_(cols), b_(bands), flags_(std::move(flags)) {
    require(rows >= 1 && cols >= 1 && bands >= 1,
            "MaskSet: dimensions must be positive");
    require(static_cast<Index>(flags_.size()) == rows * cols * bands,
            "MaskSet: flag count does not match m*n*B");
    for (auto &f : flags_) {
      require(f <= 1, "MaskSet: flags must be 0 or 1");
    }
  }

  static MaskSet full(Index rows, Index cols, Index bands) {
    return {rows, cols, bands,
            std::vector<std::uint8_t>(
                static_cast<std::size_t>(rows * cols * bands), 1)};
  }

  Index rows() const { return m_; }
  Index cols() const { return n_; }
  Index bands() const { return b_; }
  Index pixels() const { return m_ * n_; }

  bool sampled(Index pixel, Index t) const {
    return flags_[static_cast<std::size_t>(t * m_ * n_ + pixel)] != 0;
  }
  std::span<const std::uint8_t> band(Index t) const {
    return {flags_.data() + t * m_ * n_, static_cast<std::size_t>(m_ * n_)};
  }
  std::span<const std::uint8_t> flags() const { return flags_; }

  Index count(Index t) const {
    auto b = band(t);
    return std::count(b.begin(), b.end(), std::uint8_t{1});
  }
  /// Observed fraction of band t, |Omega^t| / (m n).
  double rate(Index t) const {
    return static_cast<double>(count(t)) / static_cast<double>(pixels());
  }

  bool matches(const DataCube &c) const {
    return m_ == c.rows() && n_ == c.cols() && b_ == c.bands();
  }

  friend bool operator==(const MaskSet &, const MaskSet &) = default;

private:
  Index m_ = 0, n_ = 0, b_ = 0;
  std::vector<std::uint8_t> flags_;
};

enum class PsnrFormula { paper, standard };

inline const char *to_string(PsnrFormula f) {
  return f == PsnrFormula::paper ? "paper" : "standard";
}

inline PsnrFormula parse_psnr_formula(const std::string &s) {
  if (s == "paper")
    return PsnrFormula::paper;
  if (s == "standard")
    return PsnrFormula::standard;
  throw std::invalid_argument("unknown PSNR formula '" + s + "'");
}

struct Metrics {
  double mse = 0;
  double peak = 0; // max |reference|
  double psnr_paper = 0;    // 10 log10(peak / mse)
  double psnr_standard = 0; // 10 log10(peak^2 / mse)

  double psnr(PsnrFormula f) const {
    return f == PsnrFormula::paper ? psnr_paper : psnr_standard;
  }
};

/// Draws an independent uniform subset of floor(rate*m*n) pixels for every
/// band with a partial Fisher-Yates shuffle. Bands are drawn in order from a
/// single generator seeded once, so the result depends only on the arguments.
inline MaskSet make_mask(Index rows, Index cols, Index bands, double rate,
                         std::uint64_t seed) {
  require(rows >= 1 && cols >= 1 && bands >= 1,
          "make_mask: dimensions must be positive");
  require(rate > 0.0 && rate <= 1.0, "make_mask: rate must lie in (0, 1]");
  const Index npix = rows * cols;
  // the epsilon keeps e.g. 0.29*100 from flooring to 28
  const Index take = std::min<Index>(
      npix, static_cast<Index>(std::floor(rate * static_cast<double>(npix) + 1e-9)));

  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(npix * bands), 0);
  std::vector<Index> perm(static_cast<std::size_t>(npix));
  for (Index t = 0; t < bands; ++t) {
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = 0; i < take; ++i) {
      std::uniform_int_distribution<Index> pick(i, npix - 1);
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[static_cast<std::size_t>(pick(rng))]);
      flags[static_cast<std::size_t>(t * npix + perm[static_cast<std::size_t>(i)])] = 1;
    }
  }
  return {rows, cols, bands, std::move(flags)};
}

inline DataCube add_gaussian_noise(const DataCube &cube, double sigma,
                                   std::uint64_t seed) {
  require(sigma >= 0.0 && std::isfinite(sigma),
          "add_gaussian_noise: sigma must be non-negative");
  DataCube out = cube;
  if (sigma == 0.0)
    return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double &v : out.values())
    v += noise(rng);
  return out;
}

/// Zeroes every unsampled voxel. The zero is a storage convention; consumers
/// must always carry the mask alongside.
inline DataCube apply_mask(const DataCube &cube, const MaskSet &masks) {
  require(masks.matches(cube), "apply_mask: mask and cube dimensions differ");
  DataCube out = cube;
  auto v = out.values();
  auto f = masks.flags();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!f[i])
      v[i] = 0.0;
  return out;
}

/// MSE, peak and both PSNR variants of a candidate against a reference.
/// A zero MSE yields +infinity for both PSNR values.
inline Metrics psnr(const DataCube &candidate, const DataCube &reference) {
  require(candidate.same_shape(reference), "psnr: cube dimensions differ");
  auto c = candidate.values();
  auto r = reference.values();
  double sq = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double d = c[i] - r[i];
    sq += d * d;
    peak = std::max(peak, std::abs(r[i]));
  }
  require(peak > 0.0, "psnr: reference is identically zero");
  Metrics m;
  m.mse = sq / static_cast<double>(r.size());
  m.peak = peak;
  if (m.mse == 0.0) {
    m.psnr_paper = m.psnr_standard = std::numeric_limits<double>::infinity();
  } else {
    m.psnr_paper = 10.0 * std::log10(peak / m.mse);
    m.psnr_standard = 10.0 * std::log10(peak * peak / m.mse);
  }
  return m;
}

inline DataCube crop(const DataCube &cube, Index row0, Index col0, Index rows,
                     Index cols) {
  require(row0 >= 0 && col0 >= 0 && rows >= 1 && cols >= 1 &&
              row0 + rows <= cube.rows() && col0 + cols <= cube.cols(),
          "crop: rectangle outside the cube");
  DataCube out(rows, cols, cube.bands());
  for (Index t = 0; t < cube.bands(); ++t)
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c)
        out(r, c, t) = cube(row0 + r, col0 + c, t);
  return out;
}

} // namespace sldmm
