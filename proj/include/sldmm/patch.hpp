#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "datacube.hpp"

namespace sldmm {

/// s1 x s2 spatial window on an m x n periodic grid.
///
/// Window offsets are enumerated row-major: offset j in [0, s1*s2) is
/// (j / s2, j % s2) relative to the anchoring top-left pixel.
struct PatchGeometry {
  Index s1 = 1, s2 = 1;
  Index m = 1, n = 1;

  PatchGeometry() = default;
  PatchGeometry(Index patch_rows, Index patch_cols, Index rows, Index cols)
      : s1(patch_rows), s2(patch_cols), m(rows), n(cols) {
    require(rows >= 1 && cols >= 1, "PatchGeometry: image must be non-empty");
    require(patch_rows >= 1 && patch_rows <= rows && patch_cols >= 1 &&
                patch_cols <= cols,
            "PatchGeometry: need 1 <= s1 <= m and 1 <= s2 <= n");
  }

  Index spatial_dim() const { return s1 * s2; }
  Index dim(Index bands) const { return s1 * s2 * bands; }
  Index pixels() const { return m * n; }
};

/// Pixel reached from x by |j| steps of the window enumeration, forwards for
/// j >= 0 and backwards for j < 0, wrapping periodically in both axes.
/// shift_index(shift_index(x, j), -j) == x.
inline Index shift_index(Index x, Index j, const PatchGeometry &g) {
  const Index steps = j < 0 ? -j : j;
  Index dr = steps / g.s2, dc = steps % g.s2;
  if (j < 0) {
    dr = -dr;
    dc = -dc;
  }
  const Index r = x / g.n, c = x % g.n;
  const Index rr = ((r + dr) % g.m + g.m) % g.m;
  const Index cc = ((c + dc) % g.n + g.n) % g.n;
  return rr * g.n + cc;
}

/// Row-per-pixel matrix of flattened patches. Column i*B + t holds band t of
/// the pixel at window offset i (spatial index outer, band index inner).
using PatchMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Generates patch rows on demand without materializing the full
/// (m*n) x d matrix; yields exactly the rows extract_patches would.
class CubePatchView {
public:
  CubePatchView(const DataCube &cube, const PatchGeometry &geom)
      : cube_(&cube), geom_(geom) {
    require(geom.m == cube.rows() && geom.n == cube.cols(),
            "CubePatchView: geometry does not match cube");
  }

  Index rows() const { return cube_->pixels(); }
  Index cols() const { return geom_.dim(cube_->bands()); }

  void row(Index x, std::span<double> out) const {
    const Index B = cube_->bands();
    for (Index i = 0; i < geom_.spatial_dim(); ++i) {
      const Index src = shift_index(x, i, geom_);
      for (Index t = 0; t < B; ++t)
        out[static_cast<std::size_t>(i * B + t)] = cube_->at(src, t);
    }
  }

private:
  const DataCube *cube_;
  PatchGeometry geom_;
};

/// Adapts a materialized PatchMatrix to the same row interface.
class DensePatchSource {
public:
  explicit DensePatchSource(const PatchMatrix &p) : p_(&p) {}
  Index rows() const { return p_->rows(); }
  Index cols() const { return p_->cols(); }
  void row(Index x, std::span<double> out) const {
    const double *src = p_->data() + x * p_->cols();
    std::copy(src, src + p_->cols(), out.begin());
  }

private:
  const PatchMatrix *p_;
};

inline PatchMatrix extract_patches(const DataCube &cube,
                                   const PatchGeometry &geom) {
  require(geom.m == cube.rows() && geom.n == cube.cols(),
          "extract_patches: geometry does not match cube");
  CubePatchView view(cube, geom);
  PatchMatrix out(view.rows(), view.cols());
  for (Index x = 0; x < view.rows(); ++x)
    view.row(x, {out.data() + x * out.cols(), static_cast<std::size_t>(out.cols())});
  return out;
}

namespace detail {
inline std::vector<double> permute_band(std::span<const double> band,
                                        Index offset, const PatchGeometry &g) {
  require(static_cast<Index>(band.size()) == g.pixels(),
          "patch component: band size does not match geometry");
  std::vector<double> out(band.size());
  for (Index x = 0; x < g.pixels(); ++x)
    out[static_cast<std::size_t>(x)] =
        band[static_cast<std::size_t>(shift_index(x, offset, g))];
  return out;
}
} // namespace detail

/// (P_i u)(x) = u(x shifted by i-1), i in [1, s1*s2].
inline std::vector<double> patch_component_apply(std::span<const double> band,
                                                 Index i,
                                                 const PatchGeometry &geom) {
  require(i >= 1 && i <= geom.spatial_dim(),
          "patch_component_apply: component index out of range");
  return detail::permute_band(band, i - 1, geom);
}

/// (P_i^* v)(x) = v(x shifted by 1-i). Under periodic wrap-around each P_i
/// is a permutation, so this is both its adjoint and its inverse.
inline std::vector<double> patch_component_adjoint(std::span<const double> band,
                                                   Index i,
                                                   const PatchGeometry &geom) {
  require(i >= 1 && i <= geom.spatial_dim(),
          "patch_component_adjoint: component index out of range");
  return detail::permute_band(band, 1 - i, geom);
}

} // namespace sldmm
