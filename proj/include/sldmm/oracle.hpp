#pragma once

// Brute-force reference implementations for verifying the fast paths.
// Everything here is deliberately naive, single-threaded and size-capped;
// none of it calls the production routine it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "datacube.hpp"
#include "graph.hpp"
#include "hsc_io.hpp"
#include "patch.hpp"
#include "solver.hpp"

namespace sldmm::oracle {

struct SyntheticSpec {
  Index m = 32, n = 32, bands = 8;
  Index rank = 3;
  Index smoothness = 3; // periodic box-blur radius for the abundance maps
  std::uint64_t seed = 1;
};

namespace detail {
// one pass of a periodic (2r+1) x (2r+1) box filter
inline std::vector<double> box_blur(const std::vector<double> &img, Index m,
                                    Index n, Index r) {
  std::vector<double> tmp(img.size()), out(img.size());
  const double norm = 1.0 / static_cast<double>(2 * r + 1);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Index q = -r; q <= r; ++q)
        s += img[static_cast<std::size_t>(i * n + ((j + q) % n + n) % n)];
      tmp[static_cast<std::size_t>(i * n + j)] = s * norm;
    }
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Index q = -r; q <= r; ++q)
        s += tmp[static_cast<std::size_t>(((i + q) % m + m) % m * n + j)];
      out[static_cast<std::size_t>(i * n + j)] = s * norm;
    }
  return out;
}
} // namespace detail

/// Linear-mixture test cube: sum over rank endmembers of a smooth
/// non-negative abundance map times a smooth spectrum. Abundances are
/// blurred uniform noise stretched to [0, 1/rank] (so they sum to at most 1
/// per pixel); spectra are random low-frequency cosine mixtures in
/// [0.1, 1]. Values therefore lie in [0, 1].
inline DataCube synth_cube(const SyntheticSpec &spec) {
  require(spec.m >= 1 && spec.n >= 1 && spec.bands >= 1,
          "synth_cube: dimensions must be positive");
  require(spec.rank >= 1 && spec.rank <= std::min<Index>(spec.bands, 8),
          "synth_cube: rank must lie in [1, min(B, 8)]");
  require(spec.smoothness >= 0, "synth_cube: smoothness must be non-negative");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Index N = spec.m * spec.n;

  std::vector<std::vector<double>> maps;
  for (Index l = 0; l < spec.rank; ++l) {
    std::vector<double> a(static_cast<std::size_t>(N));
    for (auto &v : a)
      v = unif(rng);
    if (spec.smoothness > 0)
      for (int pass = 0; pass < 3; ++pass)
        a = detail::box_blur(a, spec.m, spec.n, spec.smoothness);
    const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
    const double lo_v = *lo, span = *hi - *lo;
    for (auto &v : a)
      v = (span > 0 ? (v - lo_v) / span : 1.0) / static_cast<double>(spec.rank);
    maps.push_back(std::move(a));
  }

  std::vector<std::vector<double>> spectra;
  for (Index l = 0; l < spec.rank; ++l) {
    double c[3], phi[3], total = 0.0;
    for (int q = 0; q < 3; ++q) {
      c[q] = unif(rng) * 2.0 - 1.0;
      phi[q] = unif(rng) * 2.0 * std::numbers::pi;
      total += std::abs(c[q]);
    }
    std::vector<double> s(static_cast<std::size_t>(spec.bands));
    for (Index t = 0; t < spec.bands; ++t) {
      const double tau =
          spec.bands > 1 ? static_cast<double>(t) / static_cast<double>(spec.bands - 1) : 0.0;
      double v = 0.0;
      for (int q = 0; q < 3; ++q)
        v += c[q] * std::cos(std::numbers::pi * (q + 1) * tau + phi[q]);
      s[static_cast<std::size_t>(t)] = 0.55 + 0.45 * v / total;
    }
    spectra.push_back(std::move(s));
  }

  DataCube cube(spec.m, spec.n, spec.bands);
  for (Index t = 0; t < spec.bands; ++t)
    for (Index x = 0; x < N; ++x) {
      double v = 0.0;
      for (Index l = 0; l < spec.rank; ++l)
        v += maps[static_cast<std::size_t>(l)][static_cast<std::size_t>(x)] *
             spectra[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
      cube.at(x, t) = v;
    }
  return cube;
}

/// All-pairs kNN: full distance row, full sort. Self first, then
/// (distance, index) order; distances summed over ascending coordinates.
inline NeighborTable naive_knn(const PatchMatrix &p, Index k) {
  require(k >= 1 && k <= p.rows(), "naive_knn: bad k");
  NeighborTable t(p.rows(), k);
  std::vector<Neighbor> all;
  for (Index x = 0; x < p.rows(); ++x) {
    all.clear();
    for (Index y = 0; y < p.rows(); ++y) {
      if (y == x)
        continue;
      double s = 0.0;
      for (Index j = 0; j < p.cols(); ++j) {
        const double diff = p(x, j) - p(y, j);
        s += diff * diff;
      }
      all.push_back({y, s});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor &a, const Neighbor &b) {
      return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
    });
    auto row = t.row(x);
    row[0] = {x, 0.0};
    for (Index e = 1; e < k; ++e)
      row[static_cast<std::size_t>(e)] = all[static_cast<std::size_t>(e - 1)];
  }
  return t;
}

/// Dense bar w recomputed from scratch: naive kNN, scale = distance to the
/// r_sigma-th neighbor (with the zero fallbacks), Gaussian weights.
inline Eigen::MatrixXd dense_bar_w(const PatchMatrix &p, Index k, Index r_sigma) {
  const Index N = p.rows();
  require(N <= 4096, "dense_bar_w: size cap exceeded");
  const NeighborTable t = naive_knn(p, k);
  std::vector<double> sigma(static_cast<std::size_t>(N), 1.0);
  for (Index x = 0; x < N; ++x) {
    std::vector<double> d;
    for (const auto &e : t.row(x))
      d.push_back(std::sqrt(e.dist2));
    double s = d[static_cast<std::size_t>(r_sigma - 1)];
    if (s == 0.0) {
      s = 1.0;
      for (double v : d)
        if (v > 0.0) {
          s = v;
          break;
        }
    }
    sigma[static_cast<std::size_t>(x)] = s;
  }
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
  for (Index x = 0; x < N; ++x)
    for (const auto &e : t.row(x)) {
      const double w = std::exp(-e.dist2 / (sigma[static_cast<std::size_t>(x)] *
                                            sigma[static_cast<std::size_t>(e.index)]));
      W(x, e.index) = std::max(w, std::numeric_limits<double>::min());
    }
  return W;
}

inline Eigen::MatrixXd to_dense(const SparseGraph &g) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(g.size(), g.size());
  for (Index r = 0; r < g.size(); ++r) {
    auto cs = g.row_cols(r);
    auto ws = g.row_weights(r);
    for (std::size_t e = 0; e < cs.size(); ++e)
      D(r, cs[e]) = ws[e];
  }
  return D;
}

/// wtilde(x, y) = sum_i bar_w(x_(1-i), y_(1-i)), evaluated entry by entry.
/// Shifts are recomputed here from (row, col) arithmetic rather than
/// shift_index.
inline Eigen::MatrixXd dense_wtilde(const Eigen::MatrixXd &bar_w,
                                    const PatchGeometry &g) {
  const Index N = g.pixels();
  require(bar_w.rows() == N && N <= 4096, "dense_wtilde: bad size");
  auto back = [&](Index x, Index i) {
    const Index dr = (i - 1) / g.s2, dc = (i - 1) % g.s2;
    const Index r = x / g.n, c = x % g.n;
    return ((r - dr + g.m) % g.m) * g.n + (c - dc + g.n) % g.n;
  };
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
  for (Index x = 0; x < N; ++x)
    for (Index y = 0; y < N; ++y) {
      double s = 0.0;
      for (Index i = 1; i <= g.spatial_dim(); ++i)
        s += bar_w(back(x, i), back(y, i));
      W(x, y) = s;
    }
  return W;
}

struct DenseSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd rhs;
};

/// Band operator written out term by term from the residual definition.
inline DenseSystem dense_band_system(const Eigen::MatrixXd &w,
                                     std::span<const std::uint8_t> mask,
                                     std::span<const double> b, double lambda,
                                     double rate) {
  const Index N = w.rows();
  const double mu = 1.0 / rate - 1.0;
  DenseSystem s{Eigen::MatrixXd::Zero(N, N), Eigen::VectorXd::Zero(N)};
  for (Index x = 0; x < N; ++x) {
    const double ox = mask[static_cast<std::size_t>(x)] ? 1.0 : 0.0;
    for (Index y = 0; y < N; ++y) {
      if (y == x || w(x, y) == 0.0)
        continue;
      const double oy = mask[static_cast<std::size_t>(y)] ? 1.0 : 0.0;
      const double c = (2.0 + mu * ox + mu * oy) * w(x, y);
      s.A(x, x) += c;
      s.A(x, y) -= c;
    }
    s.A(x, x) += lambda * ox;
    s.rhs(x) = lambda * ox * b[static_cast<std::size_t>(x)];
  }
  return s;
}

/// Direct LU solve of an assembled band system (at most 4096 unknowns).
/// Throws NumericalError when the matrix is numerically singular.
inline std::vector<double> dense_solve(const BandSystem &sys) {
  const Index N = sys.A.n;
  require(N <= 4096, "dense_solve: size cap exceeded");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (Index r = 0; r < N; ++r)
    for (Index e = sys.A.offsets[r]; e < sys.A.offsets[r + 1]; ++e)
      A(r, sys.A.cols[e]) += sys.A.values[e];
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(sys.rhs.data(), N);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (!(lu.rcond() > 1e-14))
    throw NumericalError("dense_solve: matrix is singular to working precision");
  const Eigen::VectorXd x = lu.solve(rhs);
  if (!x.allFinite())
    throw NumericalError("dense_solve: non-finite solution");
  return {x.data(), x.data() + N};
}

/// Central differences (f(u + h e_x) - f(u - h e_x)) / 2h for every pixel x.
inline std::vector<double>
fd_gradient(const std::function<double(std::span<const double>)> &f,
            std::span<const double> u, double h) {
  require(h > 0.0, "fd_gradient: step must be positive");
  std::vector<double> work(u.begin(), u.end());
  std::vector<double> g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    work[i] = u[i] + h;
    const double fp = f(work);
    work[i] = u[i] - h;
    const double fm = f(work);
    work[i] = u[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Single-band energy in patch-component form: for every window offset i,
/// Dirichlet sums of P_i u over the directed bar w, with rows whose
/// component is sampled weighted by 1/r, plus the lambda fidelity term.
inline double patch_form_energy(std::span<const double> u,
                                const Eigen::MatrixXd &bar_w,
                                std::span<const std::uint8_t> mask,
                                std::span<const double> b, double lambda,
                                double rate, const PatchGeometry &g) {
  const Index N = g.pixels();
  auto fwd = [&](Index x, Index i) { // x shifted by i-1
    const Index dr = (i - 1) / g.s2, dc = (i - 1) % g.s2;
    const Index r = x / g.n, c = x % g.n;
    return ((r + dr) % g.m) * g.n + (c + dc) % g.n;
  };
  double e = 0.0;
  for (Index x = 0; x < N; ++x)
    if (mask[static_cast<std::size_t>(x)]) {
      const double d = u[static_cast<std::size_t>(x)] - b[static_cast<std::size_t>(x)];
      e += lambda * d * d;
    }
  for (Index i = 1; i <= g.spatial_dim(); ++i)
    for (Index x = 0; x < N; ++x) {
      const Index xs = fwd(x, i);
      const double weight = mask[static_cast<std::size_t>(xs)] ? 1.0 / rate : 1.0;
      for (Index y = 0; y < N; ++y) {
        if (bar_w(x, y) == 0.0)
          continue;
        const double d = u[static_cast<std::size_t>(xs)] -
                         u[static_cast<std::size_t>(fwd(y, i))];
        e += weight * bar_w(x, y) * d * d;
      }
    }
  return e;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Small end-to-end verification of the fast paths against the references
/// above. Intended for `selfcheck`; every case runs in well under a second.
inline std::vector<CheckResult> selfcheck() {
  std::vector<CheckResult> out;
  auto record = [&](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  auto sci = [](double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << v;
    return os.str();
  };

  // adjoint identity on a permutation: compare sorted products
  {
    const PatchGeometry g(2, 3, 6, 6);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1, 1);
    std::vector<double> u(36), v(36);
    bool ok = true;
    for (Index i = 1; i <= g.spatial_dim(); ++i) {
      for (auto &a : u) a = U(rng);
      for (auto &a : v) a = U(rng);
      const auto pu = patch_component_apply(u, i, g);
      const auto pv = patch_component_adjoint(v, i, g);
      std::vector<double> l, r;
      for (std::size_t x = 0; x < 36; ++x) {
        l.push_back(pu[x] * v[x]);
        r.push_back(u[x] * pv[x]);
      }
      std::sort(l.begin(), l.end());
      std::sort(r.begin(), r.end());
      double sl = 0, sr = 0;
      for (std::size_t x = 0; x < 36; ++x) {
        sl += l[x];
        sr += r[x];
      }
      ok = ok && sl == sr;
    }
    record("patch adjoint", ok, "6x6, 2x3 window");
  }

  const DataCube cube = synth_cube({6, 6, 3, 2, 1, 5});
  const PatchGeometry geom(2, 2, 6, 6);
  const PatchMatrix p = extract_patches(cube, geom);

  {
    const auto fast = knn_exact(p, 5, {1, 7});
    const auto slow = naive_knn(p, 5);
    bool ok = true;
    for (Index x = 0; x < p.rows(); ++x)
      for (Index e = 0; e < 5; ++e)
        ok = ok && fast.row(x)[e].index == slow.row(x)[e].index &&
             fast.row(x)[e].dist2 == slow.row(x)[e].dist2;
    record("knn vs brute force", ok, "36 points, d=12, k=5");
  }

  {
    const auto table = knn_exact(p, 5, {1, 0});
    const auto sigma = local_scale(table, 3);
    const SparseGraph bw = build_bar_w(p, table, sigma);
    const SparseGraph wt = assemble_wtilde(bw, geom);
    const Eigen::MatrixXd dbw = dense_bar_w(p, 5, 3);
    const Eigen::MatrixXd dwt = dense_wtilde(dbw, geom);
    const double e1 = (to_dense(bw) - dbw).cwiseAbs().maxCoeff();
    const double e2 = (to_dense(wt) - dwt).cwiseAbs().maxCoeff();
    std::ostringstream d;
    d << "max |bar w diff|=" << e1 << " max |wtilde diff|=" << e2;
    record("graph vs dense", e1 <= 1e-15 && e2 <= 1e-15 * geom.spatial_dim(), d.str());
  }

  {
    const auto table = knn_exact(p, 5, {1, 0});
    const SparseGraph w =
        assemble_wtilde(build_bar_w(p, table, local_scale(table, 3)), geom).symmetrized();
    const MaskSet mask = make_mask(6, 6, 1, 0.25, 3);
    const double lambda = 10.0 * w.mean_row_sum();
    const BandSystem sys =
        assemble_band_system(w, mask.band(0), cube.band(0), lambda, mask.rate(0));
    const auto direct = dense_solve(sys);
    const std::vector<double> x0(36, 0.0);
    const auto it = solve_band(sys, x0, {1e-13, 30, 2000});
    double num = 0, den = 0;
    for (std::size_t i = 0; i < direct.size(); ++i) {
      num += (it.x[i] - direct[i]) * (it.x[i] - direct[i]);
      den += direct[i] * direct[i];
    }
    const double rel = std::sqrt(num / den);
    record("gmres vs direct", rel <= 1e-8, "relative error " + sci(rel));

    auto energy = [&](std::span<const double> v) {
      return wnll_energy(v, w, mask.band(0), cube.band(0), lambda, mask.rate(0));
    };
    const auto grad = fd_gradient(energy, it.x, 1e-5);
    double gmax = 0;
    for (double gv : grad)
      gmax = std::max(gmax, std::abs(gv));
    const double scale = sys.A.inf_norm();
    record("stationarity", gmax <= 1e-6 * scale,
           "max |grad|=" + sci(gmax));
  }

  {
    std::stringstream ss;
    io::write_hsc(ss, cube);
    const DataCube back = io::read_hsc(ss);
    bool ok = back.same_shape(cube);
    for (Index i = 0; ok && i < cube.size(); ++i)
      ok = back.values()[static_cast<std::size_t>(i)] ==
           io::detail::widen(static_cast<float>(cube.values()[static_cast<std::size_t>(i)]));
    record("hsc round trip", ok, "6x6x3");
  }
  return out;
}

} // namespace sldmm::oracle
