#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "datacube.hpp"
#include "graph.hpp"
#include "patch.hpp"
#include "sparse.hpp"

namespace sldmm {

/// Sampled-row emphasis weight mu = 1/r - 1.
inline double mu_from_rate(double rate) {
  require(rate > 0.0 && rate <= 1.0, "sampling rate must lie in (0, 1]");
  return 1.0 / rate - 1.0;
}

/// General square CSR matrix; rows sorted by column, diagonal always stored.
struct CsrMatrix {
  Index n = 0;
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<double> values;
  std::vector<double> diag;

  void multiply(std::span<const double> x, std::span<double> y) const {
    for (Index r = 0; r < n; ++r) {
      double s = 0.0;
      for (Index e = offsets[r]; e < offsets[r + 1]; ++e)
        s += values[e] * x[static_cast<std::size_t>(cols[e])];
      y[static_cast<std::size_t>(r)] = s;
    }
  }

  double at(Index r, Index c) const {
    for (Index e = offsets[r]; e < offsets[r + 1]; ++e)
      if (cols[e] == c)
        return values[e];
    return 0.0;
  }

  /// Largest absolute row sum.
  double inf_norm() const {
    double best = 0.0;
    for (Index r = 0; r < n; ++r) {
      double s = 0.0;
      for (Index e = offsets[r]; e < offsets[r + 1]; ++e)
        s += std::abs(values[e]);
      best = std::max(best, s);
    }
    return best;
  }
};

/// One band's linear system A u = rhs. Row x encodes
///   2 sum_y w(x,y)(u(x)-u(y)) + mu [x in Omega] sum_y w(x,y)(u(x)-u(y))
///   + mu sum_{y in Omega} w(x,y)(u(x)-u(y)) + lambda [x in Omega](u(x)-b(x))
/// with mu = 1/r - 1.
struct BandSystem {
  CsrMatrix A;
  std::vector<double> rhs;
  Index band = 0;
  double lambda = 0;
  double mu = 0;
};

inline BandSystem assemble_band_system(const SparseGraph &w,
                                       std::span<const std::uint8_t> mask,
                                       std::span<const double> b,
                                       double lambda, double rate,
                                       Index band = 0) {
  const Index N = w.size();
  require(static_cast<Index>(mask.size()) == N &&
              static_cast<Index>(b.size()) == N,
          "assemble_band_system: size mismatch");
  require(lambda >= 0.0, "assemble_band_system: lambda must be non-negative");
  const double mu = mu_from_rate(rate);

  BandSystem sys;
  sys.band = band;
  sys.lambda = lambda;
  sys.mu = mu;
  sys.rhs.assign(static_cast<std::size_t>(N), 0.0);
  CsrMatrix &A = sys.A;
  A.n = N;
  A.diag.assign(static_cast<std::size_t>(N), 0.0);
  A.cols.reserve(static_cast<std::size_t>(w.nnz() + N));
  A.values.reserve(A.cols.capacity());

  for (Index x = 0; x < N; ++x) {
    const bool sx = mask[static_cast<std::size_t>(x)] != 0;
    auto cs = w.row_cols(x);
    auto ws = w.row_weights(x);

    // diagonal: sum of the off-diagonal coupling coefficients. Summing them
    // directly (rather than subtracting the self term from the full row)
    // keeps tiny weights from cancelling to an exact zero.
    double diag = 0.0;
    for (std::size_t e = 0; e < cs.size(); ++e) {
      if (cs[e] == x)
        continue;
      const bool sy = mask[static_cast<std::size_t>(cs[e])] != 0;
      diag += (2.0 + (sx ? mu : 0.0) + (sy ? mu : 0.0)) * ws[e];
    }
    if (sx) {
      diag += lambda;
      sys.rhs[static_cast<std::size_t>(x)] = lambda * b[static_cast<std::size_t>(x)];
    }

    bool placed = false;
    auto emit_diag = [&] {
      A.cols.push_back(x);
      A.values.push_back(diag);
      placed = true;
    };
    for (std::size_t e = 0; e < cs.size(); ++e) {
      const Index y = cs[e];
      if (!placed && y >= x)
        emit_diag();
      if (y == x)
        continue;
      const bool sy = mask[static_cast<std::size_t>(y)] != 0;
      const double c = 2.0 + (sx ? mu : 0.0) + (sy ? mu : 0.0);
      A.cols.push_back(y);
      A.values.push_back(-c * ws[e]);
    }
    if (!placed)
      emit_diag();
    A.diag[static_cast<std::size_t>(x)] = diag;
    A.offsets.push_back(static_cast<Index>(A.cols.size()));
  }
  return sys;
}

/// Decoupled single-band objective on the shift-summed graph,
///   sum_x (1 + mu [x in Omega]) sum_y w(x,y)(u(x)-u(y))^2
///   + lambda sum_{x in Omega} (u(x)-b(x))^2,
/// i.e. the weighted nonlocal Laplacian energy where sampled rows carry the
/// 1/r weight. For symmetric w, A u - rhs of the band system is exactly half
/// its gradient.
inline double wnll_energy(std::span<const double> u, const SparseGraph &w,
                          std::span<const std::uint8_t> mask,
                          std::span<const double> b, double lambda,
                          double rate) {
  const Index N = w.size();
  require(static_cast<Index>(u.size()) == N &&
              static_cast<Index>(mask.size()) == N &&
              static_cast<Index>(b.size()) == N,
          "wnll_energy: size mismatch");
  const double mu = mu_from_rate(rate);
  double e = 0.0;
  for (Index x = 0; x < N; ++x) {
    const bool sx = mask[static_cast<std::size_t>(x)] != 0;
    auto cs = w.row_cols(x);
    auto ws = w.row_weights(x);
    double row = 0.0;
    for (std::size_t j = 0; j < cs.size(); ++j) {
      const double diff =
          u[static_cast<std::size_t>(x)] - u[static_cast<std::size_t>(cs[j])];
      row += ws[j] * diff * diff;
    }
    e += (sx ? 1.0 + mu : 1.0) * row;
    if (sx) {
      const double r = u[static_cast<std::size_t>(x)] - b[static_cast<std::size_t>(x)];
      e += lambda * r * r;
    }
  }
  return e;
}

struct GmresOptions {
  double tol = 1e-6; // relative preconditioned residual
  Index restart = 30;
  Index max_iters = 500;
};

struct BandSolution {
  std::vector<double> x;
  Index iterations = 0;
  double residual = 0; // final |D^-1 (rhs - A x)| / |D^-1 rhs|
  bool converged = false;
};

/// Restarted GMRES with Jacobi (diagonal) left preconditioning, warm-started
/// from x0. Returns the last iterate, which has the smallest residual seen
/// since GMRES residuals never increase.
inline BandSolution solve_band(const BandSystem &sys, std::span<const double> x0,
                               const GmresOptions &opt = {}) {
  const CsrMatrix &A = sys.A;
  const Index N = A.n;
  require(static_cast<Index>(x0.size()) == N, "solve_band: x0 size mismatch");
  require(opt.tol > 0.0 && opt.tol < 1.0, "solve_band: tol must lie in (0, 1)");
  require(opt.restart >= 1 && opt.max_iters >= 0, "solve_band: bad iteration limits");

  using Vec = Eigen::VectorXd;
  Vec dinv(N);
  for (Index i = 0; i < N; ++i) {
    const double d = A.diag[static_cast<std::size_t>(i)];
    if (d == 0.0 || !std::isfinite(d))
      throw NumericalError("solve_band: zero diagonal at row " + std::to_string(i) +
                           " (band " + std::to_string(sys.band) + ")");
    dinv(i) = 1.0 / d;
  }

  BandSolution out;
  Vec x = Eigen::Map<const Vec>(x0.data(), N);
  const Vec rhs = Eigen::Map<const Vec>(sys.rhs.data(), N);
  const double ref = dinv.cwiseProduct(rhs).norm();
  if (ref == 0.0) {
    out.x.assign(static_cast<std::size_t>(N), 0.0);
    out.converged = true;
    return out;
  }

  const auto n = static_cast<std::size_t>(N);
  auto apply = [&](const double *v, Vec &w) {
    A.multiply({v, n}, {w.data(), n});
    w.array() *= dinv.array();
  };

  const Index m = opt.restart;
  Eigen::MatrixXd V(N, m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
  Vec cs(m), sn(m), g(m + 1), w(N), Ax(N);

  while (true) {
    apply(x.data(), Ax);
    Vec r = dinv.cwiseProduct(rhs) - Ax;
    const double beta = r.norm();
    out.residual = beta / ref;
    if (out.residual <= opt.tol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= opt.max_iters)
      break;

    V.col(0) = r / beta;
    g.setZero();
    g(0) = beta;
    H.setZero();
    Index j = 0;
    for (; j < m && out.iterations < opt.max_iters; ++j) {
      ++out.iterations;
      apply(V.col(j).data(), w);
      for (Index i = 0; i <= j; ++i) {
        H(i, j) = V.col(i).dot(w);
        w -= H(i, j) * V.col(i);
      }
      const double h_next = w.norm();
      for (Index i = 0; i < j; ++i) {
        const double t = cs(i) * H(i, j) + sn(i) * H(i + 1, j);
        H(i + 1, j) = -sn(i) * H(i, j) + cs(i) * H(i + 1, j);
        H(i, j) = t;
      }
      const double denom = std::hypot(H(j, j), h_next);
      if (denom == 0.0) {
        // A maps the current direction to zero: no progress possible
        break;
      }
      cs(j) = H(j, j) / denom;
      sn(j) = h_next / denom;
      H(j, j) = denom;
      g(j + 1) = -sn(j) * g(j);
      g(j) = cs(j) * g(j);
      const bool breakdown = h_next <= 1e-14 * denom;
      if (!breakdown)
        V.col(j + 1) = w / h_next;
      if (std::abs(g(j + 1)) / ref <= opt.tol || breakdown) {
        ++j;
        break;
      }
    }
    if (j == 0)
      break;
    Vec y = H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    x += V.leftCols(j) * y;
    if (!x.allFinite())
      throw NumericalError("solve_band: non-finite iterate (band " +
                           std::to_string(sys.band) + ")");
  }
  out.x.assign(x.data(), x.data() + N);
  return out;
}

struct SolverConfig {
  Index s1 = 2, s2 = 2;
  Index k = 20;
  Index r_sigma = 10;
  /// lambda = lambda_rel * mean row sum of the system weights
  double lambda_rel = 100.0;
  Index outer_iters = 3;
  double gmres_tol = 1e-6;
  Index gmres_restart = 30;
  Index gmres_max_iters = 500;
  PsnrFormula psnr_formula = PsnrFormula::paper;
  /// Solve with the symmetric part of wtilde (see build_similarity_graph).
  bool symmetrize = true;
  unsigned threads = default_thread_count();
  std::size_t patch_memory_budget = std::size_t{1} << 30;

  void validate() const {
    require(s1 >= 1 && s2 >= 1, "SolverConfig: patch size must be positive");
    require(k >= 1, "SolverConfig: k must be positive");
    require(r_sigma >= 2 && r_sigma <= k, "SolverConfig: r_sigma must lie in [2, k]");
    require(lambda_rel >= 0.0 && std::isfinite(lambda_rel),
            "SolverConfig: lambda_rel must be non-negative");
    require(outer_iters >= 1, "SolverConfig: outer_iters must be at least 1");
    require(gmres_tol > 0.0 && gmres_tol < 1.0, "SolverConfig: gmres_tol must lie in (0, 1)");
    require(gmres_restart >= 1 && gmres_max_iters >= 1,
            "SolverConfig: GMRES limits must be positive");
  }

  GraphConfig graph() const {
    return {k, r_sigma, symmetrize, threads, patch_memory_budget};
  }
  GmresOptions gmres() const { return {gmres_tol, gmres_restart, gmres_max_iters}; }
};

struct BandLog {
  Index iteration = 0; // 1-based outer iteration
  Index band = 0;      // 0-based
  Index gmres_iters = 0;
  double residual = 0;
  bool converged = false;
  double energy_start = 0; // energy of the warm start on this iteration's graph
  double energy_end = 0;
};

struct IterationLog {
  Index iteration = 0;
  double lambda = 0;
  double mean_degree = 0;
  double graph_seconds = 0;
  double solve_seconds = 0;
  std::vector<BandLog> bands;
};

struct LdmmReport {
  /// Similarity graphs built; one per outer iteration regardless of B.
  Index graph_constructions = 0;
  std::vector<IterationLog> iterations;
};

struct LdmmObserver {
  std::function<void(const BandLog &)> on_band;
  std::function<void(const IterationLog &, const DataCube &)> on_iteration;
};

struct LdmmResult {
  DataCube cube;
  LdmmReport report;
};

/// Alternating reconstruction. Each outer iteration rebuilds the patch
/// similarity graph from the current iterate (this is the manifold update),
/// then solves every band's system on that one shared graph, warm-started
/// from the current band.
inline LdmmResult ldmm_reconstruct(const DataCube &b, const MaskSet &masks,
                                   const SolverConfig &cfg, const DataCube &u0,
                                   const LdmmObserver &observer = {}) {
  cfg.validate();
  require(masks.matches(b), "ldmm_reconstruct: mask and data dimensions differ");
  require(u0.same_shape(b), "ldmm_reconstruct: initial guess dimensions differ");
  for (Index t = 0; t < b.bands(); ++t)
    require(masks.count(t) > 0,
            "ldmm_reconstruct: band " + std::to_string(t) + " has no samples");

  const PatchGeometry geom(cfg.s1, cfg.s2, b.rows(), b.cols());
  const Index B = b.bands();
  const GmresOptions gopt = cfg.gmres();

  LdmmResult res;
  DataCube u = u0;
  for (Index it = 1; it <= cfg.outer_iters; ++it) {
    using clock = std::chrono::steady_clock;
    IterationLog log;
    log.iteration = it;

    const auto t0 = clock::now();
    const SimilarityGraph graph = build_similarity_graph(u, geom, cfg.graph());
    ++res.report.graph_constructions;
    const SparseGraph &w = graph.system_weights;
    log.mean_degree = w.mean_row_sum();
    log.lambda = cfg.lambda_rel * log.mean_degree;
    const auto t1 = clock::now();

    DataCube next = u;
    log.bands.resize(static_cast<std::size_t>(B));
    parallel_for(0, B, cfg.threads, [&](Index t) {
      const double rate = masks.rate(t);
      const BandSystem sys =
          assemble_band_system(w, masks.band(t), b.band(t), log.lambda, rate, t);
      BandLog &bl = log.bands[static_cast<std::size_t>(t)];
      bl.iteration = it;
      bl.band = t;
      bl.energy_start = wnll_energy(u.band(t), w, masks.band(t), b.band(t), log.lambda, rate);
      BandSolution sol;
      try {
        sol = solve_band(sys, u.band(t), gopt);
      } catch (const NumericalError &e) {
        throw NumericalError(std::string(e.what()) + " at outer iteration " +
                             std::to_string(it));
      }
      for (double v : sol.x)
        if (!std::isfinite(v))
          throw NumericalError("ldmm_reconstruct: NaN in band " + std::to_string(t) +
                               " at outer iteration " + std::to_string(it));
      std::copy(sol.x.begin(), sol.x.end(), next.band(t).begin());
      bl.gmres_iters = sol.iterations;
      bl.residual = sol.residual;
      bl.converged = sol.converged;
      bl.energy_end = wnll_energy(next.band(t), w, masks.band(t), b.band(t), log.lambda, rate);
    });
    u = std::move(next);
    const auto t2 = clock::now();
    log.graph_seconds = std::chrono::duration<double>(t1 - t0).count();
    log.solve_seconds = std::chrono::duration<double>(t2 - t1).count();

    if (observer.on_band)
      for (const auto &bl : log.bands)
        observer.on_band(bl);
    if (observer.on_iteration)
      observer.on_iteration(log, u);
    res.report.iterations.push_back(std::move(log));
  }
  res.cube = std::move(u);
  return res;
}

} // namespace sldmm
