#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "datacube.hpp"

namespace sldmm {

/// Pixels x bands matricization of a cube. Column t is band t, which is
/// exactly the band-sequential layout, so unfold/fold are plain copies.
using UnfoldedMatrix = Eigen::MatrixXd;

inline UnfoldedMatrix unfold(const DataCube &cube) {
  return Eigen::Map<const Eigen::MatrixXd>(cube.values().data(), cube.pixels(),
                                           cube.bands());
}

inline DataCube fold(const UnfoldedMatrix &M, Index rows, Index cols) {
  require(M.rows() == rows * cols, "fold: row count does not match m*n");
  std::vector<double> v(M.data(), M.data() + M.size());
  return {rows, cols, M.cols(), std::move(v)};
}

struct SvtResult {
  UnfoldedMatrix value;
  double nuclear_norm = 0; // nuclear norm of value
};

/// Singular value thresholding, the proximal map of tau * nuclear norm.
///
/// Singular pairs come from the eigendecomposition of the cols x cols Gram
/// matrix, so the cost is O(rows * cols^2) and the large side is never
/// factorized: svt(M) = M V diag(max(s - tau, 0) / s) V^T.
/// rank_cap > 0 additionally keeps only that many leading singular values.
inline SvtResult svt_full(const UnfoldedMatrix &M, double tau,
                          Index rank_cap = 0) {
  require(tau >= 0.0, "svt: tau must be non-negative");
  const Eigen::MatrixXd gram = M.transpose() * M;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd &lam = eig.eigenvalues(); // ascending
  const Eigen::MatrixXd &V = eig.eigenvectors();
  const Index c = M.cols();

  Eigen::VectorXd scale(c);
  double nuclear = 0.0;
  for (Index i = 0; i < c; ++i) {
    const Index from_top = c - 1 - i;
    const double s = std::sqrt(std::max(lam(i), 0.0));
    const bool capped = rank_cap > 0 && from_top >= rank_cap;
    if (capped) {
      scale(i) = 0.0;
    } else if (tau == 0.0) {
      scale(i) = 1.0;
      nuclear += s;
    } else if (s > tau) {
      scale(i) = (s - tau) / s;
      nuclear += s - tau;
    } else {
      scale(i) = 0.0;
    }
  }
  SvtResult r;
  if (rank_cap == 0 && tau == 0.0) {
    r.value = M;
  } else {
    r.value = M * (V * scale.asDiagonal() * V.transpose());
  }
  r.nuclear_norm = nuclear;
  return r;
}

inline UnfoldedMatrix svt(const UnfoldedMatrix &M, double tau,
                          Index rank_cap = 0) {
  return svt_full(M, tau, rank_cap).value;
}

inline double nuclear_norm(const UnfoldedMatrix &M) {
  return svt_full(M, 0.0).nuclear_norm;
}

inline double spectral_norm(const UnfoldedMatrix &M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M.transpose() * M,
                                                     Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), 0.0));
}

struct ApgConfig {
  /// Final nuclear-norm weight. Non-positive selects
  /// 0.01 * spectral norm of the zero-filled observation.
  double mu_target = 0.0;
  double mu_decay = 0.7;
  Index stages = 5;
  Index max_iters = 200; // per stage
  double tol = 1e-4;     // relative iterate change
  Index svd_rank_cap = 0;

  void validate() const {
    require(mu_decay > 0.0 && mu_decay < 1.0, "ApgConfig: mu_decay must lie in (0, 1)");
    require(tol > 0.0, "ApgConfig: tol must be positive");
    require(stages >= 1 && max_iters >= 1, "ApgConfig: stages and max_iters must be positive");
    require(svd_rank_cap >= 0, "ApgConfig: svd_rank_cap must be non-negative");
  }
};

struct ApgResult {
  DataCube cube;
  bool converged = true; // every stage met tol before max_iters
  Index iterations = 0;
  double mu_final = 0;
  /// objective value after every iteration, one vector per stage
  std::vector<std::vector<double>> objective;
};

/// Low-rank completion of the unfolded observation: approximately minimizes
///   0.5 |P_Omega(X - b)|_F^2 + mu |X|_*
/// with monotone accelerated proximal gradient (step 1, the Lipschitz
/// constant of the data term) and mu-continuation from
/// mu_target / decay^(stages-1) down to mu_target. The monotone variant
/// keeps the better of the proximal point and the previous iterate, so the
/// objective never increases within a stage.
inline ApgResult apg_complete(const DataCube &b, const MaskSet &masks,
                              const ApgConfig &cfg = {}) {
  cfg.validate();
  require(masks.matches(b), "apg_complete: mask and cube dimensions differ");
  for (Index t = 0; t < b.bands(); ++t)
    require(masks.count(t) > 0,
            "apg_complete: band " + std::to_string(t) + " has no samples");

  const Index N = b.pixels(), B = b.bands();
  Eigen::MatrixXd omega(N, B);
  {
    auto f = masks.flags();
    for (Index i = 0; i < N * B; ++i)
      omega.data()[i] = f[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  }
  const Eigen::MatrixXd obs = unfold(b).cwiseProduct(omega);

  const double mu_target =
      cfg.mu_target > 0.0 ? cfg.mu_target : 0.01 * spectral_norm(obs);

  auto data_term = [&](const Eigen::MatrixXd &X) {
    return 0.5 * (X - obs).cwiseProduct(omega).squaredNorm();
  };

  ApgResult res;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(N, B);
  for (Index s = 0; s < cfg.stages; ++s) {
    const double mu =
        mu_target / std::pow(cfg.mu_decay, static_cast<double>(cfg.stages - 1 - s));
    res.objective.emplace_back();
    auto &hist = res.objective.back();

    double fx = data_term(X) + mu * nuclear_norm(X);
    Eigen::MatrixXd X_prev = X, Y = X;
    double t = 1.0;
    bool stage_converged = false;
    for (Index it = 0; it < cfg.max_iters; ++it) {
      ++res.iterations;
      const Eigen::MatrixXd G = Y - (Y - obs).cwiseProduct(omega);
      SvtResult z = svt_full(G, mu, cfg.svd_rank_cap);
      const double fz = data_term(z.value) + mu * z.nuclear_norm;

      const double change =
          (z.value - X).norm() / std::max(X.norm(), std::numeric_limits<double>::min());
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      X_prev = X;
      if (fz <= fx) {
        X = z.value;
        fx = fz;
      }
      Y = X + (t / t_next) * (z.value - X) + ((t - 1.0) / t_next) * (X - X_prev);
      t = t_next;
      hist.push_back(fx);
      if (change < cfg.tol) {
        stage_converged = true;
        break;
      }
    }
    res.converged = res.converged && stage_converged;
    res.mu_final = mu;
  }
  res.cube = fold(X, b.rows(), b.cols());
  return res;
}

} // namespace sldmm
