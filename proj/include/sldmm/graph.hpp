#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <span>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "patch.hpp"
#include "sparse.hpp"

namespace sldmm {

struct Neighbor {
  Index index;
  double dist2; // squared Euclidean distance between patch rows
};

/// k neighbors per row. Rank 1 is always the row itself at distance 0; the
/// remaining k-1 are ordered by (distance, index).
class NeighborTable {
public:
  NeighborTable(Index rows, Index k)
      : rows_(rows), k_(k), data_(static_cast<std::size_t>(rows * k)) {}

  Index rows() const { return rows_; }
  Index k() const { return k_; }

  std::span<Neighbor> row(Index x) {
    return {data_.data() + x * k_, static_cast<std::size_t>(k_)};
  }
  std::span<const Neighbor> row(Index x) const {
    return {data_.data() + x * k_, static_cast<std::size_t>(k_)};
  }

private:
  Index rows_, k_;
  std::vector<Neighbor> data_;
};

struct KnnOptions {
  unsigned threads = default_thread_count();
  Index block_rows = 0; // 0 picks a block size from the problem size
};

namespace detail {

template <class Source>
concept DenseRows = requires(const Source &s) {
  { s.data() } -> std::convertible_to<const double *>;
};

/// Exact squared distance, summed over coordinates in ascending order. This
/// fixed order is the definition of "exact" used throughout, so independent
/// reference implementations can reproduce it bit for bit.
inline double exact_dist2(const double *a, const double *b, Index d) {
  double s = 0.0;
  for (Index j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

inline bool neighbor_less(const Neighbor &a, const Neighbor &b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

using RowBlock =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Source>
void gather_rows(const Source &src, Index begin, Index end, RowBlock &out) {
  out.resize(end - begin, src.cols());
  for (Index x = begin; x < end; ++x)
    src.row(x, {out.data() + (x - begin) * out.cols(),
                static_cast<std::size_t>(out.cols())});
}

} // namespace detail

/// Exact k nearest neighbors of every patch row under squared Euclidean
/// distance.
///
/// Distances are first screened blockwise with a matrix product
/// (|a|^2 + |b|^2 - 2 a.b). That screen carries a rounding error bounded by
/// E = (8d + 32) eps (|a|^2 + max|b|^2), so every row keeps all candidates
/// within 2E of its screened (k-1)-th distance, which provably contains the
/// true answer including ties. Candidates are then re-ranked with
/// exact_dist2. The result does not depend on block size or thread count.
template <class Source>
NeighborTable knn_exact(const Source &src, Index k, KnnOptions opt = {}) {
  const Index N = src.rows(), d = src.cols();
  require(k >= 1, "knn_exact: k must be at least 1");
  require(k <= N, "knn_exact: k exceeds the number of pixels");
  NeighborTable table(N, k);

  constexpr bool dense = detail::DenseRows<Source>;
  const Index block =
      opt.block_rows > 0 ? opt.block_rows
                         : std::clamp<Index>((Index{1} << 22) / std::max<Index>(N, 1), 16, 256);
  const Index tile = 2048;

  // squared norms and the largest one, for the screening error bound
  std::vector<double> norms(static_cast<std::size_t>(N));
  {
    std::vector<double> buf(static_cast<std::size_t>(d));
    for (Index x = 0; x < N; ++x) {
      const double *p;
      if constexpr (dense) {
        p = src.data() + x * d;
      } else {
        src.row(x, buf);
        p = buf.data();
      }
      double s = 0.0;
      for (Index j = 0; j < d; ++j)
        s += p[j] * p[j];
      norms[static_cast<std::size_t>(x)] = s;
    }
  }
  const double max_norm = N > 0 ? *std::max_element(norms.begin(), norms.end()) : 0.0;
  const double err_coeff =
      (8.0 * static_cast<double>(d) + 32.0) * std::numeric_limits<double>::epsilon();

  const Index nblocks = (N + block - 1) / block;
  parallel_for(0, nblocks, opt.threads, [&](Index bi) {
    const Index r0 = bi * block, r1 = std::min(N, r0 + block);
    const Index rb = r1 - r0;

    detail::RowBlock a_gathered, b_gathered;
    const double *a_ptr;
    if constexpr (dense) {
      a_ptr = src.data() + r0 * d;
    } else {
      detail::gather_rows(src, r0, r1, a_gathered);
      a_ptr = a_gathered.data();
    }
    Eigen::Map<const detail::RowBlock> A(a_ptr, rb, d);

    // screened distances for the whole block, rb x N
    detail::RowBlock screen(rb, N);
    for (Index c0 = 0; c0 < N; c0 += tile) {
      const Index c1 = std::min(N, c0 + tile);
      const double *b_ptr;
      if constexpr (dense) {
        b_ptr = src.data() + c0 * d;
      } else {
        detail::gather_rows(src, c0, c1, b_gathered);
        b_ptr = b_gathered.data();
      }
      Eigen::Map<const detail::RowBlock> Bm(b_ptr, c1 - c0, d);
      screen.middleCols(c0, c1 - c0).noalias() = -2.0 * A * Bm.transpose();
      for (Index r = 0; r < rb; ++r)
        for (Index c = c0; c < c1; ++c)
          screen(r, c) += norms[static_cast<std::size_t>(r0 + r)] +
                          norms[static_cast<std::size_t>(c)];
    }

    std::vector<double> heap;
    std::vector<Neighbor> cand;
    std::vector<double> ybuf(static_cast<std::size_t>(d));
    for (Index r = 0; r < rb; ++r) {
      const Index x = r0 + r;
      auto out = table.row(x);
      out[0] = {x, 0.0};
      if (k == 1)
        continue;
      const double *srow = screen.data() + r * N;

      // (k-1) smallest screened distances, self excluded
      heap.clear();
      for (Index y = 0; y < N; ++y) {
        if (y == x)
          continue;
        const double v = srow[y];
        if (static_cast<Index>(heap.size()) < k - 1) {
          heap.push_back(v);
          std::push_heap(heap.begin(), heap.end());
        } else if (v < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = v;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      const double bound =
          2.0 * err_coeff * (norms[static_cast<std::size_t>(x)] + max_norm);
      const double threshold = heap.front() + bound;

      const double *xrow = a_ptr + r * d;
      cand.clear();
      for (Index y = 0; y < N; ++y) {
        if (y == x || srow[y] > threshold)
          continue;
        const double *yrow;
        if constexpr (dense) {
          yrow = src.data() + y * d;
        } else {
          src.row(y, ybuf);
          yrow = ybuf.data();
        }
        cand.push_back({y, detail::exact_dist2(xrow, yrow, d)});
      }
      std::partial_sort(cand.begin(), cand.begin() + (k - 1), cand.end(),
                        detail::neighbor_less);
      std::copy(cand.begin(), cand.begin() + (k - 1), out.begin() + 1);
    }
  });
  return table;
}

inline NeighborTable knn_exact(const PatchMatrix &patches, Index k,
                               KnnOptions opt = {}) {
  struct Rows {
    const PatchMatrix *p;
    Index rows() const { return p->rows(); }
    Index cols() const { return p->cols(); }
    const double *data() const { return p->data(); }
    void row(Index x, std::span<double> out) const {
      std::copy(p->data() + x * p->cols(), p->data() + (x + 1) * p->cols(),
                out.begin());
    }
  };
  return knn_exact(Rows{&patches}, k, opt);
}

/// Per-row scale: distance to the rank-th neighbor (self is rank 1). A zero
/// distance falls back to the smallest positive distance in the row, and an
/// all-zero row to 1.
inline std::vector<double> local_scale(const NeighborTable &table,
                                       Index rank) {
  require(rank >= 2 && rank <= table.k(),
          "local_scale: rank must lie in [2, k]");
  std::vector<double> sigma(static_cast<std::size_t>(table.rows()));
  for (Index x = 0; x < table.rows(); ++x) {
    auto nb = table.row(x);
    double s = std::sqrt(nb[static_cast<std::size_t>(rank - 1)].dist2);
    if (s == 0.0) {
      s = 1.0;
      for (const auto &e : nb)
        if (e.dist2 > 0.0) {
          s = std::sqrt(e.dist2);
          break;
        }
    }
    sigma[static_cast<std::size_t>(x)] = s;
  }
  return sigma;
}

/// Gaussian patch similarity, exp(-|p - q|^2 / (sigma_p sigma_q)).
/// Underflow is clamped to the smallest normal double so every kNN edge
/// stays stored.
inline double similarity_weight(double dist2, double sigma_p, double sigma_q) {
  const double w = std::exp(-dist2 / (sigma_p * sigma_q));
  return std::max(w, std::numeric_limits<double>::min());
}

/// Directed kNN similarity matrix: exactly k entries per row, diagonal 1.
/// Not symmetrized.
inline SparseGraph build_bar_w(Index pixels, const NeighborTable &table,
                               std::span<const double> sigma) {
  require(table.rows() == pixels &&
              static_cast<Index>(sigma.size()) == pixels,
          "build_bar_w: size mismatch");
  const Index k = table.k();
  std::vector<Index> off(static_cast<std::size_t>(pixels + 1));
  std::vector<Index> cols(static_cast<std::size_t>(pixels * k));
  std::vector<double> w(cols.size());
  std::vector<Neighbor> sorted(static_cast<std::size_t>(k));
  for (Index x = 0; x < pixels; ++x) {
    auto nb = table.row(x);
    std::copy(nb.begin(), nb.end(), sorted.begin());
    std::sort(sorted.begin(), sorted.end(),
              [](const Neighbor &a, const Neighbor &b) { return a.index < b.index; });
    off[static_cast<std::size_t>(x)] = x * k;
    for (Index e = 0; e < k; ++e) {
      const auto &nbe = sorted[static_cast<std::size_t>(e)];
      cols[static_cast<std::size_t>(x * k + e)] = nbe.index;
      w[static_cast<std::size_t>(x * k + e)] =
          nbe.index == x ? 1.0
                         : similarity_weight(nbe.dist2, sigma[static_cast<std::size_t>(x)],
                                             sigma[static_cast<std::size_t>(nbe.index)]);
    }
  }
  off[static_cast<std::size_t>(pixels)] = pixels * k;
  return {pixels, std::move(off), std::move(cols), std::move(w)};
}

inline SparseGraph build_bar_w(const PatchMatrix &patches,
                               const NeighborTable &table,
                               std::span<const double> sigma) {
  return build_bar_w(patches.rows(), table, sigma);
}

/// Shift-summed similarity: wtilde(x, y) = sum_{i=1}^{s1 s2}
/// bar_w(x shifted by 1-i, y shifted by 1-i). Contributions to one entry
/// are added in ascending i.
inline SparseGraph assemble_wtilde(const SparseGraph &bar_w,
                                   const PatchGeometry &geom) {
  require(bar_w.size() == geom.pixels(),
          "assemble_wtilde: graph size does not match geometry");
  const Index N = geom.pixels(), ds = geom.spatial_dim();
  if (ds == 1)
    return bar_w;

  struct Entry {
    Index col;
    double w;
  };
  std::vector<Index> off{0};
  std::vector<Index> cols;
  std::vector<double> w;
  cols.reserve(static_cast<std::size_t>(bar_w.nnz() * ds));
  w.reserve(cols.capacity());
  std::vector<Entry> row;
  for (Index x = 0; x < N; ++x) {
    row.clear();
    for (Index i = 1; i <= ds; ++i) {
      const Index a = shift_index(x, 1 - i, geom);
      auto cs = bar_w.row_cols(a);
      auto ws = bar_w.row_weights(a);
      for (std::size_t e = 0; e < cs.size(); ++e)
        row.push_back({shift_index(cs[e], i - 1, geom), ws[e]});
    }
    // stable: equal columns keep ascending-i order for the summation
    std::stable_sort(row.begin(), row.end(),
                     [](const Entry &p, const Entry &q) { return p.col < q.col; });
    for (std::size_t e = 0; e < row.size();) {
      double s = 0.0;
      const Index c = row[e].col;
      for (; e < row.size() && row[e].col == c; ++e)
        s += row[e].w;
      cols.push_back(c);
      w.push_back(s);
    }
    off.push_back(static_cast<Index>(cols.size()));
  }
  return {N, std::move(off), std::move(cols), std::move(w)};
}

struct GraphConfig {
  Index k = 20;
  Index r_sigma = 10;
  bool symmetrize = true;
  unsigned threads = default_thread_count();
  /// Materialize the patch matrix only when it fits in this many bytes.
  std::size_t patch_memory_budget = std::size_t{1} << 30;
};

/// One manifold update's worth of graph: bar_w from the patches of u,
/// wtilde by shift summation, and the weights the band solves consume.
struct SimilarityGraph {
  SparseGraph bar_w;
  SparseGraph wtilde;
  /// wtilde, or its symmetric part when GraphConfig::symmetrize is set.
  SparseGraph system_weights;
  std::vector<double> sigma;
};

inline SimilarityGraph build_similarity_graph(const DataCube &u,
                                              const PatchGeometry &geom,
                                              const GraphConfig &cfg) {
  require(geom.m == u.rows() && geom.n == u.cols(),
          "build_similarity_graph: geometry does not match cube");
  const Index k = std::min(cfg.k, u.pixels());
  const KnnOptions opt{cfg.threads, 0};
  const std::size_t bytes =
      static_cast<std::size_t>(u.pixels() * geom.dim(u.bands())) * sizeof(double);

  NeighborTable table = [&] {
    if (bytes <= cfg.patch_memory_budget)
      return knn_exact(extract_patches(u, geom), k, opt);
    return knn_exact(CubePatchView(u, geom), k, opt);
  }();

  SimilarityGraph g;
  // a single-pixel image has no neighbor to scale by
  g.sigma = k >= 2 ? local_scale(table, std::clamp<Index>(cfg.r_sigma, 2, k))
                   : std::vector<double>(static_cast<std::size_t>(u.pixels()), 1.0);
  g.bar_w = build_bar_w(u.pixels(), table, g.sigma);
  g.wtilde = assemble_wtilde(g.bar_w, geom);
  g.system_weights = cfg.symmetrize ? g.wtilde.symmetrized() : g.wtilde;
  return g;
}

} // namespace sldmm
