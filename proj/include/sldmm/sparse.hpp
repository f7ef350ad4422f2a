#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "common.hpp"

namespace sldmm {

/// Square row-compressed matrix of positive weights over the m*n pixel grid.
/// Column indices are strictly increasing within a row; no explicit zeros.
class SparseGraph {
public:
  SparseGraph() : offsets_{0} {}

  SparseGraph(Index size, std::vector<Index> offsets, std::vector<Index> cols,
              std::vector<double> weights)
      : n_(size), offsets_(std::move(offsets)), cols_(std::move(cols)),
        weights_(std::move(weights)) {
    require(size >= 0, "SparseGraph: negative size");
    require(static_cast<Index>(offsets_.size()) == size + 1 &&
                offsets_.front() == 0 &&
                offsets_.back() == static_cast<Index>(cols_.size()) &&
                cols_.size() == weights_.size(),
            "SparseGraph: inconsistent CSR arrays");
    for (Index r = 0; r < size; ++r) {
      require(offsets_[r] <= offsets_[r + 1], "SparseGraph: offsets decrease");
      for (Index e = offsets_[r]; e < offsets_[r + 1]; ++e) {
        require(cols_[e] >= 0 && cols_[e] < size,
                "SparseGraph: column index out of range");
        require(e == offsets_[r] || cols_[e - 1] < cols_[e],
                "SparseGraph: columns must be strictly increasing");
        require(weights_[e] > 0.0 && std::isfinite(weights_[e]),
                "SparseGraph: weights must be positive and finite");
      }
    }
  }

  Index size() const { return n_; }
  Index nnz() const { return static_cast<Index>(cols_.size()); }
  Index row_nnz(Index r) const { return offsets_[r + 1] - offsets_[r]; }

  std::span<const Index> row_cols(Index r) const {
    return {cols_.data() + offsets_[r], static_cast<std::size_t>(row_nnz(r))};
  }
  std::span<const double> row_weights(Index r) const {
    return {weights_.data() + offsets_[r], static_cast<std::size_t>(row_nnz(r))};
  }

  const std::vector<Index> &offsets() const { return offsets_; }
  const std::vector<Index> &cols() const { return cols_; }
  const std::vector<double> &weights() const { return weights_; }

  /// Stored weight at (r, c), 0 when absent.
  double at(Index r, Index c) const {
    auto cs = row_cols(r);
    auto it = std::lower_bound(cs.begin(), cs.end(), c);
    if (it == cs.end() || *it != c)
      return 0.0;
    return row_weights(r)[static_cast<std::size_t>(it - cs.begin())];
  }

  double row_sum(Index r) const {
    double s = 0.0;
    for (double w : row_weights(r))
      s += w;
    return s;
  }

  double mean_row_sum() const {
    if (n_ == 0)
      return 0.0;
    double s = 0.0;
    for (Index r = 0; r < n_; ++r)
      s += row_sum(r);
    return s / static_cast<double>(n_);
  }

  SparseGraph transposed() const {
    std::vector<Index> off(static_cast<std::size_t>(n_ + 1), 0);
    for (Index c : cols_)
      ++off[static_cast<std::size_t>(c + 1)];
    for (Index r = 0; r < n_; ++r)
      off[r + 1] += off[r];
    std::vector<Index> cols(cols_.size());
    std::vector<double> w(weights_.size());
    std::vector<Index> fill(off.begin(), off.end() - 1);
    // rows visited in order, so each transposed row comes out sorted
    for (Index r = 0; r < n_; ++r)
      for (Index e = offsets_[r]; e < offsets_[r + 1]; ++e) {
        const Index dst = fill[static_cast<std::size_t>(cols_[e])]++;
        cols[dst] = r;
        w[dst] = weights_[e];
      }
    return {n_, std::move(off), std::move(cols), std::move(w)};
  }

  /// (G + G^T) / 2. Bitwise symmetric.
  SparseGraph symmetrized() const {
    const SparseGraph t = transposed();
    std::vector<Index> off{0}, cols;
    std::vector<double> w;
    cols.reserve(cols_.size() * 2);
    w.reserve(cols_.size() * 2);
    for (Index r = 0; r < n_; ++r) {
      auto ac = row_cols(r), bc = t.row_cols(r);
      auto aw = row_weights(r), bw = t.row_weights(r);
      std::size_t i = 0, j = 0;
      while (i < ac.size() || j < bc.size()) {
        if (j == bc.size() || (i < ac.size() && ac[i] < bc[j])) {
          cols.push_back(ac[i]);
          w.push_back(0.5 * (aw[i] + 0.0));
          ++i;
        } else if (i == ac.size() || bc[j] < ac[i]) {
          cols.push_back(bc[j]);
          w.push_back(0.5 * (0.0 + bw[j]));
          ++j;
        } else {
          cols.push_back(ac[i]);
          w.push_back(0.5 * (aw[i] + bw[j]));
          ++i;
          ++j;
        }
      }
      off.push_back(static_cast<Index>(cols.size()));
    }
    return {n_, std::move(off), std::move(cols), std::move(w)};
  }

  /// Text triples `row col weight`, row-major and sorted, one per line.
  void dump(std::ostream &os) const {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Index r = 0; r < n_; ++r)
      for (Index e = offsets_[r]; e < offsets_[r + 1]; ++e)
        os << r << ' ' << cols_[e] << ' ' << weights_[e] << '\n';
  }

private:
  Index n_ = 0;
  std::vector<Index> offsets_;
  std::vector<Index> cols_;
  std::vector<double> weights_;
};

} // namespace sldmm
