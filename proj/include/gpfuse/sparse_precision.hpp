/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "gpfuse/errors.hpp"

namespace gpfuse {

struct PrecisionEntry {
  std::size_t row;
  std::size_t col;
  double value;
  friend bool operator==(const PrecisionEntry&, const PrecisionEntry&) = default;
};

/*! Symmetric precision matrix stored as lower-triangle triplets (row >= col),
 *  sorted by (row, col), one entry per key.
 */
class SparsePrecision {
 public:
  SparsePrecision() = default;

  SparsePrecision(std::size_t n, std::vector<PrecisionEntry> entries) : n_(n), entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(), [](const PrecisionEntry& a, const PrecisionEntry& b) {
      return a.row < b.row || (a.row == b.row && a.col < b.col);
    });
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const auto& e = entries_[k];
      if (e.row >= n_ || e.col >= n_)
        throw InputError("precision entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                         ") out of range for dimension " + std::to_string(n_));
      if (e.row < e.col)
        throw InputError("precision entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                         ") lies in the upper triangle");
      if (k > 0 && entries_[k - 1].row == e.row && entries_[k - 1].col == e.col)
        throw InputError("duplicate precision entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) + ")");
    }
  }

  /// Lower triangle of a symmetric sparse matrix; exact zeros are dropped.
  static SparsePrecision from_symmetric(const Eigen::SparseMatrix<double>& q) {
    std::vector<PrecisionEntry> e;
    for (Eigen::Index c = 0; c < q.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(q, c); it; ++it)
        if (it.row() >= it.col() && it.value() != 0.0)
          e.push_back({static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()), it.value()});
    return SparsePrecision(static_cast<std::size_t>(q.rows()), std::move(e));
  }

  std::size_t dimension() const { return n_; }
  std::size_t nonzeros() const { return entries_.size(); }
  const std::vector<PrecisionEntry>& entries() const { return entries_; }

  /// Full symmetric matrix.
  Eigen::SparseMatrix<double> to_sparse() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(2 * entries_.size());
    for (const auto& e : entries_) {
      t.emplace_back(static_cast<int>(e.row), static_cast<int>(e.col), e.value);
      if (e.row != e.col) t.emplace_back(static_cast<int>(e.col), static_cast<int>(e.row), e.value);
    }
    Eigen::SparseMatrix<double> q(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    q.setFromTriplets(t.begin(), t.end());
    return q;
  }

  Eigen::MatrixXd to_dense() const { return Eigen::MatrixXd(to_sparse()); }

  bool is_positive_definite() const {
    if (n_ == 0) return true;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(to_sparse());
    return llt.info() == Eigen::Success;
  }

  friend bool operator==(const SparsePrecision&, const SparsePrecision&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<PrecisionEntry> entries_;
};

}  // namespace gpfuse
