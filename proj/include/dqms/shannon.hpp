#pragma once

#include <cmath>

#include "dqms/types.hpp"

namespace dqms {

// Probabilities below this are treated as zero throughout.
inline constexpr double kProbEps = 1e-12;

inline double xlog2x(double x) {
  if (x <= kProbEps) return 0.0;
  return x * std::log2(x);
}

// H(p) in bits for a probability vector.
inline double entropy(const dvec& p) {
  double h = 0.0;
  for (index_t i = 0; i < p.size(); ++i) h -= xlog2x(p(i));
  return h;
}

// H(X,Y) for a joint pmf given as a matrix.
inline double entropy(const dmat& p) {
  double h = 0.0;
  for (index_t i = 0; i < p.rows(); ++i)
    for (index_t j = 0; j < p.cols(); ++j) h -= xlog2x(p(i, j));
  return h;
}

// H(X|Y) for joint p(x,y) with x indexing rows.
inline double conditional_entropy(const dmat& p) {
  dvec py = p.colwise().sum();
  return entropy(p) - entropy(py);
}

// I(X;Y) from joint p(x,y).
inline double mutual_information(const dmat& p) {
  dvec px = p.rowwise().sum();
  dvec py = p.colwise().sum();
  return entropy(px) + entropy(py) - entropy(p);
}

inline double binary_entropy(double q) {
  return -xlog2x(q) - xlog2x(1.0 - q);
}

}  // namespace dqms
