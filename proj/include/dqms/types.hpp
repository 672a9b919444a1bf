#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dqms {

using real = double;
using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using dmat = Eigen::MatrixXd;
using dvec = Eigen::VectorXd;
using imat = Eigen::MatrixXi;
using index_t = Eigen::Index;

// Bad input data: malformed matrices, invalid distributions, shape mismatches.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input for which the requested computation has no solution
// (e.g. no typical sequences at the given blocklength).
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dqms
