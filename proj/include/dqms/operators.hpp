#pragma once

#include <vector>

#include "dqms/types.hpp"

namespace dqms {

// Multipartite operators are plain Eigen matrices plus an explicit list of
// subsystem dimensions.  Combined indices are row-major with subsystem 0 most
// significant, matching repeated kron().

cmat kron(const cmat& a, const cmat& b);
cmat kron_power(const cmat& a, int n);
index_t dims_product(const std::vector<index_t>& dims);

// Trace out every subsystem not listed in keep.  keep must be strictly
// increasing; kept subsystems retain their relative order.
cmat partial_trace(const cmat& m, const std::vector<index_t>& dims,
                   const std::vector<int>& keep);

// Reorder subsystems.  perm[t] names the input subsystem that lands in output
// slot t.
cmat permute_subsystems(const cmat& m, const std::vector<index_t>& dims,
                        const std::vector<int>& perm);

double herm_deviation(const cmat& m);

// (M + M†)/2, rejecting matrices that are not hermitian within tol.
cmat hermitized(const cmat& m, double tol = 1e-12);

// Eigenvalues of a hermitian PSD matrix, ascending.  Values in [-neg_tol, 0)
// are clipped to zero; anything below -neg_tol is an error.
dvec psd_eigenvalues(const cmat& m, double neg_tol = 1e-10);

cmat sqrt_psd(const cmat& m);

// Square root of the Moore-Penrose pseudoinverse; eigenvalues at or below
// threshold are treated as zero.
cmat pinv_sqrt_psd(const cmat& m, double threshold = 1e-12);

// Projector onto the span of eigenvectors with eigenvalue above threshold.
cmat support_projector(const cmat& m, double threshold = 1e-12);

double trace_norm(const cmat& m);
double von_neumann_entropy(const cmat& rho);  // bits

struct Purification {
  cvec state;    // pure state on R (x) X with the reference system first
  index_t dim_r;  // rank of the input state
};
Purification purify(const cmat& rho, double threshold = 1e-12);

struct DensityOperator {
  std::vector<index_t> dims;
  cmat mat;

  // Validates shape, hermiticity, positivity, and unit trace; stores the
  // hermitized matrix.
  static DensityOperator checked(const cmat& m, std::vector<index_t> dims);
};

struct Povm {
  index_t dim = 0;
  std::vector<cmat> elements;

  // complete: elements must sum to the identity.  Otherwise the sum may fall
  // short of the identity but must not exceed it.
  static Povm checked(std::vector<cmat> elements, bool complete = true);
};

// Classical-quantum ensemble: classical coordinates (x, y) carrying weight
// p(x,y) and a unit-trace state for each term.  y is -1 when there is no
// second classical coordinate.
struct CqTerm {
  int x = 0;
  int y = -1;
  double weight = 0.0;
  cmat state;
};

struct CqEnsemble {
  std::vector<CqTerm> terms;
};

// I(X;Q): Holevo information of the ensemble, grouping terms by x.
double cq_mutual_information(const CqEnsemble& e);

// I(X;Q|Y): Holevo information of the x-ensemble conditioned on each y,
// averaged over p(y).
double cq_conditional_mutual_information(const CqEnsemble& e);

}  // namespace dqms
