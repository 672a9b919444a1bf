#pragma once

#include <vector>

#include "dqms/operators.hpp"
#include "dqms/types.hpp"

namespace dqms {

struct JointPmf {
  dmat p;  // p(u,v), u indexes rows

  static JointPmf checked(dmat p);
  int nu() const { return static_cast<int>(p.rows()); }
  int nv() const { return static_cast<int>(p.cols()); }
};

// p(u,v) = Tr[(L_u (x) L_v) rho] on a bipartite state.
JointPmf induce_joint_pmf(const DensityOperator& rho, const Povm& povm_a, const Povm& povm_b);

struct FunctionTable {
  imat g;      // z-labels, |U| x |V|
  int nz = 0;  // contiguous output alphabet [0, nz)
  imat lifted; // optional g-tilde on set labels, -1 where unconstrained

  // nz < 0 infers the alphabet as max entry + 1
  static FunctionTable checked(imat g, int nz = -1);
};

enum class Side { A, B };

// Two of Alice's symbols are independent when no positive-probability column
// separates them through g.
bool alice_independent(int u, int u2, const JointPmf& pmf, const FunctionTable& g);

struct IndependentSetFamily {
  std::vector<std::vector<int>> sets;  // each ascending, family lexicographic
  bool spanning = false;
  bool maximal = false;
};

// Two of Bob's symbols are independent when no set of ga can tell them apart
// through g on positive-probability pairs.
bool bob_independent(int v, int v2, const IndependentSetFamily& ga, const JointPmf& pmf,
                     const FunctionTable& g);

// Set-level form of the same predicate, quantifying over all symbol pairs in
// the set at once.
bool bob_set_independent(const std::vector<int>& set, const IndependentSetFamily& ga,
                         const JointPmf& pmf, const FunctionTable& g);

// All maximal independent sets for the requested side.  Side B requires the
// A-side family its predicate quantifies over.
IndependentSetFamily maximal_independent_sets(const JointPmf& pmf, const FunctionTable& g,
                                              Side side,
                                              const IndependentSetFamily* ga = nullptr);

// Validate a user-supplied family for the given side.
IndependentSetFamily make_family(std::vector<std::vector<int>> sets, int alphabet,
                                 const JointPmf& pmf, const FunctionTable& g, Side side,
                                 const IndependentSetFamily* ga = nullptr);

IndependentSetFamily singleton_family(int alphabet);

// g-tilde on (w_A, w_B) labels: the common g value across positive-probability
// pairs of the cell, or -1 where the cell never occurs.  Throws when a cell is
// inconsistent, which signals an invalid B-side family.
imat build_tilde_g(const IndependentSetFamily& ga, const IndependentSetFamily& gb,
                   const JointPmf& pmf, const FunctionTable& g);

}  // namespace dqms
