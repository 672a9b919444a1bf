#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dqms/function_graph.hpp"
#include "dqms/operators.hpp"

namespace dqms {

// p(w|x) with outputs indexing an independent-set family; mass only on sets
// containing the conditioning symbol.
struct ConditionalChannel {
  IndependentSetFamily family;
  dmat p;  // rows x, cols w

  static ConditionalChannel checked(IndependentSetFamily family, dmat p);
  int alphabet() const { return static_cast<int>(p.rows()); }
  int outputs() const { return static_cast<int>(p.cols()); }
};

// W = X over the singleton family.
ConditionalChannel identity_channel(int alphabet);

// Uniform over the sets containing each symbol.
ConditionalChannel uniform_channel(const IndependentSetFamily& family, int alphabet);

// L_w = sum_{u in w} p(w|u) L_u; stays complete.
Povm lift_povm(const Povm& povm, const ConditionalChannel& channel);

// One achievable point: the region it generates is {R >= r, R+S >= rs, S >= 0}.
struct RatePoint {
  double R = 0.0;
  double RS = 0.0;
  std::string label;
};

struct RateRegion {
  std::vector<RatePoint> points;
  std::vector<std::pair<double, double>> corners;  // (R, S) along the hull frontier

  bool contains(double r, double s, double tol = 1e-9) const;
};

// Ensembles over measurement outcomes on the purified state.  The single
// version keeps reference + Bob; the pair version keeps reference + Bob or
// Bob alone.
CqEnsemble measured_single_ensemble(const DensityOperator& rho, const Povm& alice);
CqEnsemble measured_pair_ensemble(const DensityOperator& rho, const Povm& alice, const Povm& bob,
                                  bool keep_reference);

dmat outcome_joint(const DensityOperator& rho, const Povm& alice, const Povm& bob);

// R = I(U;RB) - I(U;V), R+S = H(U|V)
RatePoint rates_baseline(const DensityOperator& rho, const Povm& alice, const Povm& bob);

// Lifted-measurement scheme:
// R = I(W_A;RB) - I(W_A;B|W_B) - I(W_A;W_B), R+S = H(W_A|W_B) - I(W_A;B|W_B)
RatePoint rates_lifted(const DensityOperator& rho, const Povm& alice, const Povm& bob,
                       const ConditionalChannel& ch_a, const ConditionalChannel& ch_b);

// Covering scheme: R = I(U;RB) - I(W;V), R+S = I(W;U|V)
RatePoint rates_covering(const DensityOperator& rho, const Povm& alice, const Povm& bob,
                         const ConditionalChannel& wstar, bool optimizer_certified = false);

// I(W;U|V) = H(W|V) - H(W|U) for W generated from U alone
double classical_rate(const JointPmf& pmf, const ConditionalChannel& channel);

// Time-sharing hull of the union of the points' half-plane regions.
RateRegion combined_region(const std::vector<RatePoint>& points);

std::string region_csv(const RateRegion& region);

}  // namespace dqms
