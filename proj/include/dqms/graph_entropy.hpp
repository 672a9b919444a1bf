#pragma once

#include <cstdint>

#include "dqms/function_graph.hpp"
#include "dqms/rate_region.hpp"

namespace dqms {

struct OptimizerConfig {
  int multistarts = 32;
  int max_iters = 2000;
  double tol = 1e-10;       // stop when the objective moves less than this
  std::uint64_t seed = 20202;
  double armijo_c = 1e-4;
};

struct GraphEntropyResult {
  ConditionalChannel channel;
  double value = 0.0;  // I(W;U|V) in bits
};

// I(W;U|V) = H(W|V) - H(W|U) as a function of the channel matrix q(w|u).
// Rows are not renormalized, so the value is defined slightly off the simplex
// and finite differences of single entries are meaningful.
double channel_objective(const JointPmf& pmf, const dmat& q);

// dF/dq(w|u) = p(u) [log2 q(w|u) - sum_v p(v|u) log2 p(w|v)]
dmat channel_objective_gradient(const JointPmf& pmf, const dmat& q);

// Euclidean projection onto the probability simplex.
dvec project_to_simplex(const dvec& y);

// Minimize I(W;U|V) over channels supported on the family: projected gradient
// descent with Armijo backtracking, multistarted from every deterministic
// vertex channel (capped) plus Dirichlet-random interior points.
GraphEntropyResult conditional_graph_entropy(const JointPmf& pmf,
                                             const IndependentSetFamily& family,
                                             const OptimizerConfig& cfg = {});

// Exhaustive grid minimum, usable when the family leaves at most three free
// channel parameters; validates the optimizer.
double grid_oracle(const JointPmf& pmf, const IndependentSetFamily& family, int resolution);

// Number of free parameters the family leaves in the channel.
int free_parameter_count(const JointPmf& pmf, const IndependentSetFamily& family);

}  // namespace dqms
