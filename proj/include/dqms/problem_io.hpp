#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dqms/function_graph.hpp"
#include "dqms/operators.hpp"
#include "dqms/types.hpp"

namespace dqms {

// A problem instance as read from disk: the bipartite state, both
// measurements, the function table, and optional families and channels.
// Set indices in files are zero-based; printed output is one-based.
struct ProblemFile {
  DensityOperator rho;
  Povm povm_a;
  Povm povm_b;
  FunctionTable table;
  std::optional<std::vector<std::vector<int>>> family_a;
  std::optional<std::vector<std::vector<int>>> family_b;
  std::optional<dmat> channel_a;  // rows u, cols indexing family_a
  std::optional<dmat> channel_b;
  std::string description;
};

// Parse and validate a JSON problem file.  Complex matrices are objects
// {"re": [[..]], "im": [[..]]} with "im" optional.  Throws ValidationError
// naming the offending field.
ProblemFile load_problem(const std::string& path);

// A channel matrix on its own: either a bare 2D array or {"p": [[..]]}.
dmat load_channel_matrix(const std::string& path);

}  // namespace dqms
