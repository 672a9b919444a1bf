#include "dqms/graph_entropy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dqms/parallel.hpp"
#include "dqms/random_stream.hpp"
#include "dqms/shannon.hpp"

namespace dqms {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr int kVertexCap = 256;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

double safe_log2(double x) { return std::log2(std::max(x, 1e-300)); }

// sets of the family containing each symbol
std::vector<std::vector<int>> allowed_sets(int nu, const IndependentSetFamily& family) {
  std::vector<std::vector<int>> allowed(nu);
  for (std::size_t w = 0; w < family.sets.size(); ++w)
    for (int u : family.sets[w])
      if (u >= 0 && u < nu) allowed[u].push_back(static_cast<int>(w));
  for (const auto& a : allowed)
    require(!a.empty(), "graph entropy: family does not span the alphabet");
  return allowed;
}

}  // namespace

double channel_objective(const JointPmf& pmf, const dmat& q) {
  const int nu = pmf.nu(), nv = pmf.nv(), nw = static_cast<int>(q.cols());
  dvec pu = pmf.p.rowwise().sum();
  dvec pv = pmf.p.colwise().sum();

  // m(w,v) = sum_u q(w|u) p(u,v)
  dmat m = q.transpose() * pmf.p;
  double h_w_v = 0.0;
  for (int w = 0; w < nw; ++w)
    for (int v = 0; v < nv; ++v) {
      if (m(w, v) <= 0.0 || pv(v) <= 0.0) continue;
      h_w_v -= m(w, v) * (safe_log2(m(w, v)) - safe_log2(pv(v)));
    }
  double h_w_u = 0.0;
  for (int u = 0; u < nu; ++u)
    for (int w = 0; w < nw; ++w) {
      if (q(u, w) <= 0.0) continue;
      h_w_u -= pu(u) * q(u, w) * safe_log2(q(u, w));
    }
  return h_w_v - h_w_u;
}

dmat channel_objective_gradient(const JointPmf& pmf, const dmat& q) {
  const int nu = pmf.nu(), nv = pmf.nv(), nw = static_cast<int>(q.cols());
  dvec pu = pmf.p.rowwise().sum();
  dvec pv = pmf.p.colwise().sum();
  dmat m = q.transpose() * pmf.p;

  dmat grad = dmat::Zero(nu, nw);
  for (int u = 0; u < nu; ++u) {
    if (pu(u) <= kProbEps) continue;
    for (int w = 0; w < nw; ++w) {
      double cond = 0.0;
      for (int v = 0; v < nv; ++v) {
        if (pmf.p(u, v) <= 0.0 || pv(v) <= 0.0) continue;
        cond += (pmf.p(u, v) / pu(u)) * (safe_log2(m(w, v)) - safe_log2(pv(v)));
      }
      grad(u, w) = pu(u) * (safe_log2(q(u, w)) - cond);
    }
  }
  return grad;
}

dvec project_to_simplex(const dvec& y) {
  const index_t n = y.size();
  std::vector<double> sorted(y.data(), y.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double acc = 0.0, theta = 0.0;
  int support = 0;
  for (index_t i = 0; i < n; ++i) {
    acc += sorted[i];
    double t = (acc - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - t > 0.0) {
      theta = t;
      support = static_cast<int>(i + 1);
    }
  }
  (void)support;
  dvec out(n);
  for (index_t i = 0; i < n; ++i) out(i) = std::max(y(i) - theta, 0.0);
  return out;
}

int free_parameter_count(const JointPmf& pmf, const IndependentSetFamily& family) {
  auto allowed = allowed_sets(pmf.nu(), family);
  int count = 0;
  for (const auto& a : allowed) count += static_cast<int>(a.size()) - 1;
  return count;
}

namespace {

// one projected-gradient run from a given supported starting channel
double descend(const JointPmf& pmf, const std::vector<std::vector<int>>& allowed, dmat& q,
               const OptimizerConfig& cfg) {
  const int nu = pmf.nu();
  double value = channel_objective(pmf, q);
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    dmat grad = channel_objective_gradient(pmf, q);
    double step = 1.0;
    bool accepted = false;
    while (step > 1e-14) {
      dmat cand = q;
      for (int u = 0; u < nu; ++u) {
        const auto& a = allowed[u];
        if (a.size() == 1) continue;
        dvec row(a.size());
        for (std::size_t k = 0; k < a.size(); ++k)
          row(k) = q(u, a[k]) - step * grad(u, a[k]);
        row = project_to_simplex(row);
        for (std::size_t k = 0; k < a.size(); ++k) cand(u, a[k]) = row(k);
      }
      double cand_value = channel_objective(pmf, cand);
      double inner = (grad.array() * (cand - q).array()).sum();
      if (cand_value <= value + cfg.armijo_c * inner) {
        double delta = value - cand_value;
        q = std::move(cand);
        value = cand_value;
        accepted = true;
        if (delta < cfg.tol) return value;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no usable step left
  }
  return value;
}

bool lex_less(const dmat& a, const dmat& b) {
  for (index_t i = 0; i < a.rows(); ++i)
    for (index_t j = 0; j < a.cols(); ++j) {
      if (a(i, j) < b(i, j)) return true;
      if (a(i, j) > b(i, j)) return false;
    }
  return false;
}

}  // namespace

GraphEntropyResult conditional_graph_entropy(const JointPmf& pmf,
                                             const IndependentSetFamily& family,
                                             const OptimizerConfig& cfg) {
  require(cfg.multistarts > 0 && cfg.max_iters > 0 && cfg.tol > 0.0,
          "conditional_graph_entropy: invalid config");
  const int nu = pmf.nu();
  const int nw = static_cast<int>(family.sets.size());
  auto allowed = allowed_sets(nu, family);

  // starting channels: deterministic vertices first, then random interiors
  std::vector<dmat> starts;
  long long vertex_total = 1;
  for (const auto& a : allowed) {
    vertex_total *= static_cast<long long>(a.size());
    if (vertex_total > kVertexCap) break;
  }
  if (vertex_total <= kVertexCap) {
    std::vector<int> pick(nu, 0);
    while (true) {
      dmat q = dmat::Zero(nu, nw);
      for (int u = 0; u < nu; ++u) q(u, allowed[u][pick[u]]) = 1.0;
      starts.push_back(std::move(q));
      int u = 0;
      while (u < nu && ++pick[u] == static_cast<int>(allowed[u].size())) pick[u++] = 0;
      if (u == nu) break;
    }
  } else {
    RandomStream rs(cfg.seed, {9000});
    for (int i = 0; i < kVertexCap; ++i) {
      dmat q = dmat::Zero(nu, nw);
      for (int u = 0; u < nu; ++u)
        q(u, allowed[u][rs.next_int(static_cast<int>(allowed[u].size()))]) = 1.0;
      starts.push_back(std::move(q));
    }
  }
  for (int s = 0; s < cfg.multistarts; ++s) {
    RandomStream rs(cfg.seed, {static_cast<std::uint64_t>(s + 1)});
    dmat q = dmat::Zero(nu, nw);
    for (int u = 0; u < nu; ++u) {
      dvec row(allowed[u].size());
      for (index_t k = 0; k < row.size(); ++k) row(k) = -std::log(1.0 - rs.next_double());
      row /= row.sum();
      for (std::size_t k = 0; k < allowed[u].size(); ++k) q(u, allowed[u][k]) = row(k);
    }
    starts.push_back(std::move(q));
  }

  std::vector<double> values(starts.size());
  parallel_for(static_cast<int>(starts.size()), [&](int i) {
    values[i] = descend(pmf, allowed, starts[i], cfg);
  });

  double best = values[0];
  for (double v : values) best = std::min(best, v);
  int chosen = -1;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (values[i] > best + 1e-6) continue;
    if (chosen < 0 || lex_less(starts[i], starts[chosen])) chosen = static_cast<int>(i);
  }

  GraphEntropyResult result;
  result.channel = ConditionalChannel::checked(family, starts[chosen]);
  result.value = values[chosen];
  return result;
}

double grid_oracle(const JointPmf& pmf, const IndependentSetFamily& family, int resolution) {
  require(resolution >= 1, "grid_oracle: resolution must be positive");
  const int nu = pmf.nu();
  auto allowed = allowed_sets(nu, family);
  require(free_parameter_count(pmf, family) <= 3, "grid_oracle: too many free parameters");

  // per-row simplex grids: integer compositions of the resolution
  std::vector<std::vector<std::vector<double>>> row_grids(nu);
  for (int u = 0; u < nu; ++u) {
    int m = static_cast<int>(allowed[u].size());
    std::vector<int> comp(m, 0);
    std::vector<std::vector<double>> grid;
    std::function<void(int, int)> rec = [&](int idx, int left) {
      if (idx == m - 1) {
        comp[idx] = left;
        std::vector<double> row(m);
        for (int k = 0; k < m; ++k) row[k] = static_cast<double>(comp[k]) / resolution;
        grid.push_back(std::move(row));
        return;
      }
      for (int c = 0; c <= left; ++c) {
        comp[idx] = c;
        rec(idx + 1, left - c);
      }
    };
    rec(0, resolution);
    row_grids[u] = std::move(grid);
  }

  const int nw = static_cast<int>(family.sets.size());
  double best = 0.0;
  bool first = true;
  std::vector<std::size_t> pick(nu, 0);
  while (true) {
    dmat q = dmat::Zero(nu, nw);
    for (int u = 0; u < nu; ++u)
      for (std::size_t k = 0; k < allowed[u].size(); ++k)
        q(u, allowed[u][k]) = row_grids[u][pick[u]][k];
    double v = channel_objective(pmf, q);
    if (first || v < best) {
      best = v;
      first = false;
    }
    int u = 0;
    while (u < nu && ++pick[u] == row_grids[u].size()) pick[u++] = 0;
    if (u == nu) break;
  }
  return best;
}

}  // namespace dqms
