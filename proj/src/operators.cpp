#include "dqms/operators.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "dqms/shannon.hpp"

namespace dqms {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

cmat kron(const cmat& a, const cmat& b) {
  cmat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (index_t i = 0; i < a.rows(); ++i)
    for (index_t j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

cmat kron_power(const cmat& a, int n) {
  require(n >= 1, "kron_power: n must be positive");
  cmat out = a;
  for (int i = 1; i < n; ++i) out = kron(out, a);
  return out;
}

index_t dims_product(const std::vector<index_t>& dims) {
  index_t d = 1;
  for (index_t s : dims) {
    require(s >= 1, "dims_product: nonpositive subsystem dimension");
    d *= s;
  }
  return d;
}

cmat partial_trace(const cmat& m, const std::vector<index_t>& dims,
                   const std::vector<int>& keep) {
  const int k = static_cast<int>(dims.size());
  const index_t total = dims_product(dims);
  require(m.rows() == total && m.cols() == total,
          "partial_trace: matrix size does not match dims");
  std::vector<char> kept(k, 0);
  int prev = -1;
  for (int s : keep) {
    require(s > prev && s < k, "partial_trace: keep must be strictly increasing and in range");
    kept[s] = 1;
    prev = s;
  }

  index_t dkeep = 1, dtrace = 1;
  for (int s = 0; s < k; ++s) (kept[s] ? dkeep : dtrace) *= dims[s];

  std::vector<index_t> stride(k);
  index_t acc = 1;
  for (int s = k - 1; s >= 0; --s) {
    stride[s] = acc;
    acc *= dims[s];
  }

  // group full indices by the digits of the traced subsystems
  std::vector<std::vector<std::pair<index_t, index_t>>> buckets(dtrace);
  for (index_t idx = 0; idx < total; ++idx) {
    index_t kp = 0, tp = 0;
    for (int s = 0; s < k; ++s) {
      index_t digit = (idx / stride[s]) % dims[s];
      if (kept[s])
        kp = kp * dims[s] + digit;
      else
        tp = tp * dims[s] + digit;
    }
    buckets[tp].push_back({kp, idx});
  }

  cmat out = cmat::Zero(dkeep, dkeep);
  for (const auto& bucket : buckets)
    for (const auto& [ki, ii] : bucket)
      for (const auto& [kj, jj] : bucket) out(ki, kj) += m(ii, jj);
  return out;
}

cmat permute_subsystems(const cmat& m, const std::vector<index_t>& dims,
                        const std::vector<int>& perm) {
  const int k = static_cast<int>(dims.size());
  const index_t total = dims_product(dims);
  require(m.rows() == total && m.cols() == total,
          "permute_subsystems: matrix size does not match dims");
  require(static_cast<int>(perm.size()) == k, "permute_subsystems: perm size mismatch");
  std::vector<char> seen(k, 0);
  for (int s : perm) {
    require(s >= 0 && s < k && !seen[s], "permute_subsystems: perm is not a permutation");
    seen[s] = 1;
  }

  std::vector<index_t> stride(k);
  index_t acc = 1;
  for (int s = k - 1; s >= 0; --s) {
    stride[s] = acc;
    acc *= dims[s];
  }
  std::vector<index_t> out_stride(k);
  acc = 1;
  for (int t = k - 1; t >= 0; --t) {
    out_stride[t] = acc;
    acc *= dims[perm[t]];
  }

  std::vector<index_t> map(total);
  for (index_t idx = 0; idx < total; ++idx) {
    index_t o = 0;
    for (int t = 0; t < k; ++t) o += ((idx / stride[perm[t]]) % dims[perm[t]]) * out_stride[t];
    map[idx] = o;
  }

  cmat out(total, total);
  for (index_t i = 0; i < total; ++i)
    for (index_t j = 0; j < total; ++j) out(map[i], map[j]) = m(i, j);
  return out;
}

double herm_deviation(const cmat& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

cmat hermitized(const cmat& m, double tol) {
  require(m.rows() == m.cols(), "hermitized: matrix not square");
  double dev = herm_deviation(m);
  if (dev > tol)
    throw ValidationError("hermitized: deviation " + fmt(dev) + " exceeds tolerance " + fmt(tol));
  return 0.5 * (m + m.adjoint());
}

dvec psd_eigenvalues(const cmat& m, double neg_tol) {
  cmat h = hermitized(m, 1e-10);
  Eigen::SelfAdjointEigenSolver<cmat> solver(h, Eigen::EigenvaluesOnly);
  dvec ev = solver.eigenvalues();
  for (index_t i = 0; i < ev.size(); ++i) {
    if (ev(i) < -neg_tol)
      throw ValidationError("psd_eigenvalues: eigenvalue " + fmt(ev(i)) + " below -" +
                            fmt(neg_tol));
    if (ev(i) < 0.0) ev(i) = 0.0;
  }
  return ev;
}

namespace {

// shared spectral transform for sqrt / pinv-sqrt / support
cmat spectral_map(const cmat& m, double neg_tol, const std::function<double(double)>& f) {
  cmat h = hermitized(m, 1e-10);
  Eigen::SelfAdjointEigenSolver<cmat> solver(h);
  dvec ev = solver.eigenvalues();
  for (index_t i = 0; i < ev.size(); ++i) {
    if (ev(i) < -neg_tol)
      throw ValidationError("spectral_map: eigenvalue " + fmt(ev(i)) + " below -" + fmt(neg_tol));
    if (ev(i) < 0.0) ev(i) = 0.0;
  }
  dvec mapped(ev.size());
  for (index_t i = 0; i < ev.size(); ++i) mapped(i) = f(ev(i));
  cmat out = solver.eigenvectors() * mapped.asDiagonal() * solver.eigenvectors().adjoint();
  return 0.5 * (out + out.adjoint());
}

}  // namespace

cmat sqrt_psd(const cmat& m) {
  return spectral_map(m, 1e-10, [](double v) { return std::sqrt(v); });
}

cmat pinv_sqrt_psd(const cmat& m, double threshold) {
  return spectral_map(m, 1e-10,
                      [threshold](double v) { return v > threshold ? 1.0 / std::sqrt(v) : 0.0; });
}

cmat support_projector(const cmat& m, double threshold) {
  return spectral_map(m, 1e-10, [threshold](double v) { return v > threshold ? 1.0 : 0.0; });
}

double trace_norm(const cmat& m) {
  require(m.rows() == m.cols(), "trace_norm: matrix not square");
  if (herm_deviation(m) <= 1e-10) {
    Eigen::SelfAdjointEigenSolver<cmat> solver(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    return solver.eigenvalues().cwiseAbs().sum();
  }
  Eigen::BDCSVD<cmat> svd(m);
  return svd.singularValues().sum();
}

double von_neumann_entropy(const cmat& rho) {
  dvec ev = psd_eigenvalues(rho, 1e-10);
  double h = 0.0;
  for (index_t i = 0; i < ev.size(); ++i) h -= xlog2x(ev(i));
  return h;
}

Purification purify(const cmat& rho, double threshold) {
  const index_t d = rho.rows();
  cmat h = hermitized(rho, 1e-10);
  Eigen::SelfAdjointEigenSolver<cmat> solver(h);
  dvec ev = solver.eigenvalues();
  require(ev.minCoeff() > -1e-10, "purify: state is not positive semidefinite");

  std::vector<index_t> order;  // descending eigenvalues above threshold
  for (index_t i = d - 1; i >= 0; --i) {
    if (ev(i) > threshold) order.push_back(i);
  }
  require(!order.empty(), "purify: state has no support");

  const index_t dim_r = static_cast<index_t>(order.size());
  cvec state = cvec::Zero(dim_r * d);
  for (index_t r = 0; r < dim_r; ++r) {
    double root = std::sqrt(ev(order[r]));
    for (index_t i = 0; i < d; ++i) state(r * d + i) = root * solver.eigenvectors()(i, order[r]);
  }
  return {state, dim_r};
}

DensityOperator DensityOperator::checked(const cmat& m, std::vector<index_t> dims) {
  require(!dims.empty(), "DensityOperator: empty dims");
  const index_t total = dims_product(dims);
  require(m.rows() == total && m.cols() == total, "DensityOperator: size does not match dims");
  double dev = herm_deviation(m);
  if (dev > 1e-10)
    throw ValidationError("DensityOperator: hermiticity deviation " + fmt(dev));
  cmat h = 0.5 * (m + m.adjoint());
  psd_eigenvalues(h, 1e-10);
  double tr = h.trace().real();
  if (std::abs(tr - 1.0) > 1e-10)
    throw ValidationError("DensityOperator: trace " + fmt(tr) + " is not 1");
  return {std::move(dims), std::move(h)};
}

Povm Povm::checked(std::vector<cmat> elements, bool complete) {
  require(!elements.empty(), "Povm: no elements");
  const index_t d = elements[0].rows();
  for (auto& e : elements) {
    require(e.rows() == d && e.cols() == d, "Povm: element size mismatch");
    double dev = herm_deviation(e);
    if (dev > 1e-10) throw ValidationError("Povm: element hermiticity deviation " + fmt(dev));
    e = 0.5 * (e + e.adjoint());
    psd_eigenvalues(e, 1e-10);
  }
  cmat sum = cmat::Zero(d, d);
  for (const auto& e : elements) sum += e;
  if (complete) {
    double dev = (sum - cmat::Identity(d, d)).cwiseAbs().maxCoeff();
    if (dev > 1e-9)
      throw ValidationError("Povm: completeness deviation " + fmt(dev));
  } else {
    Eigen::SelfAdjointEigenSolver<cmat> solver(sum, Eigen::EigenvaluesOnly);
    double top = solver.eigenvalues().maxCoeff();
    if (top > 1.0 + 1e-9)
      throw ValidationError("Povm: element sum exceeds identity, max eigenvalue " + fmt(top));
  }
  Povm p;
  p.dim = d;
  p.elements = std::move(elements);
  return p;
}

namespace {

struct GroupedEnsemble {
  std::vector<double> probs;
  std::vector<cmat> states;  // unit trace
};

// Collapse terms sharing a key into p(key) and the averaged state.
template <typename KeyFn>
GroupedEnsemble group_terms(const std::vector<CqTerm>& terms, KeyFn key) {
  require(!terms.empty(), "cq ensemble: no terms");
  const index_t d = terms[0].state.rows();
  std::map<int, std::pair<double, cmat>> acc;
  double total = 0.0;
  for (const auto& t : terms) {
    require(t.state.rows() == d && t.state.cols() == d, "cq ensemble: state size mismatch");
    require(t.weight >= -1e-12, "cq ensemble: negative weight");
    double w = std::max(t.weight, 0.0);
    total += w;
    if (w <= kProbEps) continue;
    double tr = t.state.trace().real();
    if (std::abs(tr - 1.0) > 1e-9)
      throw ValidationError("cq ensemble: state trace " + fmt(tr) + " is not 1");
    auto [it, fresh] = acc.try_emplace(key(t), 0.0, cmat::Zero(d, d));
    it->second.first += w;
    it->second.second += w * t.state;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError("cq ensemble: weights sum to " + fmt(total));
  GroupedEnsemble g;
  for (auto& [k, pw] : acc) {
    g.probs.push_back(pw.first);
    g.states.push_back(pw.second / pw.first);
  }
  return g;
}

double holevo(const GroupedEnsemble& g) {
  const index_t d = g.states[0].rows();
  cmat avg = cmat::Zero(d, d);
  double h_cond = 0.0;
  for (std::size_t i = 0; i < g.probs.size(); ++i) {
    avg += g.probs[i] * g.states[i];
    h_cond += g.probs[i] * von_neumann_entropy(g.states[i]);
  }
  double total = avg.trace().real();
  return von_neumann_entropy(avg / total) - h_cond / total;
}

}  // namespace

double cq_mutual_information(const CqEnsemble& e) {
  return holevo(group_terms(e.terms, [](const CqTerm& t) { return t.x; }));
}

double cq_conditional_mutual_information(const CqEnsemble& e) {
  // split by y, then Holevo over x within each slice
  std::map<int, std::vector<CqTerm>> slices;
  double total = 0.0;
  for (const auto& t : e.terms) {
    require(t.weight >= -1e-12, "cq ensemble: negative weight");
    double w = std::max(t.weight, 0.0);
    total += w;
    if (w <= kProbEps) continue;
    slices[t.y].push_back(t);
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError("cq ensemble: weights sum to " + fmt(total));

  double info = 0.0;
  for (auto& [y, terms] : slices) {
    double py = 0.0;
    for (auto& t : terms) py += t.weight;
    for (auto& t : terms) t.weight /= py;
    info += py * holevo(group_terms(terms, [](const CqTerm& t) { return t.x; }));
  }
  return info;
}

}  // namespace dqms
