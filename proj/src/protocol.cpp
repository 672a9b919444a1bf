#include "dqms/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dqms/shannon.hpp"

namespace dqms {

namespace {

constexpr real kTypSlack = 1e-12;      // guards exact-boundary count ratios
constexpr index_t kMaxWords = 1 << 20; // enumeration guard for alphabet^n

std::string seq_str(const Seq& xn) {
  std::string out = "[";
  for (size_t i = 0; i < xn.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xn[i]);
  }
  return out + "]";
}

// odometer increment in lexicographic order; false on wrap-around
bool next_word(Seq& xn, int alphabet) {
  for (int i = static_cast<int>(xn.size()) - 1; i >= 0; --i) {
    if (++xn[i] < alphabet) return true;
    xn[i] = 0;
  }
  return false;
}

index_t checked_word_count(int alphabet, int n) {
  index_t total = 1;
  for (int i = 0; i < n; ++i) {
    total *= alphabet;
    if (total > kMaxWords)
      throw ValidationError("sequence space too large: " + std::to_string(alphabet) + "^" +
                            std::to_string(n));
  }
  return total;
}

cmat kron_word(const std::vector<cmat>& ops, const Seq& xn) {
  cmat out = ops[xn[0]];
  for (size_t i = 1; i < xn.size(); ++i) out = kron(out, ops[xn[i]]);
  return out;
}

void add_term(std::map<Seq, cmat>& acc, const Seq& key, const cmat& op) {
  auto it = acc.find(key);
  if (it == acc.end())
    acc.emplace(key, op);
  else
    it->second += op;
}

struct SpectralCache {
  dvec vals;
  cmat vecs;
  real entropy = 0.0;
};

SpectralCache decompose_state(const cmat& state) {
  Eigen::SelfAdjointEigenSolver<cmat> es(hermitized(state, 1e-9));
  SpectralCache out;
  out.vals = es.eigenvalues();
  out.vecs = es.eigenvectors();
  for (index_t k = 0; k < out.vals.size(); ++k) out.entropy -= xlog2x(out.vals(k));
  return out;
}

real clamp01(real x) { return std::min(std::max(x, 0.0), 1.0); }

}  // namespace

void validate_config(const ProtocolConfig& cfg) {
  if (cfg.n < 1) throw ValidationError("blocklength must be at least 1");
  if (!(cfg.delta > 0.0)) throw ValidationError("delta must be positive");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (cfg.s < 1 || cfg.t < 1 || cfg.m_count < 1)
    throw ValidationError("s, t, and m must be at least 1");
  if (cfg.decode_trials < 0) throw ValidationError("decode trial count must be nonnegative");
  if (cfg.scheme != Scheme::Lifted && cfg.scheme != Scheme::Covering)
    throw ValidationError("scheme selector must be 1 or 2");
}

std::vector<Seq> all_sequences(int alphabet, int n) {
  if (alphabet < 1 || n < 1) throw ValidationError("sequence enumeration needs alphabet, n >= 1");
  std::vector<Seq> out;
  out.reserve(static_cast<size_t>(checked_word_count(alphabet, n)));
  Seq xn(n, 0);
  do {
    out.push_back(xn);
  } while (next_word(xn, alphabet));
  return out;
}

std::vector<int> symbol_counts(const Seq& xn, int alphabet) {
  std::vector<int> counts(alphabet, 0);
  for (int x : xn) {
    if (x < 0 || x >= alphabet) throw ValidationError("symbol out of range in sequence");
    ++counts[x];
  }
  return counts;
}

bool is_typical(const Seq& xn, const dvec& p, real delta) {
  const real n = static_cast<real>(xn.size());
  std::vector<int> counts = symbol_counts(xn, static_cast<int>(p.size()));
  for (index_t x = 0; x < p.size(); ++x) {
    if (p(x) > kProbEps) {
      if (std::abs(counts[x] / n - p(x)) > delta + kTypSlack) return false;
    } else if (counts[x] != 0) {
      return false;
    }
  }
  return true;
}

std::vector<Seq> typical_set(const dvec& p, int n, real delta) {
  std::vector<Seq> out;
  for (const Seq& xn : all_sequences(static_cast<int>(p.size()), n))
    if (is_typical(xn, p, delta)) out.push_back(xn);
  return out;
}

bool jointly_typical(const Seq& xn, const Seq& yn, const dmat& joint, real delta) {
  if (xn.size() != yn.size()) throw ValidationError("pair typicality needs equal lengths");
  const real n = static_cast<real>(xn.size());
  imat counts = imat::Zero(joint.rows(), joint.cols());
  for (size_t i = 0; i < xn.size(); ++i) {
    if (xn[i] < 0 || xn[i] >= joint.rows() || yn[i] < 0 || yn[i] >= joint.cols())
      throw ValidationError("symbol out of range in sequence pair");
    ++counts(xn[i], yn[i]);
  }
  for (index_t x = 0; x < joint.rows(); ++x)
    for (index_t y = 0; y < joint.cols(); ++y) {
      if (joint(x, y) > kProbEps) {
        if (std::abs(counts(x, y) / n - joint(x, y)) > delta + kTypSlack) return false;
      } else if (counts(x, y) != 0) {
        return false;
      }
    }
  return true;
}

real sequence_prob(const Seq& xn, const dvec& p) {
  real prob = 1.0;
  for (int x : xn) prob *= p(x);
  return prob;
}

real min_feasible_delta(const dvec& p, int n) {
  std::vector<int> support;
  for (index_t x = 0; x < p.size(); ++x)
    if (p(x) > kProbEps) support.push_back(static_cast<int>(x));
  if (support.empty()) throw ValidationError("pmf has empty support");
  real best = 1.0;
  // enumerate compositions of n over the support symbols
  std::vector<int> counts(support.size(), 0);
  std::function<void(size_t, int)> rec = [&](size_t idx, int left) {
    if (idx + 1 == support.size()) {
      counts[idx] = left;
      real worst = 0.0;
      for (size_t k = 0; k < support.size(); ++k)
        worst = std::max(worst, std::abs(counts[k] / static_cast<real>(n) - p(support[k])));
      best = std::min(best, worst);
      return;
    }
    for (int c = 0; c <= left; ++c) {
      counts[idx] = c;
      rec(idx + 1, left - c);
    }
  };
  rec(0, n);
  return best;
}

int PrunedPmf::find(const Seq& xn) const {
  auto it = std::lower_bound(support.begin(), support.end(), xn);
  if (it == support.end() || *it != xn) return -1;
  return static_cast<int>(it - support.begin());
}

PrunedPmf pruned_pmf(const dvec& p, int n, real delta) {
  PrunedPmf out;
  for (const Seq& xn : typical_set(p, n, delta)) {
    real prob = sequence_prob(xn, p);
    if (prob <= 0.0) continue;
    out.support.push_back(xn);
    out.prob.push_back(prob);
    out.normalizer += prob;
  }
  if (out.support.empty() || out.normalizer <= kProbEps) {
    std::ostringstream msg;
    msg << "no typical words at n=" << n << ", delta=" << delta
        << "; minimum feasible delta is about " << min_feasible_delta(p, n);
    throw InfeasibleError(msg.str());
  }
  for (real& q : out.prob) q /= out.normalizer;
  return out;
}

PrunedPmf conditional_pruned_pmf(const dmat& joint_xw, const Seq& wn, real delta) {
  const int nx = static_cast<int>(joint_xw.rows());
  const int n = static_cast<int>(wn.size());
  dvec pw = joint_xw.colwise().sum();
  for (int w : wn)
    if (w < 0 || w >= joint_xw.cols() || pw(w) <= kProbEps)
      throw ValidationError("conditioning word leaves the joint support");

  PrunedPmf out;
  real best_dev = std::numeric_limits<real>::infinity();
  Seq xn(n, 0);
  do {
    real prob = 1.0;
    for (int i = 0; i < n; ++i) prob *= joint_xw(xn[i], wn[i]) / pw(wn[i]);
    if (prob <= 0.0) continue;
    if (jointly_typical(xn, wn, joint_xw, delta)) {
      out.support.push_back(xn);
      out.prob.push_back(prob);
      out.normalizer += prob;
    } else {
      // track the width this word would have needed, for diagnostics
      imat counts = imat::Zero(joint_xw.rows(), joint_xw.cols());
      for (int i = 0; i < n; ++i) ++counts(xn[i], wn[i]);
      real dev = 0.0;
      bool zero_ok = true;
      for (index_t a = 0; a < joint_xw.rows() && zero_ok; ++a)
        for (index_t b = 0; b < joint_xw.cols(); ++b) {
          if (joint_xw(a, b) > kProbEps)
            dev = std::max(dev, std::abs(counts(a, b) / static_cast<real>(n) - joint_xw(a, b)));
          else if (counts(a, b) != 0) {
            zero_ok = false;
            break;
          }
        }
      if (zero_ok) best_dev = std::min(best_dev, dev);
    }
  } while (next_word(xn, nx));

  if (out.support.empty() || out.normalizer <= kProbEps) {
    std::ostringstream msg;
    msg << "no conditionally typical words for w^n=" << seq_str(wn) << " at delta=" << delta;
    if (std::isfinite(best_dev)) msg << "; minimum feasible delta is about " << best_dev;
    throw InfeasibleError(msg.str());
  }
  for (real& q : out.prob) q /= out.normalizer;
  return out;
}

Seq sample_sequence(const PrunedPmf& p, RandomStream& rs) {
  real u = rs.next_double();
  real acc = 0.0;
  for (size_t i = 0; i < p.prob.size(); ++i) {
    acc += p.prob[i];
    if (u < acc) return p.support[i];
  }
  return p.support.back();
}

cmat sequence_typical_projector(const std::vector<cmat>& per_position, real delta) {
  if (per_position.empty()) throw ValidationError("projector needs at least one position");
  const int n = static_cast<int>(per_position.size());
  const index_t d = per_position[0].rows();
  std::vector<SpectralCache> eigs;
  eigs.reserve(per_position.size());
  real target = 0.0;
  for (const cmat& state : per_position) {
    if (state.rows() != d || state.cols() != d)
      throw ValidationError("positions must share one dimension");
    eigs.push_back(decompose_state(state));
    target += eigs.back().entropy;
  }
  target /= n;

  const index_t dim = checked_word_count(static_cast<int>(d), n);
  std::vector<cvec> kept;
  Seq ks(n, 0);
  do {
    real rate = 0.0;
    bool alive = true;
    for (int i = 0; i < n && alive; ++i) {
      real lambda = eigs[i].vals(ks[i]);
      if (lambda <= 1e-12)
        alive = false;
      else
        rate -= std::log2(lambda);
    }
    if (!alive) continue;
    if (std::abs(rate / n - target) > delta + kTypSlack) continue;
    cmat v = eigs[0].vecs.col(ks[0]);
    for (int i = 1; i < n; ++i) v = kron(v, eigs[i].vecs.col(ks[i]));
    kept.push_back(v.col(0));
  } while (next_word(ks, static_cast<int>(d)));

  cmat proj = cmat::Zero(dim, dim);
  for (const cvec& v : kept) proj += v * v.adjoint();
  return hermitized(proj, 1e-10);
}

cmat typical_projector(const cmat& rho, int n, real delta) {
  return sequence_typical_projector(std::vector<cmat>(n, rho), delta);
}

cmat conditional_typical_projector(const std::vector<cmat>& states, const Seq& xn, real delta) {
  std::vector<cmat> per_position;
  per_position.reserve(xn.size());
  for (int x : xn) {
    if (x < 0 || x >= static_cast<int>(states.size()) || states[x].size() == 0)
      throw ValidationError("no conditional state for symbol " + std::to_string(x));
    per_position.push_back(states[x]);
  }
  return sequence_typical_projector(per_position, delta);
}

std::map<Seq, cmat> build_xi(const cmat& rho_a, const Povm& povm, const dvec& p, int n,
                             real delta) {
  if (rho_a.rows() != povm.dim) throw ValidationError("state and measurement dimensions differ");
  if (p.size() != static_cast<index_t>(povm.elements.size()))
    throw ValidationError("pmf length must match the measurement outcome count");
  cmat sq = sqrt_psd(hermitized(rho_a, 1e-10));

  std::vector<cmat> rho_hat(povm.elements.size());
  std::vector<int> support;
  for (index_t x = 0; x < p.size(); ++x) {
    if (p(x) <= kProbEps) continue;
    real mass = (povm.elements[x] * rho_a).trace().real();
    if (mass <= kProbEps)
      throw ValidationError("outcome " + std::to_string(x) +
                            " has zero mass but positive pmf weight");
    rho_hat[x] = hermitized(sq * povm.elements[x] * sq, 1e-11) / mass;
    support.push_back(static_cast<int>(x));
  }
  if (support.empty()) throw ValidationError("pmf has empty support");

  cmat pi_typ = typical_projector(rho_a, n, delta);

  std::map<Seq, cmat> out;
  Seq pos(n, 0);  // indexes into support
  do {
    Seq xn(n);
    for (int i = 0; i < n; ++i) xn[i] = support[pos[i]];
    std::vector<cmat> states;
    states.reserve(n);
    for (int x : xn) states.push_back(rho_hat[x]);
    cmat rho_word = kron_word(rho_hat, xn);
    cmat pi_cond = sequence_typical_projector(states, delta);
    cmat xi = hermitized(pi_typ * pi_cond * rho_word * pi_cond * pi_typ, 1e-10);
    real tr = xi.trace().real();
    if (tr > 1.0 + 1e-9)
      throw ValidationError("xi' trace exceeds one at word " + seq_str(xn));
    out.emplace(std::move(xn), std::move(xi));
  } while (next_word(pos, static_cast<int>(support.size())));
  return out;
}

OmegaCutoff build_omega_cutoff(const std::map<Seq, cmat>& xi_prime,
                               const std::map<Seq, real>& weights, real epsilon, int n,
                               real h_rb, real delta) {
  if (xi_prime.empty()) throw ValidationError("no xi' operators supplied");
  const index_t dim = xi_prime.begin()->second.rows();
  cmat avg = cmat::Zero(dim, dim);
  for (const auto& [word, weight] : weights) {
    auto it = xi_prime.find(word);
    if (it == xi_prime.end())
      throw ValidationError("weight on a word without an operator: " + seq_str(word));
    avg += weight * it->second;
  }

  const real threshold = std::max(epsilon * std::pow(2.0, -n * (h_rb + delta)), 1e-12);
  Eigen::SelfAdjointEigenSolver<cmat> es(hermitized(avg, 1e-10));

  OmegaCutoff out;
  out.pi = cmat::Zero(dim, dim);
  out.omega = cmat::Zero(dim, dim);
  for (index_t k = 0; k < dim; ++k) {
    real lambda = es.eigenvalues()(k);
    if (lambda <= threshold) continue;
    cmat vv = es.eigenvectors().col(k) * es.eigenvectors().col(k).adjoint();
    out.pi += vv;
    out.omega += lambda * vv;
    out.trace_omega += lambda;
  }
  out.pi = hermitized(out.pi, 1e-10);
  out.omega = hermitized(out.omega, 1e-10);
  for (const auto& [word, xi] : xi_prime)
    out.xi.emplace(word, hermitized(out.pi * xi * out.pi, 1e-10));
  return out;
}

Codebook sample_codebook(const ProtocolConfig& cfg, const PrunedPmf& pw) {
  Codebook cb;
  cb.normalizer = pw.normalizer;
  cb.words.resize(cfg.m_count);
  for (int m = 0; m < cfg.m_count; ++m) {
    cb.words[m].reserve(cfg.s);
    for (int j = 0; j < cfg.s; ++j) {
      RandomStream rs(cfg.seed, {TAG_WORDS, static_cast<std::uint64_t>(m),
                                 static_cast<std::uint64_t>(j)});
      Seq word = sample_sequence(pw, rs);
      ++cb.counts[word];
      cb.words[m].push_back(std::move(word));
    }
  }
  return cb;
}

Codebook random_binning(const ProtocolConfig& cfg, Codebook cb) {
  cb.bins.assign(cfg.m_count, std::vector<int>(cfg.s, 0));
  for (int m = 0; m < cfg.m_count; ++m)
    for (int j = 0; j < cfg.s; ++j) {
      RandomStream rs(cfg.seed, {TAG_BINS, static_cast<std::uint64_t>(m),
                                 static_cast<std::uint64_t>(j)});
      cb.bins[m][j] = rs.next_int(cfg.t);
    }
  return cb;
}

GammaFamily build_alice_subpovm(const ProtocolConfig& cfg, const Codebook& cb,
                                const std::map<Seq, cmat>& payload, const cmat& omega_a) {
  GammaFamily out;
  out.dim = omega_a.rows();
  cmat inv_sq = pinv_sqrt_psd(omega_a, 1e-12);
  const real prefactor = cb.normalizer / ((1.0 + cfg.epsilon) * cfg.s);

  std::map<Seq, int> index_of;
  for (const auto& entry : cb.counts) {
    const Seq& word = entry.first;
    auto it = payload.find(word);
    if (it == payload.end())
      throw ValidationError("sampled word has no payload operator: " + seq_str(word));
    index_of.emplace(word, static_cast<int>(out.words.size()));
    out.words.push_back(word);
    out.ops.push_back(hermitized(prefactor * inv_sq * it->second * inv_sq, 1e-9));
  }

  out.word_of.resize(cfg.m_count);
  out.flagged.assign(cfg.m_count, false);
  out.defect.assign(cfg.m_count, 0.0);
  for (int m = 0; m < cfg.m_count; ++m) {
    std::vector<int> indices(cfg.s);
    cmat sum = cmat::Zero(out.dim, out.dim);
    for (int j = 0; j < cfg.s; ++j) {
      indices[j] = index_of.at(cb.words[m][j]);
      sum += out.ops[indices[j]];
    }
    Eigen::SelfAdjointEigenSolver<cmat> es(hermitized(sum, 1e-9));
    real top = es.eigenvalues().maxCoeff();
    out.defect[m] = std::max(0.0, top - 1.0);
    if (top > 1.0 + 1e-9)
      out.flagged[m] = true;  // not a sub-POVM; this m falls back to {I}
    else
      out.word_of[m] = std::move(indices);
  }
  return out;
}

std::map<Seq, cmat> assemble_simulated_povm(const ProtocolConfig& cfg, const Codebook& cb,
                                            const GammaFamily& gf, const BobSide& bob,
                                            const imat& g_tilde) {
  if (bob.cols.size() != bob.ops.size())
    throw ValidationError("column words and operators must align");
  if (bob.ops.empty() && bob.complement.size() == 0)
    throw ValidationError("receiver side has no outcomes");
  const index_t dim_b = bob.ops.empty() ? bob.complement.rows() : bob.ops[0].rows();
  const index_t dim = gf.dim * dim_b;
  const real share = 1.0 / cfg.m_count;
  const Seq bottom(cfg.n, -1);

  std::map<Seq, cmat> out;
  for (int m = 0; m < cfg.m_count; ++m) {
    if (gf.flagged[m]) {
      add_term(out, bottom, share * cmat::Identity(dim, dim));
      continue;
    }
    std::vector<int> count(gf.ops.size(), 0);
    for (int j = 0; j < cfg.s; ++j) ++count[gf.word_of[m][j]];

    cmat total = cmat::Zero(gf.dim, gf.dim);
    for (size_t w = 0; w < gf.ops.size(); ++w)
      if (count[w] > 0) total += static_cast<real>(count[w]) * gf.ops[w];

    for (size_t c = 0; c < bob.cols.size(); ++c) {
      std::map<Seq, cmat> groups;
      for (size_t w = 0; w < gf.ops.size(); ++w) {
        if (count[w] == 0) continue;
        Seq key(cfg.n);
        for (int i = 0; i < cfg.n; ++i) key[i] = g_tilde(gf.words[w][i], bob.cols[c][i]);
        add_term(groups, key, static_cast<real>(count[w]) * gf.ops[w]);
      }
      for (const auto& [key, block] : groups)
        add_term(out, key, share * kron(block, bob.ops[c]));
    }
    if (bob.complement.size() != 0)
      add_term(out, bottom, share * kron(total, bob.complement));
  }
  return out;
}

std::map<Seq, cmat> product_measurement(const std::vector<cmat>& ops_a,
                                        const std::vector<cmat>& ops_b, const imat& table,
                                        int n) {
  if (static_cast<index_t>(ops_a.size()) != table.rows() ||
      static_cast<index_t>(ops_b.size()) != table.cols())
    throw ValidationError("function table does not match the outcome counts");
  std::map<Seq, cmat> out;
  for (const Seq& an : all_sequences(static_cast<int>(ops_a.size()), n)) {
    cmat block_a = kron_word(ops_a, an);
    for (const Seq& bn : all_sequences(static_cast<int>(ops_b.size()), n)) {
      Seq key(n);
      for (int i = 0; i < n; ++i) key[i] = table(an[i], bn[i]);
      add_term(out, key, kron(block_a, kron_word(ops_b, bn)));
    }
  }
  return out;
}

real max_sandwiched_gap(const cmat& sqrt_omega, const std::map<Seq, cmat>& a,
                        const std::map<Seq, cmat>& b) {
  std::set<Seq> keys;
  for (const auto& [key, op] : a) keys.insert(key);
  for (const auto& [key, op] : b) keys.insert(key);
  const index_t dim = sqrt_omega.rows();
  real worst = 0.0;
  for (const Seq& key : keys) {
    cmat diff = cmat::Zero(dim, dim);
    if (auto it = a.find(key); it != a.end()) diff += it->second;
    if (auto it = b.find(key); it != b.end()) diff -= it->second;
    worst = std::max(worst, trace_norm(hermitized(sqrt_omega * diff * sqrt_omega, 1e-9)));
  }
  return worst;
}

real faithful_distance(const cmat& omega, const std::map<Seq, cmat>& lambda_true,
                       const std::map<Seq, cmat>& lambda_sim) {
  const index_t dim = omega.rows();
  for (const auto& [key, op] : lambda_true)
    if (op.rows() != dim) throw ValidationError("reference operator dimension mismatch");
  for (const auto& [key, op] : lambda_sim)
    if (op.rows() != dim) throw ValidationError("simulated operator dimension mismatch");

  cmat sq = sqrt_psd(hermitized(omega, 1e-10));
  std::set<Seq> keys;
  for (const auto& [key, op] : lambda_true) keys.insert(key);
  for (const auto& [key, op] : lambda_sim) keys.insert(key);
  real d = 0.0;
  for (const Seq& key : keys) {
    cmat diff = cmat::Zero(dim, dim);
    if (auto it = lambda_sim.find(key); it != lambda_sim.end()) diff += it->second;
    if (auto it = lambda_true.find(key); it != lambda_true.end()) diff -= it->second;
    d += trace_norm(hermitized(sq * diff * sq, 1e-9));
  }
  return d;
}

ProtocolContext build_context(const DensityOperator& rho, const Povm& alice, const Povm& bob,
                              const FunctionTable& table, const ConditionalChannel& ch_a,
                              const ConditionalChannel* ch_b, const ProtocolConfig& cfg) {
  validate_config(cfg);
  if (rho.dims.size() != 2) throw ValidationError("protocol needs a bipartite state");

  ProtocolContext ctx;
  ctx.cfg = cfg;
  ctx.da = rho.dims[0];
  ctx.db = rho.dims[1];
  if (alice.dim != ctx.da || bob.dim != ctx.db)
    throw ValidationError("measurement dimensions must match the state factors");

  const int nu = static_cast<int>(alice.elements.size());
  const int nv = static_cast<int>(bob.elements.size());
  if (table.g.rows() != nu || table.g.cols() != nv)
    throw ValidationError("function table does not match the outcome counts");
  if (ch_a.alphabet() != nu) throw ValidationError("transmitter channel alphabet mismatch");

  ctx.rho_ab = rho.mat;
  ctx.rho_a = partial_trace(rho.mat, rho.dims, {0});
  ctx.rho_b = partial_trace(rho.mat, rho.dims, {1});
  ctx.alice_ops = alice.elements;
  ctx.bob_ops = bob.elements;
  ctx.g = table.g;
  ctx.nz = table.nz;
  ctx.h_rb = von_neumann_entropy(ctx.rho_a);

  JointPmf pmf = induce_joint_pmf(rho, alice, bob);
  ctx.joint_uv = pmf.p;
  dvec p_u = pmf.p.rowwise().sum();

  ctx.fam_a = ch_a.family;
  ctx.chan_a = ch_a.p;
  ctx.p_w = ch_a.p.transpose() * p_u;
  Povm lifted_a = lift_povm(alice, ch_a);
  ctx.lifted_a_ops = lifted_a.elements;

  if (cfg.scheme == Scheme::Covering) {
    ctx.code_ops = alice.elements;
    ctx.p_code = p_u;
    ctx.joint_xw.resize(nu, ch_a.outputs());
    for (int u = 0; u < nu; ++u)
      for (int w = 0; w < ch_a.outputs(); ++w) ctx.joint_xw(u, w) = p_u(u) * ch_a.p(u, w);
    ctx.col_ops = bob.elements;
    ctx.joint_wc = ch_a.p.transpose() * pmf.p;
    ctx.p_col = pmf.p.colwise().sum();
    ctx.g_tilde = build_tilde_g(ch_a.family, singleton_family(nv), pmf, table);
  } else {
    if (ch_b == nullptr) throw ValidationError("lifted scheme needs a receiver channel");
    if (ch_b->alphabet() != nv) throw ValidationError("receiver channel alphabet mismatch");
    Povm lifted_b = lift_povm(bob, *ch_b);
    ctx.code_ops = lifted_a.elements;
    ctx.p_code = ctx.p_w;
    ctx.col_ops = lifted_b.elements;
    ctx.joint_wc = ch_a.p.transpose() * pmf.p * ch_b->p;
    ctx.p_col = ctx.joint_wc.colwise().sum();
    ctx.g_tilde = build_tilde_g(ch_a.family, ch_b->family, pmf, table);

    const int ncol = static_cast<int>(ctx.col_ops.size());
    ctx.sqrt_col.resize(ncol);
    ctx.rho_hat_col.resize(ncol);
    for (int c = 0; c < ncol; ++c) {
      ctx.sqrt_col[c] = sqrt_psd(hermitized(ctx.col_ops[c], 1e-10));
      if (ctx.p_col(c) > kProbEps)
        ctx.rho_hat_col[c] =
            hermitized(ctx.sqrt_col[c] * ctx.rho_b * ctx.sqrt_col[c], 1e-11) / ctx.p_col(c);
    }
    const int nw = static_cast<int>(ctx.lifted_a_ops.size());
    ctx.ideal_col.assign(nw, std::vector<cmat>(ncol));
    cmat id_b = cmat::Identity(ctx.db, ctx.db);
    for (int w = 0; w < nw; ++w) {
      cmat reduced = partial_trace(kron(ctx.lifted_a_ops[w], id_b) * rho.mat, rho.dims, {1});
      for (int c = 0; c < ncol; ++c) {
        if (ctx.joint_wc(w, c) <= kProbEps) continue;
        ctx.ideal_col[w][c] =
            hermitized(ctx.sqrt_col[c] * reduced * ctx.sqrt_col[c], 1e-11) / ctx.joint_wc(w, c);
      }
    }
  }
  return ctx;
}

int bob_decode_classical(const ProtocolContext& ctx, const Codebook& cb, int m, int bin,
                         const Seq& vn) {
  int hit = -1;
  const Seq* word = nullptr;
  for (int j = 0; j < static_cast<int>(cb.words[m].size()); ++j) {
    if (cb.bins[m][j] != bin) continue;
    if (!jointly_typical(cb.words[m][j], vn, ctx.joint_wc, ctx.cfg.delta)) continue;
    if (word == nullptr) {
      word = &cb.words[m][j];
      hit = j;
    } else if (*word != cb.words[m][j]) {
      return -1;  // ambiguous bin
    }
  }
  return hit;
}

int sequential_decode(const cmat& gate, const std::vector<cmat>& tests, cmat state,
                      RandomStream& rs) {
  real tr = state.trace().real();
  if (tr <= 1e-15) return -1;
  state /= tr;

  real accept = clamp01((gate * state).trace().real());
  if (rs.next_double() >= accept) return -1;
  state = hermitized(gate * state * gate, 1e-9);
  tr = state.trace().real();
  if (tr <= 1e-15) return -1;
  state /= tr;

  const cmat id = cmat::Identity(state.rows(), state.cols());
  for (size_t k = 0; k < tests.size(); ++k) {
    real p = clamp01((tests[k] * state).trace().real());
    if (rs.next_double() < p) return static_cast<int>(k);
    cmat reject = id - tests[k];
    state = hermitized(reject * state * reject, 1e-9);
    tr = state.trace().real();
    if (tr <= 1e-15) return -1;
    state /= tr;
  }
  return -1;
}

int bob_decode_quantum(const ProtocolContext& ctx, const Codebook& cb, int m, int bin,
                       const Seq& wbn, const cmat& post_state, RandomStream& rs) {
  std::vector<int> candidates;
  std::vector<const Seq*> seen;
  for (int j = 0; j < static_cast<int>(cb.words[m].size()); ++j) {
    if (cb.bins[m][j] != bin) continue;
    if (!jointly_typical(cb.words[m][j], wbn, ctx.joint_wc, ctx.cfg.delta)) continue;
    bool duplicate = false;
    for (const Seq* w : seen)
      if (*w == cb.words[m][j]) {
        duplicate = true;
        break;
      }
    if (duplicate) continue;
    seen.push_back(&cb.words[m][j]);
    candidates.push_back(j);
  }
  if (candidates.empty()) return -1;

  cmat gate = conditional_typical_projector(ctx.rho_hat_col, wbn, ctx.cfg.delta);
  std::vector<cmat> tests;
  tests.reserve(candidates.size());
  for (int j : candidates) {
    std::vector<cmat> states;
    states.reserve(wbn.size());
    for (size_t i = 0; i < wbn.size(); ++i)
      states.push_back(ctx.ideal_col[cb.words[m][j][i]][wbn[i]]);
    tests.push_back(sequence_typical_projector(states, ctx.cfg.delta));
  }
  int k = sequential_decode(gate, tests, post_state, rs);
  return k < 0 ? -1 : candidates[k];
}

namespace {

// classical mass of the covered output words under the reference measurement
real coverage_probability(const ProtocolContext& ctx, const std::set<Seq>& covered) {
  if (covered.empty()) return 0.0;
  const int n = ctx.cfg.n;
  real total = 0.0;
  for (const Seq& un : all_sequences(static_cast<int>(ctx.joint_uv.rows()), n)) {
    for (const Seq& vn : all_sequences(static_cast<int>(ctx.joint_uv.cols()), n)) {
      real prob = 1.0;
      for (int i = 0; i < n; ++i) prob *= ctx.joint_uv(un[i], vn[i]);
      if (prob <= 0.0) continue;
      Seq key(n);
      for (int i = 0; i < n; ++i) key[i] = ctx.g(un[i], vn[i]);
      if (covered.count(key)) total += prob;
    }
  }
  return total;
}

struct DecodeTally {
  int failures = 0;
  int trials = 0;
};

// Monte Carlo decode experiment over the true joint outcome distribution of
// Alice's sub-POVM and the receiver-side measurement.
DecodeTally decode_experiment(const ProtocolContext& ctx, const Codebook& cb,
                              const GammaFamily& gf, const std::vector<Seq>& cols,
                              const cmat& omega) {
  const ProtocolConfig& cfg = ctx.cfg;
  DecodeTally tally;
  tally.trials = cfg.decode_trials;
  if (cfg.decode_trials == 0) return tally;

  const bool lifted = cfg.scheme == Scheme::Lifted;
  const index_t dim_a = gf.dim;

  // per-symbol reduced operators on the transmitter side
  std::vector<cmat> reduced(ctx.col_ops.size());
  cmat id_a = cmat::Identity(ctx.da, ctx.da);
  for (size_t c = 0; c < ctx.col_ops.size(); ++c)
    reduced[c] = partial_trace(kron(id_a, ctx.col_ops[c]) * ctx.rho_ab,
                               {ctx.da, ctx.db}, {0});

  std::vector<cmat> env(cols.size());
  for (size_t c = 0; c < cols.size(); ++c) env[c] = kron_word(reduced, cols[c]);
  cmat env_rest;  // mass outside the retained receiver outcomes (lifted only)
  if (lifted) {
    env_rest = kron_power(ctx.rho_a, cfg.n);
    for (const cmat& e : env) env_rest -= e;
  }

  // outcome weights per distinct codeword, one column per receiver word
  const int ncols = static_cast<int>(cols.size()) + (lifted ? 1 : 0);
  dmat table(gf.ops.size(), ncols);
  for (size_t w = 0; w < gf.ops.size(); ++w) {
    for (size_t c = 0; c < cols.size(); ++c)
      table(w, c) = std::max(0.0, (gf.ops[w] * env[c]).trace().real());
    if (lifted) table(w, ncols - 1) = std::max(0.0, (gf.ops[w] * env_rest).trace().real());
  }

  // post-measurement block per distinct codeword (lifted decoding only)
  std::vector<cmat> post_blocks;
  std::vector<cmat> sqrt_cols;
  if (lifted) {
    post_blocks.resize(gf.ops.size());
    cmat id_bn = cmat::Identity(omega.rows() / dim_a, omega.rows() / dim_a);
    std::vector<index_t> dims = {dim_a, omega.rows() / dim_a};
    for (size_t w = 0; w < gf.ops.size(); ++w)
      post_blocks[w] = partial_trace(kron(gf.ops[w], id_bn) * omega, dims, {1});
    sqrt_cols.resize(cols.size());
    for (size_t c = 0; c < cols.size(); ++c) sqrt_cols[c] = kron_word(ctx.sqrt_col, cols[c]);
  }

  for (int trial = 0; trial < cfg.decode_trials; ++trial) {
    RandomStream rs(cfg.seed, {TAG_DECODE, static_cast<std::uint64_t>(trial)});
    int m = rs.next_int(cfg.m_count);
    if (gf.flagged[m]) {
      ++tally.failures;  // common randomness value carries no codeword information
      continue;
    }
    real u = rs.next_double();
    int j_true = -1, c_true = -1;
    for (int j = 0; j < cfg.s && j_true < 0; ++j) {
      const int w = gf.word_of[m][j];
      for (int c = 0; c < ncols; ++c) {
        u -= table(w, c);
        if (u < 0.0) {
          j_true = j;
          c_true = c;
          break;
        }
      }
    }
    if (j_true < 0 || (lifted && c_true == ncols - 1)) {
      ++tally.failures;  // transmitter abort outcome or unretained receiver outcome
      continue;
    }

    const Seq& truth = cb.words[m][j_true];
    int decoded;
    if (!lifted) {
      decoded = bob_decode_classical(ctx, cb, m, cb.bins[m][j_true], cols[c_true]);
    } else {
      const cmat& sqc = sqrt_cols[c_true];
      cmat post = hermitized(sqc * post_blocks[gf.word_of[m][j_true]] * sqc, 1e-9);
      decoded = bob_decode_quantum(ctx, cb, m, cb.bins[m][j_true], cols[c_true], post, rs);
    }
    if (decoded < 0 || cb.words[m][decoded] != truth) ++tally.failures;
  }
  return tally;
}

}  // namespace

SimReport run_simulation(const ProtocolContext& ctx) {
  const ProtocolConfig& cfg = ctx.cfg;
  SimReport report;
  report.cfg = cfg;

  PrunedPmf pw = pruned_pmf(ctx.p_w, cfg.n, cfg.delta);

  Povm code_povm = Povm::checked(ctx.code_ops, /*complete=*/true);
  std::map<Seq, cmat> xi_prime = build_xi(ctx.rho_a, code_povm, ctx.p_code, cfg.n, cfg.delta);

  // pruned conditionals and the cutoff weights
  std::map<Seq, PrunedPmf> conditionals;
  std::map<Seq, real> weights;
  if (cfg.scheme == Scheme::Covering) {
    for (size_t k = 0; k < pw.support.size(); ++k) {
      const Seq& wn = pw.support[k];
      PrunedPmf cond = conditional_pruned_pmf(ctx.joint_xw, wn, cfg.delta);
      for (size_t i = 0; i < cond.support.size(); ++i)
        weights[cond.support[i]] += pw.prob[k] * cond.prob[i];
      conditionals.emplace(wn, std::move(cond));
    }
  } else {
    for (size_t k = 0; k < pw.support.size(); ++k) weights[pw.support[k]] = pw.prob[k];
  }

  OmegaCutoff cut = build_omega_cutoff(xi_prime, weights, cfg.epsilon, cfg.n, ctx.h_rb,
                                       cfg.delta);
  report.trace_omega = cut.trace_omega;

  // payload per pruned codeword
  std::map<Seq, cmat> payload;
  for (const Seq& wn : pw.support) {
    if (cfg.scheme == Scheme::Covering) {
      const PrunedPmf& cond = conditionals.at(wn);
      cmat sum = cmat::Zero(cut.pi.rows(), cut.pi.cols());
      for (size_t i = 0; i < cond.support.size(); ++i)
        sum += cond.normalizer * cond.prob[i] * cut.xi.at(cond.support[i]);
      payload.emplace(wn, std::move(sum));
    } else {
      payload.emplace(wn, cut.xi.at(wn));
    }
  }

  Codebook cb = random_binning(cfg, sample_codebook(cfg, pw));
  if (cfg.scheme == Scheme::Covering)
    for (const auto& [word, count] : cb.counts)
      cb.cond_normalizer[word] = conditionals.at(word).normalizer;

  cmat omega_a = kron_power(ctx.rho_a, cfg.n);
  GammaFamily gf = build_alice_subpovm(cfg, cb, payload, omega_a);
  report.flags = gf.flagged;
  report.defect = *std::max_element(gf.defect.begin(), gf.defect.end());

  // receiver-side outcome words
  std::vector<Seq> cols;
  if (cfg.scheme == Scheme::Covering)
    cols = all_sequences(static_cast<int>(ctx.col_ops.size()), cfg.n);
  else
    cols = typical_set(ctx.p_col, cfg.n, cfg.delta);

  // covered output words and their true probability mass
  std::set<Seq> covered;
  for (const auto& [word, count] : cb.counts) {
    for (const Seq& col : cols) {
      Seq key(cfg.n);
      bool defined = true;
      for (int i = 0; i < cfg.n; ++i) {
        key[i] = ctx.g_tilde(word[i], col[i]);
        if (key[i] < 0) defined = false;
      }
      if (defined) covered.insert(key);
    }
  }
  report.coverage = coverage_probability(ctx, covered);

  cmat omega;
  if (cfg.compute_distance || cfg.scheme == Scheme::Lifted) {
    omega = kron_power(ctx.rho_ab, cfg.n);
    if (cfg.n > 1) {
      std::vector<index_t> dims;
      std::vector<int> perm;
      for (int i = 0; i < cfg.n; ++i) {
        dims.push_back(ctx.da);
        dims.push_back(ctx.db);
      }
      for (int i = 0; i < cfg.n; ++i) perm.push_back(2 * i);
      for (int i = 0; i < cfg.n; ++i) perm.push_back(2 * i + 1);
      omega = permute_subsystems(omega, dims, perm);
    }
  }

  if (cfg.compute_distance) {
    BobSide bob;
    bob.cols = cols;
    for (const Seq& col : cols) bob.ops.push_back(kron_word(ctx.col_ops, col));
    if (cfg.scheme == Scheme::Lifted) {
      const index_t dim_b = kron_power(ctx.rho_b, cfg.n).rows();
      cmat rest = cmat::Identity(dim_b, dim_b);
      for (const cmat& op : bob.ops) rest -= op;
      bob.complement = hermitized(rest, 1e-9);
    }

    std::map<Seq, cmat> sim = assemble_simulated_povm(cfg, cb, gf, bob, ctx.g_tilde);
    std::map<Seq, cmat> truth = product_measurement(ctx.alice_ops, ctx.bob_ops, ctx.g, cfg.n);
    std::map<Seq, cmat> truth_lifted = product_measurement(
        ctx.lifted_a_ops, cfg.scheme == Scheme::Covering ? ctx.bob_ops : ctx.col_ops,
        ctx.g_tilde, cfg.n);

    cmat sqrt_omega = sqrt_psd(hermitized(omega, 1e-10));
    report.identity_gap = max_sandwiched_gap(sqrt_omega, truth_lifted, truth);
    if (report.identity_gap > 1e-9) {
      std::ostringstream msg;
      msg << "set-valued measurement disagrees with the reference in the weighted norm by "
          << report.identity_gap;
      throw ValidationError(msg.str());
    }
    report.d = faithful_distance(omega, truth, sim);
    report.distance_computed = true;
  }

  DecodeTally tally = decode_experiment(ctx, cb, gf, cols, omega);
  report.decode_failures = tally.failures;
  report.trials = tally.trials;
  if (tally.trials > 0) {
    report.decode_error = static_cast<real>(tally.failures) / tally.trials;
    report.decode_ci =
        1.96 * std::sqrt(report.decode_error * (1.0 - report.decode_error) / tally.trials);
  }
  return report;
}

std::string report_json(const SimReport& r) {
  nlohmann::json j;
  j["config"] = {{"n", r.cfg.n},
                 {"delta", r.cfg.delta},
                 {"epsilon", r.cfg.epsilon},
                 {"s", r.cfg.s},
                 {"t", r.cfg.t},
                 {"m", r.cfg.m_count},
                 {"seed", r.cfg.seed},
                 {"theorem", static_cast<int>(r.cfg.scheme)},
                 {"decode_trials", r.cfg.decode_trials},
                 {"compute_distance", r.cfg.compute_distance}};
  if (r.distance_computed) {
    j["d"] = r.d;
    j["identity_gap"] = r.identity_gap;
  } else {
    j["d"] = nullptr;
    j["identity_gap"] = nullptr;
  }
  j["defect"] = r.defect;
  j["flags"] = r.flags;
  j["coverage"] = r.coverage;
  j["trace_omega"] = r.trace_omega;
  j["decode_error"] = r.decode_error;
  j["decode_ci"] = r.decode_ci;
  j["decode_failures"] = r.decode_failures;
  j["trials"] = r.trials;
  return j.dump(2);
}

}  // namespace dqms
