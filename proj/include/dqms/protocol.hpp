#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dqms/function_graph.hpp"
#include "dqms/operators.hpp"
#include "dqms/random_stream.hpp"
#include "dqms/rate_region.hpp"
#include "dqms/types.hpp"

namespace dqms {

// A length-n word of symbol indices.  Simulated-output words additionally
// allow the sentinel -1 for positions where no function value is defined.
using Seq = std::vector<int>;

enum class Scheme { Lifted = 1, Covering = 2 };

struct ProtocolConfig {
  int n = 1;            // blocklength
  real delta = 1.0;     // typicality width
  real epsilon = 0.5;   // spectrum cutoff / prefactor parameter
  int s = 8;            // codewords per common-randomness value
  int t = 8;            // bins
  int m_count = 8;      // common-randomness values
  std::uint64_t seed = 1;
  Scheme scheme = Scheme::Covering;
  int decode_trials = 256;
  bool compute_distance = true;
};

void validate_config(const ProtocolConfig& cfg);

// ---- sequences and classical typicality ----

std::vector<Seq> all_sequences(int alphabet, int n);  // lexicographic

std::vector<int> symbol_counts(const Seq& xn, int alphabet);

// Strong typicality with hard zeros: |N(x)/n - p(x)| <= delta when p(x) > 0,
// N(x) = 0 when p(x) = 0.
bool is_typical(const Seq& xn, const dvec& p, real delta);

std::vector<Seq> typical_set(const dvec& p, int n, real delta);

// Pairwise strong typicality of (x^n, y^n) against a joint pmf.
bool jointly_typical(const Seq& xn, const Seq& yn, const dmat& joint, real delta);

real sequence_prob(const Seq& xn, const dvec& p);

// Smallest width for which some length-n word is typical; used in
// infeasibility diagnostics.
real min_feasible_delta(const dvec& p, int n);

struct PrunedPmf {
  std::vector<Seq> support;  // lexicographic
  std::vector<real> prob;    // renormalized, sums to 1
  real normalizer = 0.0;     // retained mass before renormalizing

  int find(const Seq& xn) const;  // index into support, -1 if absent
};

// Restriction of the product pmf to the typical set.  Throws InfeasibleError
// with a minimum-feasible-delta diagnostic when the set is empty.
PrunedPmf pruned_pmf(const dvec& p, int n, real delta);

// Restriction of p(x^n | w^n) to the words jointly typical with w^n, for the
// joint pmf p(x, w).
PrunedPmf conditional_pruned_pmf(const dmat& joint_xw, const Seq& wn, real delta);

Seq sample_sequence(const PrunedPmf& p, RandomStream& rs);

// ---- quantum typicality ----

// Projector onto the tensor eigenvector words of the given per-position
// states whose empirical log-eigenvalue rate is within delta of the mean
// per-position entropy.
cmat sequence_typical_projector(const std::vector<cmat>& per_position, real delta);

cmat typical_projector(const cmat& rho, int n, real delta);

// states[x] is the conditional state for symbol x; the projector is taken at
// the entropy rate of xn's empirical distribution.
cmat conditional_typical_projector(const std::vector<cmat>& states, const Seq& xn, real delta);

// ---- protocol operators ----

// xi'_{x^n} for every word over the support of p:
//   xi' = P_typ P_cond rhohat_{x^n} P_cond P_typ,
//   rhohat_x = sqrt(rho) L_x sqrt(rho) / Tr[L_x rho].
std::map<Seq, cmat> build_xi(const cmat& rho_a, const Povm& povm, const dvec& p, int n,
                             real delta);

struct OmegaCutoff {
  cmat pi;                // projector onto the retained spectrum of the average
  cmat omega;             // pi * average * pi
  std::map<Seq, cmat> xi; // clipped xi'_{x^n}
  real trace_omega = 0.0;
};

// Cut the weighted average of xi' at eigenvalue epsilon * 2^{-n (h_rb + delta)}
// and clip each xi' to the retained subspace.
OmegaCutoff build_omega_cutoff(const std::map<Seq, cmat>& xi_prime,
                               const std::map<Seq, real>& weights, real epsilon, int n,
                               real h_rb, real delta);

// ---- codebook ----

struct Codebook {
  std::vector<std::vector<Seq>> words;  // [m][j]
  std::vector<std::vector<int>> bins;   // [m][j] in [0, t)
  std::map<Seq, int> counts;            // multiplicity over all (j, m)
  real normalizer = 0.0;                // S
  std::map<Seq, real> cond_normalizer;  // S(w^n), covering scheme only
};

Codebook sample_codebook(const ProtocolConfig& cfg, const PrunedPmf& pw);

Codebook random_binning(const ProtocolConfig& cfg, Codebook cb);

// Per-m measurement family.  Distinct codewords share one operator, so the
// element for (m, j) is ops[word_of[m][j]].  Flagged m carry the identity as
// their single element and an empty index map.
struct GammaFamily {
  std::vector<Seq> words;                // distinct codewords, lexicographic
  std::vector<cmat> ops;                 // one operator per distinct codeword
  std::vector<std::vector<int>> word_of; // [m][j] -> index into words/ops
  std::vector<bool> flagged;
  std::vector<real> defect;              // per m, max(0, maxeig(sum) - 1) before flagging
  index_t dim = 0;

  const cmat& gamma(int m, int j) const { return ops[word_of[m][j]]; }
};

// payload maps each pruned codeword to its unnormalized measurement operator;
// the S / ((1+epsilon) s) prefactor and the inverse square root of omega_a are
// applied here.  Families whose sum exceeds the identity beyond 1e-9 are
// flagged and replaced by {I}.
GammaFamily build_alice_subpovm(const ProtocolConfig& cfg, const Codebook& cb,
                                const std::map<Seq, cmat>& payload, const cmat& omega_a);

// ---- simulated and reference measurements ----

// Receiver-side outcome operators.  cols index rows of the g-tilde column
// space; complement (when nonempty) collects the remaining outcome and maps
// to the all-sentinel word.
struct BobSide {
  std::vector<Seq> cols;
  std::vector<cmat> ops;
  cmat complement;
};

std::map<Seq, cmat> assemble_simulated_povm(const ProtocolConfig& cfg, const Codebook& cb,
                                            const GammaFamily& gf, const BobSide& bob,
                                            const imat& g_tilde);

// Product measurement on n copies grouped A-then-B, keyed by the table image
// of the outcome pair.  Table entries may be -1.
std::map<Seq, cmat> product_measurement(const std::vector<cmat>& ops_a,
                                        const std::vector<cmat>& ops_b, const imat& table,
                                        int n);

// sum_z || sqrt(omega) (sim_z - true_z) sqrt(omega) ||_1 over the union of keys.
real faithful_distance(const cmat& omega, const std::map<Seq, cmat>& lambda_true,
                       const std::map<Seq, cmat>& lambda_sim);

// max_z || sqrt_omega (a_z - b_z) sqrt_omega ||_1; used to verify measurement
// identities in the weighted norm.
real max_sandwiched_gap(const cmat& sqrt_omega, const std::map<Seq, cmat>& a,
                        const std::map<Seq, cmat>& b);

// ---- full protocol ----

struct ProtocolContext {
  ProtocolConfig cfg;
  index_t da = 0, db = 0;
  cmat rho_ab, rho_a, rho_b;
  std::vector<cmat> alice_ops, bob_ops;
  imat g;
  int nz = 0;
  dmat joint_uv;

  IndependentSetFamily fam_a;
  dmat chan_a;                     // p(w|u)
  std::vector<cmat> lifted_a_ops;

  std::vector<cmat> code_ops;  // POVM whose outcomes condition xi'
  dvec p_code;
  dvec p_w;                    // codeword marginal
  dmat joint_xw;               // covering: p(u, w); lifted: empty

  std::vector<cmat> col_ops;   // per-symbol receiver outcomes
  dvec p_col;
  dmat joint_wc;               // p(w, col)
  imat g_tilde;

  // lifted-scheme decode caches
  std::vector<cmat> sqrt_col;
  std::vector<cmat> rho_hat_col;
  std::vector<std::vector<cmat>> ideal_col;  // [w][col], empty where p(w,col) = 0

  real h_rb = 0.0;
};

// ch_b is required for the lifted scheme and ignored for covering.
ProtocolContext build_context(const DensityOperator& rho, const Povm& alice, const Povm& bob,
                              const FunctionTable& table, const ConditionalChannel& ch_a,
                              const ConditionalChannel* ch_b, const ProtocolConfig& cfg);

// Unique codeword in the bin jointly typical with the observed column word;
// returns a j holding it, or -1 on none/ambiguous.
int bob_decode_classical(const ProtocolContext& ctx, const Codebook& cb, int m, int bin,
                         const Seq& vn);

// Gate projector followed by sequential candidate tests with Born-rule
// collapse; returns the accepted candidate index or -1.
int sequential_decode(const cmat& gate, const std::vector<cmat>& tests, cmat state,
                      RandomStream& rs);

int bob_decode_quantum(const ProtocolContext& ctx, const Codebook& cb, int m, int bin,
                       const Seq& wbn, const cmat& post_state, RandomStream& rs);

struct SimReport {
  ProtocolConfig cfg;
  bool distance_computed = false;
  real d = 0.0;
  real defect = 0.0;              // max over m, before flagging
  std::vector<bool> flags;        // per m
  real identity_gap = 0.0;        // lifted-measurement identity, weighted norm
  real coverage = 0.0;            // true-measurement mass of covered outputs
  real trace_omega = 0.0;
  real decode_error = 0.0;
  real decode_ci = 0.0;           // 95% normal-approximation half width
  int decode_failures = 0;
  int trials = 0;
};

SimReport run_simulation(const ProtocolContext& ctx);

std::string report_json(const SimReport& r);

}  // namespace dqms
