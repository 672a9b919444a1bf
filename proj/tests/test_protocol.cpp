#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dqms/protocol.hpp"
#include "dqms/rate_region.hpp"
#include "dqms/shannon.hpp"
#include "support/instances.hpp"

using namespace dqms;

namespace {

real max_abs(const cmat& m) { return m.cwiseAbs().maxCoeff(); }

// three-card instance wired for the protocol: uniform channel on Alice's two
// maximal sets (the q = 1/2 point), singleton lift on Bob's side
struct CardsProtocol {
  DensityOperator rho = test::cards_state();
  Povm pa = test::basis_povm(3);
  Povm pb = test::basis_povm(3);
  JointPmf pmf;
  FunctionTable g;
  IndependentSetFamily ga;
  ConditionalChannel ch_a;
  ConditionalChannel ch_b;

  CardsProtocol() {
    pmf = induce_joint_pmf(rho, pa, pb);
    g = FunctionTable::checked(test::cards_g());
    ga = maximal_independent_sets(pmf, g, Side::A);
    ch_a = uniform_channel(ga, 3);
    ch_b = identity_channel(3);
  }

  // p(u)p(w|u) for the uniform channel
  dmat joint_xw() const {
    dmat j(3, 2);
    j << 1.0 / 3.0, 0.0,
         1.0 / 6.0, 1.0 / 6.0,
         0.0, 1.0 / 3.0;
    return j;
  }
};

cmat cards_omega(const CardsProtocol& cards, int n) {
  cmat omega = kron_power(cards.rho.mat, n);
  if (n > 1) {
    std::vector<index_t> dims;
    std::vector<int> perm;
    for (int i = 0; i < n; ++i) {
      dims.push_back(3);
      dims.push_back(3);
    }
    for (int i = 0; i < n; ++i) perm.push_back(2 * i);
    for (int i = 0; i < n; ++i) perm.push_back(2 * i + 1);
    omega = permute_subsystems(omega, dims, perm);
  }
  return omega;
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("config validation rejects bad parameters") {
  ProtocolConfig cfg;
  CHECK_NOTHROW(validate_config(cfg));
  cfg.n = 0;
  CHECK_THROWS_AS(validate_config(cfg), ValidationError);
  cfg = ProtocolConfig{};
  cfg.delta = 0.0;
  CHECK_THROWS_AS(validate_config(cfg), ValidationError);
  cfg = ProtocolConfig{};
  cfg.t = cfg.s + 1;  // more bins than codewords just leaves bins empty
  CHECK_NOTHROW(validate_config(cfg));
  cfg.t = 0;
  CHECK_THROWS_AS(validate_config(cfg), ValidationError);
  cfg = ProtocolConfig{};
  cfg.decode_trials = -1;
  CHECK_THROWS_AS(validate_config(cfg), ValidationError);
}

TEST_CASE("typicality selects the right words") {
  dvec half(2);
  half << 0.5, 0.5;
  CHECK(is_typical({0, 1}, half, 0.4));
  CHECK_FALSE(is_typical({0, 0}, half, 0.4));

  auto words = typical_set(half, 2, 0.4);
  REQUIRE(words.size() == 2);
  CHECK(words[0] == Seq{0, 1});
  CHECK(words[1] == Seq{1, 0});

  // a zero-mass symbol excludes every word that touches it
  dvec padded(3);
  padded << 0.5, 0.5, 0.0;
  auto loose = typical_set(padded, 2, 1.0);
  CHECK(loose.size() == 4);
  for (const Seq& w : loose)
    for (int x : w) CHECK(x != 2);

  dvec point(2);
  point << 1.0, 0.0;
  CHECK(is_typical({0}, point, 0.1));
  CHECK_FALSE(is_typical({1}, point, 0.1));
}

TEST_CASE("pruned pmf renormalizes the typical mass") {
  dvec half(2);
  half << 0.5, 0.5;
  PrunedPmf full = pruned_pmf(half, 1, 1.0);
  CHECK(full.normalizer == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(full.prob[0] == doctest::Approx(0.5));

  PrunedPmf pruned = pruned_pmf(half, 2, 0.4);
  REQUIRE(pruned.support.size() == 2);
  CHECK(pruned.normalizer == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pruned.prob[0] == doctest::Approx(0.5));
  CHECK(pruned.find(Seq{0, 1}) == 0);
  CHECK(pruned.find(Seq{1, 0}) == 1);
  CHECK(pruned.find(Seq{0, 0}) == -1);

  RandomStream rs(3, {TAG_WORDS, 0, 0});
  for (int k = 0; k < 10; ++k) {
    Seq w = sample_sequence(pruned, rs);
    CHECK(pruned.find(w) >= 0);
  }
}

TEST_CASE("conditional pruning matches hand computation") {
  CardsProtocol cards;
  dmat joint = cards.joint_xw();

  // at width 0.2 only u^n = (0,2) is conditionally typical for w^n = (0,1),
  // with conditional mass (2/3)(2/3)
  PrunedPmf tight = conditional_pruned_pmf(joint, {0, 1}, 0.2);
  REQUIRE(tight.support.size() == 1);
  CHECK(tight.support[0] == Seq{0, 2});
  CHECK(tight.prob[0] == doctest::Approx(1.0));
  CHECK(tight.normalizer == doctest::Approx(4.0 / 9.0).epsilon(1e-12));

  // at width 0.35 every positive-probability word qualifies
  PrunedPmf loose = conditional_pruned_pmf(joint, {0, 1}, 0.35);
  CHECK(loose.support.size() == 4);
  CHECK(loose.normalizer == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(conditional_pruned_pmf(joint, {0, 1}, 0.01), InfeasibleError);
}

TEST_CASE("infeasible pruning reports a workable delta") {
  dvec skew(2);
  skew << 0.9, 0.1;
  CHECK(min_feasible_delta(skew, 2) == doctest::Approx(0.1).epsilon(1e-12));

  std::string message;
  try {
    pruned_pmf(skew, 2, 0.04);
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    message = e.what();
  }
  CHECK(message.find("minimum feasible delta") != std::string::npos);
  CHECK(message.find("0.1") != std::string::npos);

  CHECK_NOTHROW(pruned_pmf(skew, 2, min_feasible_delta(skew, 2)));
}

TEST_CASE("typical projector reduces to support and pure products") {
  RandomStream rs(11, {0});
  cmat rho = test::random_density(rs, 2);
  CHECK(max_abs(typical_projector(rho, 2, 50.0) - cmat::Identity(4, 4)) < 1e-9);

  cvec psi = test::ginibre(rs, 2, 1);
  psi /= psi.norm();
  cmat pure = psi * psi.adjoint();
  cmat proj = typical_projector(pure, 3, 0.5);
  CHECK(max_abs(proj - kron_power(pure, 3)) < 1e-9);

  // diagonal qubit, blocklength two: the eigenvalue tuples sort by their
  // empirical rate, so the window picks exactly the expected diagonal mask
  cmat diag = cmat::Zero(2, 2);
  diag(0, 0) = 0.7;
  diag(1, 1) = 0.3;
  cmat mid = typical_projector(diag, 2, 0.3);
  cmat mask = cmat::Zero(4, 4);
  mask(1, 1) = 1.0;
  mask(2, 2) = 1.0;
  CHECK(max_abs(mid - mask) < 1e-12);
  mask(0, 0) = 1.0;
  CHECK(max_abs(typical_projector(diag, 2, 0.4) - mask) < 1e-12);
  mask(3, 3) = 1.0;
  CHECK(max_abs(typical_projector(diag, 2, 0.9) - mask) < 1e-12);

  std::vector<cmat> states = {pure, cmat()};
  CHECK_THROWS_AS(conditional_typical_projector(states, {1}, 0.5), ValidationError);
}

TEST_CASE("xi operators match the masked post-measurement states") {
  CardsProtocol cards;
  cmat rho_a = partial_trace(cards.rho.mat, {3, 3}, {0});
  dvec p = dvec::Constant(3, 1.0 / 3.0);

  auto xi = build_xi(rho_a, cards.pa, p, 2, 0.5);
  CHECK(xi.size() == 9);
  for (const auto& [word, op] : xi) {
    cmat expected = cmat::Zero(9, 9);
    expected(word[0] * 3 + word[1], word[0] * 3 + word[1]) = 1.0;
    CHECK(max_abs(op - expected) < 1e-12);
    CHECK(op.trace().real() == doctest::Approx(1.0));
  }

  // with a huge window nothing is cut and xi' is the exact post state
  RandomStream rs(13, {0});
  cmat rho = test::random_density(rs, 2);
  Povm povm = test::random_povm(rs, 2, 2);
  dvec q(2);
  cmat sq = sqrt_psd(rho);
  std::vector<cmat> hat(2);
  for (int x = 0; x < 2; ++x) {
    q(x) = (povm.elements[x] * rho).trace().real();
    hat[x] = sq * povm.elements[x] * sq / q(x);
  }
  auto wide = build_xi(rho, povm, q, 2, 50.0);
  for (const auto& [word, op] : wide) {
    CHECK(max_abs(op - kron(hat[word[0]], hat[word[1]])) < 1e-8);
    CHECK(op.trace().real() <= 1.0 + 1e-9);
    CHECK(op.trace().real() > 0.0);
  }
}

TEST_CASE("omega cutoff keeps or drops the whole spectrum") {
  CardsProtocol cards;
  cmat rho_a = partial_trace(cards.rho.mat, {3, 3}, {0});
  dvec p = dvec::Constant(3, 1.0 / 3.0);
  auto xi = build_xi(rho_a, cards.pa, p, 2, 0.5);
  std::map<Seq, real> weights;
  for (const auto& [word, op] : xi) weights[word] = 1.0 / 9.0;
  const real h = std::log2(3.0);

  // every eigenvalue of the average sits at 1/9, above the cutoff
  OmegaCutoff keep = build_omega_cutoff(xi, weights, 0.5, 2, h, 0.1);
  CHECK(max_abs(keep.pi - cmat::Identity(9, 9)) < 1e-9);
  CHECK(keep.trace_omega == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& [word, op] : xi) CHECK(max_abs(keep.xi.at(word) - op) < 1e-9);

  // a large epsilon pushes the cutoff above the whole spectrum
  OmegaCutoff drop = build_omega_cutoff(xi, weights, 10.0, 2, h, 0.01);
  CHECK(drop.trace_omega == doctest::Approx(0.0));
  CHECK(max_abs(drop.pi) < 1e-12);
  CHECK(max_abs(drop.xi.at(xi.begin()->first)) < 1e-12);

  RandomStream rs(17, {0});
  cmat rho = test::random_density(rs, 2);
  Povm povm = test::random_povm(rs, 2, 2);
  dvec q(2);
  for (int x = 0; x < 2; ++x) q(x) = (povm.elements[x] * rho).trace().real();
  auto xi2 = build_xi(rho, povm, q, 2, 0.5);
  std::map<Seq, real> w2;
  for (const auto& [word, op] : xi2)
    w2[word] = q(word[0]) * q(word[1]);
  OmegaCutoff cut = build_omega_cutoff(xi2, w2, 0.3, 2, von_neumann_entropy(rho), 0.5);
  CHECK(cut.trace_omega > 0.0);
  CHECK(cut.trace_omega <= 1.0 + 1e-9);
}

TEST_CASE("codeword sampling and binning are deterministic and uniform") {
  dvec half(2);
  half << 0.5, 0.5;
  PrunedPmf pw = pruned_pmf(half, 1, 1.0);

  ProtocolConfig cfg;
  cfg.s = 400;
  cfg.t = 4;
  cfg.m_count = 1;
  cfg.seed = 5;
  Codebook cb = random_binning(cfg, sample_codebook(cfg, pw));

  int zeros = 0;
  for (const Seq& w : cb.words[0]) zeros += w[0] == 0 ? 1 : 0;
  CHECK(zeros > 150);
  CHECK(zeros < 250);

  std::vector<int> counts(4, 0);
  for (int b : cb.bins[0]) ++counts[b];
  real chi2 = 0.0;
  for (int c : counts) chi2 += (c - 100.0) * (c - 100.0) / 100.0;
  CHECK(chi2 < 16.27);  // 99.9% quantile with three degrees of freedom

  Codebook again = random_binning(cfg, sample_codebook(cfg, pw));
  CHECK(again.words[0] == cb.words[0]);
  CHECK(again.bins[0] == cb.bins[0]);

  cfg.t = 1;
  Codebook trivial = random_binning(cfg, cb);
  for (int b : trivial.bins[0]) CHECK(b == 0);
}

TEST_CASE("sub measurement matches closed forms") {
  cmat omega_a = cmat::Identity(3, 3) / 3.0;
  cmat rho0 = cmat::Zero(3, 3);
  rho0(0, 0) = 1.0;

  Codebook cb;
  cb.words = {{Seq{0}}};
  cb.counts[Seq{0}] = 1;
  cb.normalizer = 1.0;
  std::map<Seq, cmat> payload;
  payload[Seq{0}] = rho0;

  ProtocolConfig cfg;
  cfg.s = 1;
  cfg.t = 1;
  cfg.m_count = 1;

  // prefactor 1/(1+epsilon) against the inverse square root blows the single
  // element up to 3/(1+epsilon) on its support
  cfg.epsilon = 3.0;
  GammaFamily tame = build_alice_subpovm(cfg, cb, payload, omega_a);
  REQUIRE(tame.ops.size() == 1);
  CHECK(max_abs(tame.ops[0] - 0.75 * rho0) < 1e-12);
  CHECK_FALSE(tame.flagged[0]);
  CHECK(tame.defect[0] == doctest::Approx(0.0));
  CHECK(tame.word_of[0] == std::vector<int>{0});

  cfg.epsilon = 0.5;
  GammaFamily hot = build_alice_subpovm(cfg, cb, payload, omega_a);
  CHECK(hot.flagged[0]);
  CHECK(hot.defect[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(hot.word_of[0].empty());

  // three balanced words drop the sum to two thirds of the identity
  Codebook full;
  full.words = {{Seq{0}, Seq{1}, Seq{2}}};
  for (int u = 0; u < 3; ++u) full.counts[Seq{u}] = 1;
  full.normalizer = 1.0;
  std::map<Seq, cmat> masks;
  for (int u = 0; u < 3; ++u) {
    cmat e = cmat::Zero(3, 3);
    e(u, u) = 1.0;
    masks[Seq{u}] = e;
  }
  cfg.s = 3;
  GammaFamily balanced = build_alice_subpovm(cfg, full, masks, omega_a);
  cmat sum = cmat::Zero(3, 3);
  for (const cmat& op : balanced.ops) sum += op;
  CHECK(max_abs(sum - (2.0 / 3.0) * cmat::Identity(3, 3)) < 1e-12);
  CHECK_FALSE(balanced.flagged[0]);
}

TEST_CASE("flagging becomes rarer with more codewords") {
  CardsProtocol cards;
  auto flags_at = [&](int s, std::uint64_t seed) {
    ProtocolConfig cfg;
    cfg.scheme = Scheme::Covering;
    cfg.s = s;
    cfg.t = s;
    cfg.seed = seed;
    cfg.compute_distance = false;
    cfg.decode_trials = 0;
    ProtocolContext ctx = build_context(cards.rho, cards.pa, cards.pb, cards.g,
                                        cards.ch_a, nullptr, cfg);
    SimReport rep = run_simulation(ctx);
    int n = 0;
    for (bool f : rep.flags) n += f ? 1 : 0;
    return n;
  };
  int small = 0, large = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    small += flags_at(8, seed);
    large += flags_at(32, seed);
  }
  CHECK(large <= small);
}

TEST_CASE("assembled measurement stays below the identity") {
  // constant function: one codeword, one receiver outcome, one key
  ProtocolConfig cfg;
  cfg.s = 1;
  cfg.t = 1;
  cfg.m_count = 1;
  Codebook cb;
  cb.words = {{Seq{0}}};
  cb.counts[Seq{0}] = 1;
  cb.normalizer = 1.0;
  GammaFamily gf;
  gf.dim = 2;
  gf.words = {Seq{0}};
  gf.ops = {0.5 * cmat::Identity(2, 2)};
  gf.word_of = {{0}};
  gf.flagged = {false};
  gf.defect = {0.0};
  BobSide bob;
  bob.cols = {Seq{0}};
  bob.ops = {cmat::Identity(2, 2)};
  imat table(1, 1);
  table(0, 0) = 0;
  auto sim = assemble_simulated_povm(cfg, cb, gf, bob, table);
  REQUIRE(sim.size() == 1);
  CHECK(max_abs(sim.at(Seq{0}) - kron(gf.ops[0], bob.ops[0])) < 1e-12);

  // full pipeline on a random two-qubit instance
  RandomStream rs(23, {0});
  cmat joint = test::random_density(rs, 4);
  DensityOperator rho = DensityOperator::checked(joint, {2, 2});
  Povm pa = test::random_povm(rs, 2, 3);
  Povm pb = test::random_povm(rs, 2, 3);
  JointPmf pmf = induce_joint_pmf(rho, pa, pb);
  FunctionTable g = FunctionTable::checked(test::random_g(rs, 3, 3, 2));
  IndependentSetFamily ga = maximal_independent_sets(pmf, g, Side::A);
  ConditionalChannel ch = uniform_channel(ga, 3);

  ProtocolConfig rcfg;
  rcfg.n = 1;
  rcfg.delta = 1.5;
  rcfg.s = 6;
  rcfg.t = 6;
  rcfg.m_count = 4;
  rcfg.seed = 9;
  ProtocolContext ctx = build_context(rho, pa, pb, g, ch, nullptr, rcfg);

  PrunedPmf pw = pruned_pmf(ctx.p_w, 1, rcfg.delta);
  Povm code = Povm::checked(ctx.code_ops);
  auto xi = build_xi(ctx.rho_a, code, ctx.p_code, 1, rcfg.delta);
  std::map<Seq, real> weights;
  std::map<Seq, PrunedPmf> cond;
  for (size_t k = 0; k < pw.support.size(); ++k) {
    PrunedPmf c = conditional_pruned_pmf(ctx.joint_xw, pw.support[k], rcfg.delta);
    for (size_t i = 0; i < c.support.size(); ++i)
      weights[c.support[i]] += pw.prob[k] * c.prob[i];
    cond.emplace(pw.support[k], std::move(c));
  }
  OmegaCutoff cut = build_omega_cutoff(xi, weights, rcfg.epsilon, 1, ctx.h_rb, rcfg.delta);
  std::map<Seq, cmat> payload;
  for (const Seq& wn : pw.support) {
    const PrunedPmf& c = cond.at(wn);
    cmat sum = cmat::Zero(2, 2);
    for (size_t i = 0; i < c.support.size(); ++i)
      sum += c.normalizer * c.prob[i] * cut.xi.at(c.support[i]);
    payload.emplace(wn, std::move(sum));
  }
  Codebook rcb = random_binning(rcfg, sample_codebook(rcfg, pw));
  GammaFamily rgf = build_alice_subpovm(rcfg, rcb, payload, ctx.rho_a);

  for (const cmat& op : rgf.ops) {
    dvec eigs = psd_eigenvalues(op);
    CHECK(eigs.minCoeff() > -1e-9);
  }
  for (int m = 0; m < rcfg.m_count; ++m) {
    if (rgf.flagged[m]) continue;
    cmat sum = cmat::Zero(2, 2);
    for (int j : rgf.word_of[m]) sum += rgf.ops[j];
    CHECK(psd_eigenvalues(cmat::Identity(2, 2) - sum).minCoeff() > -1e-9);
  }

  BobSide rbob;
  rbob.cols = all_sequences(3, 1);
  for (const Seq& col : rbob.cols) rbob.ops.push_back(ctx.col_ops[col[0]]);
  auto full = assemble_simulated_povm(rcfg, rcb, rgf, rbob, ctx.g_tilde);
  cmat total = cmat::Zero(4, 4);
  for (const auto& [key, op] : full) {
    CHECK(psd_eigenvalues(op).minCoeff() > -1e-9);
    total += op;
  }
  CHECK(psd_eigenvalues(cmat::Identity(4, 4) - total).minCoeff() > -1e-9);
}

TEST_CASE("product measurement of the reference is complete") {
  RandomStream rs(29, {0});
  cmat joint = test::random_density(rs, 4);
  DensityOperator rho = DensityOperator::checked(joint, {2, 2});
  Povm pa = test::random_povm(rs, 2, 2);
  Povm pb = test::random_povm(rs, 2, 3);
  imat g = test::random_g(rs, 2, 3, 2);
  auto truth = product_measurement(pa.elements, pb.elements, g, 2);
  cmat total = cmat::Zero(16, 16);
  for (const auto& [key, op] : truth) total += op;
  CHECK(max_abs(total - cmat::Identity(16, 16)) < 1e-10);
}

TEST_CASE("distance vanishes on itself and is one against nothing") {
  CardsProtocol cards;
  auto truth = product_measurement(cards.pa.elements, cards.pb.elements, cards.g.g, 1);
  cmat omega = cards.rho.mat;
  CHECK(faithful_distance(omega, truth, truth) == doctest::Approx(0.0));
  CHECK(faithful_distance(omega, truth, {}) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("lifted products agree with the reference only under the state") {
  CardsProtocol cards;
  ProtocolConfig cfg;
  ProtocolContext ctx = build_context(cards.rho, cards.pa, cards.pb, cards.g,
                                      cards.ch_a, nullptr, cfg);

  auto truth1 = product_measurement(ctx.alice_ops, ctx.bob_ops, ctx.g, 1);
  auto lifted1 = product_measurement(ctx.lifted_a_ops, ctx.bob_ops, ctx.g_tilde, 1);
  real raw = 0.0;
  std::set<Seq> keys;
  for (const auto& [key, op] : truth1) keys.insert(key);
  for (const auto& [key, op] : lifted1) keys.insert(key);
  for (const Seq& key : keys) {
    cmat diff = cmat::Zero(9, 9);
    if (auto it = lifted1.find(key); it != lifted1.end()) diff += it->second;
    if (auto it = truth1.find(key); it != truth1.end()) diff -= it->second;
    raw += trace_norm(hermitized(diff, 1e-9));
  }
  CHECK(raw > 0.1);  // the operators themselves differ
  cmat sq1 = sqrt_psd(cards.rho.mat);
  CHECK(max_sandwiched_gap(sq1, lifted1, truth1) < 1e-9);

  // blocklength two, where the acceptance gate actually runs
  auto truth2 = product_measurement(ctx.alice_ops, ctx.bob_ops, ctx.g, 2);
  auto lifted2 = product_measurement(ctx.lifted_a_ops, ctx.bob_ops, ctx.g_tilde, 2);
  cmat sq2 = sqrt_psd(cards_omega(cards, 2));
  CHECK(max_sandwiched_gap(sq2, lifted2, truth2) < 1e-9);
}

TEST_CASE("default simulation stays within distance one half") {
  CardsProtocol cards;
  ProtocolConfig cfg;  // the documented defaults
  ProtocolContext ctx = build_context(cards.rho, cards.pa, cards.pb, cards.g,
                                      cards.ch_a, nullptr, cfg);
  SimReport rep = run_simulation(ctx);
  CHECK(rep.distance_computed);
  CHECK(rep.d >= 0.0);
  CHECK(rep.d < 0.5);
  CHECK(rep.identity_gap < 1e-9);
  CHECK(rep.coverage >= 0.0);
  CHECK(rep.coverage <= 1.0 + 1e-12);
  CHECK(rep.decode_error >= 0.0);
  CHECK(rep.decode_error <= 1.0);
  CHECK(rep.trials == cfg.decode_trials);

  auto parsed = nlohmann::json::parse(report_json(rep));
  CHECK(parsed["config"]["theorem"] == 2);
  CHECK(parsed["d"].get<real>() == doctest::Approx(rep.d));
  CHECK(parsed["flags"].size() == 8);
  CHECK(parsed["decode_error"].get<real>() == doctest::Approx(rep.decode_error));
}

TEST_CASE("classical decoding resolves unique typical bins") {
  CardsProtocol cards;
  ProtocolConfig cfg;
  ProtocolContext ctx = build_context(cards.rho, cards.pa, cards.pb, cards.g,
                                      cards.ch_a, nullptr, cfg);

  Codebook cb;
  cb.words = {{Seq{0}, Seq{1}}};
  cb.bins = {{0, 1}};
  CHECK(bob_decode_classical(ctx, cb, 0, 0, {2}) == 0);
  CHECK(bob_decode_classical(ctx, cb, 0, 1, {0}) == 1);

  Codebook clash;
  clash.words = {{Seq{0}, Seq{1}}};
  clash.bins = {{0, 0}};
  CHECK(bob_decode_classical(ctx, clash, 0, 0, {2}) == -1);  // ambiguous
  CHECK(bob_decode_classical(ctx, clash, 0, 1, {2}) == -1);  // empty bin

  // duplicate codewords in one bin stay decodable
  Codebook dup;
  dup.words = {{Seq{1}, Seq{1}}};
  dup.bins = {{0, 0}};
  CHECK(bob_decode_classical(ctx, dup, 0, 0, {2}) == 0);
}

TEST_CASE("sequential decoding collapses through rejections") {
  cmat id = cmat::Identity(2, 2);
  cmat e0 = cmat::Zero(2, 2);
  e0(0, 0) = 1.0;
  cmat e1 = cmat::Zero(2, 2);
  e1(1, 1) = 1.0;

  RandomStream rs(31, {TAG_DECODE, 0});
  CHECK(sequential_decode(id, {e0, e1}, e1, rs) == 1);
  CHECK(sequential_decode(id, {e1}, e1, rs) == 0);
  CHECK(sequential_decode(id, {}, e1, rs) == -1);
  CHECK(sequential_decode(id, {e0, e1}, cmat::Zero(2, 2), rs) == -1);

  cmat id3 = cmat::Identity(3, 3);
  cmat p2 = cmat::Zero(3, 3);
  p2(2, 2) = 1.0;
  cmat p0 = cmat::Zero(3, 3);
  p0(0, 0) = 1.0;
  cmat p1 = cmat::Zero(3, 3);
  p1(1, 1) = 1.0;
  CHECK(sequential_decode(id3, {p0, p1, p2}, p2, rs) == 2);

  // the gate itself can reject: orthogonal gate kills the state
  CHECK(sequential_decode(p0, {p2}, p2, rs) == -1);
}

TEST_CASE("quantum decoding accepts the ideal candidate") {
  CardsProtocol cards;
  ProtocolConfig cfg;
  cfg.scheme = Scheme::Lifted;
  ProtocolContext ctx = build_context(cards.rho, cards.pa, cards.pb, cards.g,
                                      cards.ch_a, &cards.ch_b, cfg);

  Codebook cb;
  cb.words = {{Seq{0}, Seq{1}}};
  cb.bins = {{0, 1}};

  RandomStream rs(1, {TAG_DECODE, 0});
  CHECK(bob_decode_quantum(ctx, cb, 0, 0, {2}, ctx.ideal_col[0][2], rs) == 0);
  CHECK(bob_decode_quantum(ctx, cb, 0, 1, {2}, ctx.ideal_col[1][2], rs) == 1);
  CHECK(bob_decode_quantum(ctx, cb, 0, 1, {0}, ctx.ideal_col[1][0], rs) == 1);

  Codebook empty;
  empty.words = {{Seq{0}, Seq{1}}};
  empty.bins = {{1, 1}};
  CHECK(bob_decode_quantum(ctx, empty, 0, 0, {2}, ctx.ideal_col[0][2], rs) == -1);
}

TEST_CASE("simulation reports are reproducible and relabel invariant") {
  CardsProtocol cards;
  ProtocolConfig cfg;
  cfg.seed = 7;
  ProtocolContext ctx = build_context(cards.rho, cards.pa, cards.pb, cards.g,
                                      cards.ch_a, nullptr, cfg);
  SimReport a = run_simulation(ctx);
  SimReport b = run_simulation(ctx);
  CHECK(a.d == b.d);
  CHECK(a.decode_error == b.decode_error);
  CHECK(a.flags == b.flags);
  CHECK(a.coverage == b.coverage);

  // swapping the output labels must not move the distance
  imat swapped = cards.g.g;
  for (int u = 0; u < 3; ++u)
    for (int v = 0; v < 3; ++v) swapped(u, v) = 1 - swapped(u, v);
  FunctionTable g2 = FunctionTable::checked(swapped);
  ProtocolContext ctx2 = build_context(cards.rho, cards.pa, cards.pb, g2,
                                       cards.ch_a, nullptr, cfg);
  SimReport c = run_simulation(ctx2);
  CHECK(c.d == doctest::Approx(a.d).epsilon(1e-9));
  CHECK(c.decode_error == a.decode_error);
}

TEST_CASE("lifted simulation runs end to end") {
  CardsProtocol cards;
  ProtocolConfig cfg;
  cfg.scheme = Scheme::Lifted;
  cfg.m_count = 4;
  cfg.decode_trials = 64;
  ProtocolContext ctx = build_context(cards.rho, cards.pa, cards.pb, cards.g,
                                      cards.ch_a, &cards.ch_b, cfg);
  SimReport rep = run_simulation(ctx);
  CHECK(rep.distance_computed);
  CHECK(rep.d >= 0.0);
  CHECK(rep.d <= 2.0);
  CHECK(rep.identity_gap < 1e-9);
  CHECK(static_cast<int>(rep.flags.size()) == 4);
  CHECK(rep.decode_error >= 0.0);
  CHECK(rep.decode_error <= 1.0);
  CHECK(rep.trials == 64);

  // the lifted scheme requires the receiver channel
  CHECK_THROWS_AS(build_context(cards.rho, cards.pa, cards.pb, cards.g,
                                cards.ch_a, nullptr, cfg),
                  ValidationError);
}

}  // TEST_SUITE
