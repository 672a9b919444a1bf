#include "dqms/rate_region.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dqms/shannon.hpp"

namespace dqms {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

struct PurifiedInstance {
  cmat phi;  // density of the purified state
  std::vector<index_t> dims;  // {R, A, B}
};

PurifiedInstance purified(const DensityOperator& rho) {
  require(rho.dims.size() == 2, "rate region: state must be bipartite");
  auto pur = purify(rho.mat);
  PurifiedInstance out;
  out.phi = pur.state * pur.state.adjoint();
  out.dims = {pur.dim_r, rho.dims[0], rho.dims[1]};
  return out;
}

cmat embed_alice(const cmat& op, const PurifiedInstance& inst) {
  cmat id_r = cmat::Identity(inst.dims[0], inst.dims[0]);
  cmat id_b = cmat::Identity(inst.dims[2], inst.dims[2]);
  return kron(kron(id_r, op), id_b);
}

cmat embed_bob(const cmat& op, const PurifiedInstance& inst) {
  cmat id_ra = cmat::Identity(inst.dims[0] * inst.dims[1], inst.dims[0] * inst.dims[1]);
  return kron(id_ra, op);
}

}  // namespace

ConditionalChannel ConditionalChannel::checked(IndependentSetFamily family, dmat p) {
  require(p.rows() >= 1, "ConditionalChannel: empty alphabet");
  require(p.cols() == static_cast<index_t>(family.sets.size()),
          "ConditionalChannel: column count does not match the family");
  for (index_t x = 0; x < p.rows(); ++x) {
    double row = 0.0;
    for (index_t w = 0; w < p.cols(); ++w) {
      if (p(x, w) < -1e-12) throw ValidationError("ConditionalChannel: negative entry");
      if (p(x, w) < 0.0) p(x, w) = 0.0;
      row += p(x, w);
      if (p(x, w) > kProbEps) {
        const auto& set = family.sets[w];
        bool member = std::binary_search(set.begin(), set.end(), static_cast<int>(x));
        if (!member) {
          std::ostringstream os;
          os << "ConditionalChannel: p(w=" << w << "|x=" << x
             << ") > 0 but the set does not contain x";
          throw ValidationError(os.str());
        }
      }
    }
    if (std::abs(row - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "ConditionalChannel: row " << x << " sums to " << row;
      throw ValidationError(os.str());
    }
  }
  return {std::move(family), std::move(p)};
}

ConditionalChannel identity_channel(int alphabet) {
  return ConditionalChannel::checked(singleton_family(alphabet),
                                     dmat::Identity(alphabet, alphabet));
}

ConditionalChannel uniform_channel(const IndependentSetFamily& family, int alphabet) {
  dmat p = dmat::Zero(alphabet, family.sets.size());
  for (int x = 0; x < alphabet; ++x) {
    int hits = 0;
    for (std::size_t w = 0; w < family.sets.size(); ++w)
      if (std::binary_search(family.sets[w].begin(), family.sets[w].end(), x)) ++hits;
    require(hits > 0, "uniform_channel: family does not cover the alphabet");
    for (std::size_t w = 0; w < family.sets.size(); ++w)
      if (std::binary_search(family.sets[w].begin(), family.sets[w].end(), x))
        p(x, w) = 1.0 / hits;
  }
  return ConditionalChannel::checked(family, std::move(p));
}

Povm lift_povm(const Povm& povm, const ConditionalChannel& channel) {
  require(channel.alphabet() == static_cast<int>(povm.elements.size()),
          "lift_povm: channel alphabet does not match the POVM");
  std::vector<cmat> lifted;
  for (int w = 0; w < channel.outputs(); ++w) {
    cmat e = cmat::Zero(povm.dim, povm.dim);
    for (int u : channel.family.sets[w]) e += channel.p(u, w) * povm.elements[u];
    lifted.push_back(std::move(e));
  }
  return Povm::checked(std::move(lifted));
}

CqEnsemble measured_single_ensemble(const DensityOperator& rho, const Povm& alice) {
  require(alice.dim == rho.dims[0], "measured_single_ensemble: POVM does not act on A");
  PurifiedInstance inst = purified(rho);
  CqEnsemble e;
  for (std::size_t u = 0; u < alice.elements.size(); ++u) {
    cmat s = embed_alice(sqrt_psd(alice.elements[u]), inst);
    cmat op = partial_trace(s * inst.phi * s, inst.dims, {0, 2});
    double w = op.trace().real();
    if (w <= kProbEps) continue;
    e.terms.push_back({static_cast<int>(u), -1, w, hermitized(op, 1e-11) / w});
  }
  return e;
}

CqEnsemble measured_pair_ensemble(const DensityOperator& rho, const Povm& alice, const Povm& bob,
                                  bool keep_reference) {
  require(alice.dim == rho.dims[0] && bob.dim == rho.dims[1],
          "measured_pair_ensemble: POVM dimensions do not match the state");
  PurifiedInstance inst = purified(rho);
  std::vector<cmat> roots_a, roots_b;
  for (const auto& el : alice.elements) roots_a.push_back(sqrt_psd(el));
  for (const auto& el : bob.elements) roots_b.push_back(sqrt_psd(el));
  std::vector<int> keep = keep_reference ? std::vector<int>{0, 2} : std::vector<int>{2};

  CqEnsemble e;
  for (std::size_t a = 0; a < roots_a.size(); ++a) {
    cmat sa = embed_alice(roots_a[a], inst);
    cmat half = sa * inst.phi * sa;
    for (std::size_t b = 0; b < roots_b.size(); ++b) {
      cmat sb = embed_bob(roots_b[b], inst);
      cmat op = partial_trace(sb * half * sb, inst.dims, keep);
      double w = op.trace().real();
      if (w <= kProbEps) continue;
      e.terms.push_back(
          {static_cast<int>(a), static_cast<int>(b), w, hermitized(op, 1e-11) / w});
    }
  }
  return e;
}

dmat outcome_joint(const DensityOperator& rho, const Povm& alice, const Povm& bob) {
  require(alice.dim == rho.dims[0] && bob.dim == rho.dims[1],
          "outcome_joint: POVM dimensions do not match the state");
  dmat p(alice.elements.size(), bob.elements.size());
  for (std::size_t a = 0; a < alice.elements.size(); ++a)
    for (std::size_t b = 0; b < bob.elements.size(); ++b)
      p(a, b) = std::max(
          0.0, (kron(alice.elements[a], bob.elements[b]) * rho.mat).trace().real());
  return p;
}

RatePoint rates_baseline(const DensityOperator& rho, const Povm& alice, const Povm& bob) {
  JointPmf pmf = induce_joint_pmf(rho, alice, bob);
  double i_u_rb = cq_mutual_information(measured_single_ensemble(rho, alice));
  RatePoint pt;
  pt.R = i_u_rb - mutual_information(pmf.p);
  pt.RS = conditional_entropy(pmf.p);
  pt.label = "baseline";
  return pt;
}

RatePoint rates_lifted(const DensityOperator& rho, const Povm& alice, const Povm& bob,
                       const ConditionalChannel& ch_a, const ConditionalChannel& ch_b) {
  Povm lifted_a = lift_povm(alice, ch_a);
  Povm lifted_b = lift_povm(bob, ch_b);
  double i_wa_rb = cq_mutual_information(measured_single_ensemble(rho, lifted_a));
  double i_wa_b_wb =
      cq_conditional_mutual_information(measured_pair_ensemble(rho, lifted_a, lifted_b, false));
  dmat joint = outcome_joint(rho, lifted_a, lifted_b);
  RatePoint pt;
  pt.R = i_wa_rb - i_wa_b_wb - mutual_information(joint);
  pt.RS = conditional_entropy(joint) - i_wa_b_wb;
  pt.label = "lifted";
  return pt;
}

RatePoint rates_covering(const DensityOperator& rho, const Povm& alice, const Povm& bob,
                         const ConditionalChannel& wstar, bool optimizer_certified) {
  JointPmf pmf = induce_joint_pmf(rho, alice, bob);
  require(wstar.alphabet() == pmf.nu(), "rates_covering: channel alphabet mismatch");
  double i_u_rb = cq_mutual_information(measured_single_ensemble(rho, alice));

  // p(w,v) = sum_u q(w|u) p(u,v)
  dmat joint_wv = dmat::Zero(wstar.outputs(), pmf.nv());
  for (int w = 0; w < wstar.outputs(); ++w)
    for (int v = 0; v < pmf.nv(); ++v)
      for (int u = 0; u < pmf.nu(); ++u) joint_wv(w, v) += wstar.p(u, w) * pmf.p(u, v);

  RatePoint pt;
  pt.R = i_u_rb - mutual_information(joint_wv);
  pt.RS = classical_rate(pmf, wstar);
  pt.label = optimizer_certified ? "covering" : "covering-candidate";
  return pt;
}

double classical_rate(const JointPmf& pmf, const ConditionalChannel& channel) {
  require(channel.alphabet() == pmf.nu(), "classical_rate: channel alphabet mismatch");
  dvec pu = pmf.p.rowwise().sum();
  dmat joint_wv = dmat::Zero(channel.outputs(), pmf.nv());
  dmat joint_wu = dmat::Zero(channel.outputs(), pmf.nu());
  for (int w = 0; w < channel.outputs(); ++w)
    for (int u = 0; u < pmf.nu(); ++u) {
      joint_wu(w, u) = channel.p(u, w) * pu(u);
      for (int v = 0; v < pmf.nv(); ++v) joint_wv(w, v) += channel.p(u, w) * pmf.p(u, v);
    }
  // Markov chain W-U-V: H(W|U,V) = H(W|U)
  return conditional_entropy(joint_wv) - conditional_entropy(joint_wu);
}

bool RateRegion::contains(double r, double s, double tol) const {
  if (corners.empty()) return false;
  if (s < -tol) return false;
  if (r < corners.front().first - tol) return false;
  for (std::size_t i = 0; i + 1 < corners.size(); ++i) {
    const auto& [ar, as] = corners[i];
    const auto& [br, bs] = corners[i + 1];
    double cross = (br - ar) * (s - as) - (bs - as) * (r - ar);
    if (cross < -tol) return false;
  }
  return true;
}

RateRegion combined_region(const std::vector<RatePoint>& points) {
  require(!points.empty(), "combined_region: no points");
  std::vector<std::pair<double, double>> cand;
  for (const auto& pt : points) {
    double r1 = std::max(pt.R, 0.0);
    double r2 = pt.RS;
    cand.push_back({r1, std::max(r2 - r1, 0.0)});
    cand.push_back({std::max(r1, r2), 0.0});
  }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

  // drop dominated corners
  std::vector<std::pair<double, double>> frontier;
  for (const auto& c : cand) {
    bool dominated = false;
    for (const auto& d : cand) {
      if (d == c) continue;
      if (d.first <= c.first + 1e-15 && d.second <= c.second + 1e-15 &&
          (d.first < c.first - 1e-15 || d.second < c.second - 1e-15))
        dominated = true;
    }
    if (!dominated) frontier.push_back(c);
  }
  std::sort(frontier.begin(), frontier.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // convexify: a corner above the segment of its neighbours is time-shared away
  std::vector<std::pair<double, double>> hull;
  for (const auto& c : frontier) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull[hull.size() - 1];
      double cross = (c.first - a.first) * (b.second - a.second) -
                     (c.second - a.second) * (b.first - a.first);
      if (cross >= -1e-12)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(c);
  }

  RateRegion region;
  region.points = points;
  region.corners = std::move(hull);
  return region;
}

std::string region_csv(const RateRegion& region) {
  std::string out = "label,R,RS\n";
  char buf[128];
  for (const auto& pt : region.points) {
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g\n", pt.label.c_str(), pt.R, pt.RS);
    out += buf;
  }
  for (const auto& [r, s] : region.corners) {
    std::snprintf(buf, sizeof buf, "corner,%.9g,%.9g\n", r, s);
    out += buf;
  }
  return out;
}

}  // namespace dqms
