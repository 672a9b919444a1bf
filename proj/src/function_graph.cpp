#include "dqms/function_graph.hpp"

#include <algorithm>
#include <cstdint>
#include <sstream>

#include "dqms/shannon.hpp"

namespace dqms {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

int popcount(std::uint64_t x) { return static_cast<int>(__builtin_popcountll(x)); }

// maximal cliques of the relation graph via Bron-Kerbosch with pivoting
void bron_kerbosch(std::uint64_t r, std::uint64_t p, std::uint64_t x,
                   const std::vector<std::uint64_t>& adj,
                   std::vector<std::vector<int>>& out) {
  if (p == 0 && x == 0) {
    std::vector<int> clique;
    for (int i = 0; i < static_cast<int>(adj.size()); ++i)
      if (r & (1ULL << i)) clique.push_back(i);
    out.push_back(std::move(clique));
    return;
  }
  // pivot: vertex of P|X with the most neighbours in P
  int pivot = -1, best = -1;
  std::uint64_t px = p | x;
  for (int i = 0; i < static_cast<int>(adj.size()); ++i) {
    if (!(px & (1ULL << i))) continue;
    int cnt = popcount(p & adj[i]);
    if (cnt > best) {
      best = cnt;
      pivot = i;
    }
  }
  std::uint64_t candidates = p & ~adj[pivot];
  for (int v = 0; v < static_cast<int>(adj.size()); ++v) {
    std::uint64_t bit = 1ULL << v;
    if (!(candidates & bit)) continue;
    bron_kerbosch(r | bit, p & adj[v], x & adj[v], adj, out);
    p &= ~bit;
    x |= bit;
  }
}

std::vector<std::vector<int>> maximal_cliques(const std::vector<std::uint64_t>& adj) {
  std::vector<std::vector<int>> out;
  int n = static_cast<int>(adj.size());
  std::uint64_t all = n == 64 ? ~0ULL : (1ULL << n) - 1;
  bron_kerbosch(0, all, 0, adj, out);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

JointPmf JointPmf::checked(dmat p) {
  require(p.rows() >= 1 && p.cols() >= 1, "JointPmf: empty table");
  for (index_t u = 0; u < p.rows(); ++u)
    for (index_t v = 0; v < p.cols(); ++v) {
      if (p(u, v) < -1e-12) {
        std::ostringstream os;
        os << "JointPmf: negative entry " << p(u, v) << " at (" << u << "," << v << ")";
        throw ValidationError(os.str());
      }
      if (p(u, v) < 0.0) p(u, v) = 0.0;
    }
  double total = p.sum();
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "JointPmf: entries sum to " << total;
    throw ValidationError(os.str());
  }
  return {std::move(p)};
}

JointPmf induce_joint_pmf(const DensityOperator& rho, const Povm& povm_a, const Povm& povm_b) {
  require(rho.dims.size() == 2, "induce_joint_pmf: state must be bipartite");
  require(povm_a.dim == rho.dims[0] && povm_b.dim == rho.dims[1],
          "induce_joint_pmf: POVM dimensions do not match the state");
  for (const Povm* p : {&povm_a, &povm_b}) {
    cmat sum = cmat::Zero(p->dim, p->dim);
    for (const auto& e : p->elements) sum += e;
    require((sum - cmat::Identity(p->dim, p->dim)).cwiseAbs().maxCoeff() <= 1e-9,
            "induce_joint_pmf: POVM is not complete");
  }
  dmat p(povm_a.elements.size(), povm_b.elements.size());
  for (std::size_t u = 0; u < povm_a.elements.size(); ++u)
    for (std::size_t v = 0; v < povm_b.elements.size(); ++v)
      p(u, v) = (kron(povm_a.elements[u], povm_b.elements[v]) * rho.mat).trace().real();
  return JointPmf::checked(std::move(p));
}

FunctionTable FunctionTable::checked(imat g, int nz) {
  require(g.rows() >= 1 && g.cols() >= 1, "FunctionTable: empty table");
  if (nz < 0) nz = g.maxCoeff() + 1;
  for (index_t u = 0; u < g.rows(); ++u)
    for (index_t v = 0; v < g.cols(); ++v)
      require(g(u, v) >= 0 && g(u, v) < nz, "FunctionTable: label out of range");
  FunctionTable t;
  t.g = std::move(g);
  t.nz = nz;
  return t;
}

bool alice_independent(int u, int u2, const JointPmf& pmf, const FunctionTable& g) {
  for (int v = 0; v < pmf.nv(); ++v) {
    if (pmf.p(u, v) > kProbEps && pmf.p(u2, v) > kProbEps && g.g(u, v) != g.g(u2, v))
      return false;
  }
  return true;
}

bool bob_independent(int v, int v2, const IndependentSetFamily& ga, const JointPmf& pmf,
                     const FunctionTable& g) {
  for (const auto& w : ga.sets)
    for (int u : w)
      for (int u2 : w) {
        if (pmf.p(u, v) > kProbEps && pmf.p(u2, v2) > kProbEps && g.g(u, v) != g.g(u2, v2))
          return false;
      }
  return true;
}

bool bob_set_independent(const std::vector<int>& set, const IndependentSetFamily& ga,
                         const JointPmf& pmf, const FunctionTable& g) {
  for (int v : set)
    for (int v2 : set)
      if (!bob_independent(v, v2, ga, pmf, g)) return false;
  return true;
}

IndependentSetFamily maximal_independent_sets(const JointPmf& pmf, const FunctionTable& g,
                                              Side side, const IndependentSetFamily* ga) {
  int n = side == Side::A ? pmf.nu() : pmf.nv();
  require(n <= 63, "maximal_independent_sets: alphabet too large");
  require(side == Side::A || ga != nullptr,
          "maximal_independent_sets: side B requires the A-side family");

  std::vector<std::uint64_t> adj(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      bool indep = side == Side::A ? alice_independent(i, j, pmf, g)
                                   : bob_independent(i, j, *ga, pmf, g) &&
                                         bob_independent(j, i, *ga, pmf, g);
      if (indep) {
        adj[i] |= 1ULL << j;
        adj[j] |= 1ULL << i;
      }
    }

  IndependentSetFamily fam;
  fam.sets = maximal_cliques(adj);
  if (side == Side::B) {
    // pairwise independence is enough in principle, but hold the returned
    // sets to the full set-level predicate anyway
    std::vector<std::vector<int>> kept;
    for (auto& s : fam.sets)
      if (bob_set_independent(s, *ga, pmf, g)) kept.push_back(std::move(s));
    fam.sets = std::move(kept);
  }
  fam.spanning = true;
  fam.maximal = true;

  std::vector<char> covered(n, 0);
  for (const auto& s : fam.sets)
    for (int x : s) covered[x] = 1;
  for (char c : covered) fam.spanning = fam.spanning && c;
  return fam;
}

IndependentSetFamily make_family(std::vector<std::vector<int>> sets, int alphabet,
                                 const JointPmf& pmf, const FunctionTable& g, Side side,
                                 const IndependentSetFamily* ga) {
  require(!sets.empty(), "make_family: no sets");
  require(side == Side::A || ga != nullptr, "make_family: side B requires the A-side family");
  std::vector<char> covered(alphabet, 0);
  for (auto& s : sets) {
    require(!s.empty(), "make_family: empty set");
    std::sort(s.begin(), s.end());
    require(std::unique(s.begin(), s.end()) == s.end(), "make_family: duplicate symbol in set");
    for (int x : s) {
      require(x >= 0 && x < alphabet, "make_family: symbol out of range");
      covered[x] = 1;
    }
    if (side == Side::A) {
      for (int u : s)
        for (int u2 : s)
          require(alice_independent(u, u2, pmf, g), "make_family: set is not independent");
    } else {
      require(bob_set_independent(s, *ga, pmf, g), "make_family: set is not independent");
    }
  }
  std::sort(sets.begin(), sets.end());
  require(std::unique(sets.begin(), sets.end()) == sets.end(), "make_family: duplicate set");

  IndependentSetFamily fam;
  fam.sets = std::move(sets);
  fam.spanning = true;
  for (char c : covered) fam.spanning = fam.spanning && c;
  fam.maximal = false;
  return fam;
}

IndependentSetFamily singleton_family(int alphabet) {
  IndependentSetFamily fam;
  for (int i = 0; i < alphabet; ++i) fam.sets.push_back({i});
  fam.spanning = true;
  fam.maximal = false;
  return fam;
}

imat build_tilde_g(const IndependentSetFamily& ga, const IndependentSetFamily& gb,
                   const JointPmf& pmf, const FunctionTable& g) {
  require(ga.spanning && gb.spanning, "build_tilde_g: families must span their alphabets");
  imat out(ga.sets.size(), gb.sets.size());
  for (std::size_t a = 0; a < ga.sets.size(); ++a)
    for (std::size_t b = 0; b < gb.sets.size(); ++b) {
      int value = -1;
      for (int u : ga.sets[a])
        for (int v : gb.sets[b]) {
          if (pmf.p(u, v) <= kProbEps) continue;
          if (value == -1) {
            value = g.g(u, v);
          } else if (value != g.g(u, v)) {
            std::ostringstream os;
            os << "build_tilde_g: cell (" << a << "," << b
               << ") sees conflicting values " << value << " and " << g.g(u, v)
               << "; the B-side family is not independent";
            throw ValidationError(os.str());
          }
        }
      out(a, b) = value;
    }
  return out;
}

}  // namespace dqms
