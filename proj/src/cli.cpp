#include "dqms/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "dqms/graph_entropy.hpp"
#include "dqms/problem_io.hpp"
#include "dqms/protocol.hpp"
#include "dqms/rate_region.hpp"

namespace dqms {

namespace {

std::string fmt9(real x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

// one-based display of an index-set family
std::string family_str(const IndependentSetFamily& fam) {
  std::string out = "{";
  for (size_t s = 0; s < fam.sets.size(); ++s) {
    if (s) out += ",";
    out += "{";
    for (size_t i = 0; i < fam.sets[s].size(); ++i) {
      if (i) out += ",";
      out += std::to_string(fam.sets[s][i] + 1);
    }
    out += "}";
  }
  return out + "}";
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp);
    out << content;
    if (!out.flush()) throw ValidationError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ValidationError("cannot move " + tmp + " to " + path);
}

struct Families {
  IndependentSetFamily a;
  IndependentSetFamily b;
};

Families resolve_families(const ProblemFile& pf, const JointPmf& pmf) {
  const int nu = static_cast<int>(pf.povm_a.elements.size());
  const int nv = static_cast<int>(pf.povm_b.elements.size());
  Families fams;
  if (pf.family_a)
    fams.a = make_family(*pf.family_a, nu, pmf, pf.table, Side::A);
  else
    fams.a = maximal_independent_sets(pmf, pf.table, Side::A);
  if (pf.family_b)
    fams.b = make_family(*pf.family_b, nv, pmf, pf.table, Side::B, &fams.a);
  else
    fams.b = maximal_independent_sets(pmf, pf.table, Side::B, &fams.a);
  return fams;
}

// precedence: --channel-X file, then the problem file's inline matrix, then
// uniform over the containing sets
ConditionalChannel resolve_channel(const std::optional<dmat>& inline_p,
                                   const std::string& flag_path,
                                   const IndependentSetFamily& fam, int alphabet,
                                   const char* name) {
  dmat p;
  if (!flag_path.empty())
    p = load_channel_matrix(flag_path);
  else if (inline_p)
    p = *inline_p;
  else
    return uniform_channel(fam, alphabet);
  try {
    return ConditionalChannel::checked(fam, p);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  }
}

int cmd_graph(const ProblemFile& pf, std::ostream& out) {
  JointPmf pmf = induce_joint_pmf(pf.rho, pf.povm_a, pf.povm_b);
  Families fams = resolve_families(pf, pmf);
  out << "G_A = " << family_str(fams.a) << "\n";
  out << "G_B = " << family_str(fams.b) << "\n";
  imat tilde;
  try {
    tilde = build_tilde_g(fams.a, fams.b, pmf, pf.table);
  } catch (const ValidationError& e) {
    out << "g~ consistent: no\n";
    out << "error: " << e.what() << "\n";
    return 2;
  }
  out << "g~ rows w_A, cols w_B (- where the pair never occurs):\n";
  for (index_t r = 0; r < tilde.rows(); ++r) {
    for (index_t c = 0; c < tilde.cols(); ++c) {
      if (c) out << " ";
      if (tilde(r, c) < 0)
        out << "-";
      else
        out << tilde(r, c);
    }
    out << "\n";
  }
  out << "g~ consistent: yes\n";
  return 0;
}

int cmd_rates(const ProblemFile& pf, bool optimize, const std::string& ch_a_path,
              const std::string& ch_b_path, const std::string& out_path, std::ostream& out) {
  JointPmf pmf = induce_joint_pmf(pf.rho, pf.povm_a, pf.povm_b);
  Families fams = resolve_families(pf, pmf);
  const int nu = static_cast<int>(pf.povm_a.elements.size());
  const int nv = static_cast<int>(pf.povm_b.elements.size());
  ConditionalChannel ch_a = resolve_channel(pf.channel_a, ch_a_path, fams.a, nu, "channel_a");
  ConditionalChannel ch_b = resolve_channel(pf.channel_b, ch_b_path, fams.b, nv, "channel_b");

  bool certified = false;
  if (optimize) {
    GraphEntropyResult res = conditional_graph_entropy(pmf, fams.a);
    ch_a = res.channel;
    certified = true;
    out << "optimized classical rate = " << fmt9(res.value) << "\n";
  }

  std::vector<RatePoint> points;
  points.push_back(rates_baseline(pf.rho, pf.povm_a, pf.povm_b));
  points.push_back(rates_lifted(pf.rho, pf.povm_a, pf.povm_b, ch_a, ch_b));
  points.push_back(rates_covering(pf.rho, pf.povm_a, pf.povm_b, ch_a, certified));

  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %-14s %-14s\n", "label", "R", "R+S");
  out << buf;
  for (const RatePoint& pt : points) {
    std::snprintf(buf, sizeof buf, "%-20s %-14.9g %-14.9g\n", pt.label.c_str(), pt.R, pt.RS);
    out << buf;
  }

  RateRegion table{points, {}};
  atomic_write(out_path, region_csv(table));
  out << "wrote " << out_path << "\n";
  return 0;
}

nlohmann::json report_as_json(const SimReport& rep) {
  return nlohmann::json::parse(report_json(rep));
}

int cmd_simulate(const ProblemFile& pf, ProtocolConfig cfg, int seeds,
                 const std::string& ch_a_path, const std::string& ch_b_path,
                 std::ostream& out) {
  JointPmf pmf = induce_joint_pmf(pf.rho, pf.povm_a, pf.povm_b);
  Families fams = resolve_families(pf, pmf);
  const int nu = static_cast<int>(pf.povm_a.elements.size());
  const int nv = static_cast<int>(pf.povm_b.elements.size());
  ConditionalChannel ch_a = resolve_channel(pf.channel_a, ch_a_path, fams.a, nu, "channel_a");
  ConditionalChannel ch_b = resolve_channel(pf.channel_b, ch_b_path, fams.b, nv, "channel_b");
  const ConditionalChannel* bptr = cfg.scheme == Scheme::Lifted ? &ch_b : nullptr;

  if (seeds == 1) {
    ProtocolContext ctx = build_context(pf.rho, pf.povm_a, pf.povm_b, pf.table, ch_a, bptr, cfg);
    out << report_json(run_simulation(ctx)) << "\n";
    return 0;
  }

  nlohmann::json runs = nlohmann::json::array();
  real d_sum = 0.0, d_max = 0.0, err_sum = 0.0, defect_max = 0.0;
  int d_count = 0, err_count = 0, flagged = 0, flags_total = 0;
  for (int k = 0; k < seeds; ++k) {
    ProtocolConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(k);
    ProtocolContext ctx =
        build_context(pf.rho, pf.povm_a, pf.povm_b, pf.table, ch_a, bptr, run_cfg);
    SimReport rep = run_simulation(ctx);
    runs.push_back(report_as_json(rep));
    if (rep.distance_computed) {
      d_sum += rep.d;
      d_max = std::max(d_max, rep.d);
      ++d_count;
    }
    if (rep.trials > 0) {
      err_sum += rep.decode_error;
      ++err_count;
    }
    defect_max = std::max(defect_max, rep.defect);
    for (bool f : rep.flags) {
      flagged += f ? 1 : 0;
      ++flags_total;
    }
  }
  nlohmann::json summary;
  summary["seeds"] = seeds;
  summary["d_mean"] = d_count ? nlohmann::json(d_sum / d_count) : nlohmann::json(nullptr);
  summary["d_max"] = d_count ? nlohmann::json(d_max) : nlohmann::json(nullptr);
  summary["decode_error_mean"] =
      err_count ? nlohmann::json(err_sum / err_count) : nlohmann::json(nullptr);
  summary["flagged_fraction"] =
      flags_total ? static_cast<real>(flagged) / flags_total : 0.0;
  summary["defect_max"] = defect_max;
  nlohmann::json doc;
  doc["runs"] = std::move(runs);
  doc["summary"] = std::move(summary);
  out << doc.dump(2) << "\n";
  return 0;
}

std::vector<std::vector<real>> simplex_grid(int parts, int grid) {
  std::vector<std::vector<real>> out;
  std::vector<int> c(parts, 0);
  std::function<void(int, int)> rec = [&](int idx, int left) {
    if (idx + 1 == parts) {
      c[idx] = left;
      std::vector<real> row(parts);
      for (int i = 0; i < parts; ++i) row[i] = static_cast<real>(c[i]) / grid;
      out.push_back(std::move(row));
      return;
    }
    for (int k = 0; k <= left; ++k) {
      c[idx] = k;
      rec(idx + 1, left - k);
    }
  };
  rec(0, grid);
  return out;
}

int cmd_region(const ProblemFile& pf, int grid, const std::string& ch_b_path,
               const std::string& out_path, std::ostream& out) {
  if (grid < 1) throw ValidationError("grid must be at least 1");
  JointPmf pmf = induce_joint_pmf(pf.rho, pf.povm_a, pf.povm_b);
  Families fams = resolve_families(pf, pmf);
  const int nu = static_cast<int>(pf.povm_a.elements.size());
  const int nv = static_cast<int>(pf.povm_b.elements.size());

  int free = free_parameter_count(pmf, fams.a);
  if (free > 3)
    throw InfeasibleError("the transmitter family leaves " + std::to_string(free) +
                          " free channel parameters; the sweep supports at most 3");

  std::vector<std::vector<int>> owner(nu);
  for (size_t s = 0; s < fams.a.sets.size(); ++s)
    for (int u : fams.a.sets[s]) owner[u].push_back(static_cast<int>(s));

  real combos = 1.0;
  std::vector<std::vector<std::vector<real>>> row_choices(nu);
  for (int u = 0; u < nu; ++u) {
    const int k = static_cast<int>(owner[u].size());
    if (k == 0) throw ValidationError("family_a does not cover symbol " + std::to_string(u + 1));
    row_choices[u] = k == 1 ? std::vector<std::vector<real>>{{1.0}} : simplex_grid(k, grid);
    combos *= static_cast<real>(row_choices[u].size());
    if (combos > 200000.0)
      throw InfeasibleError("grid " + std::to_string(grid) +
                            " spans too many channels; coarsen the grid");
  }

  ConditionalChannel ch_b = resolve_channel(pf.channel_b, ch_b_path, fams.b, nv, "channel_b");

  std::vector<RatePoint> points;
  points.push_back(rates_baseline(pf.rho, pf.povm_a, pf.povm_b));
  std::vector<size_t> pick(nu, 0);
  while (true) {
    dmat p = dmat::Zero(nu, static_cast<index_t>(fams.a.sets.size()));
    for (int u = 0; u < nu; ++u)
      for (size_t i = 0; i < owner[u].size(); ++i)
        p(u, owner[u][i]) = row_choices[u][pick[u]][i];
    ConditionalChannel ch = ConditionalChannel::checked(fams.a, p);
    points.push_back(rates_lifted(pf.rho, pf.povm_a, pf.povm_b, ch, ch_b));
    points.push_back(rates_covering(pf.rho, pf.povm_a, pf.povm_b, ch));

    int u = nu - 1;
    while (u >= 0 && ++pick[u] == row_choices[u].size()) pick[u--] = 0;
    if (u < 0) break;
  }

  RateRegion region = combined_region(points);
  atomic_write(out_path, region_csv(region));
  out << "wrote " << out_path << " (" << region.points.size() << " points, "
      << region.corners.size() << " corners)\n";
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out) {
  CLI::App app{"rate regions and finite-blocklength simulation of distributed measurements"};
  app.name("dqms");
  app.require_subcommand(1);

  std::string graph_file;
  CLI::App* graph = app.add_subcommand("graph", "print the independent-set families and g~");
  graph->add_option("file", graph_file, "problem JSON file")->required();

  std::string rates_file, rates_cha, rates_chb, rates_out = "rates.csv";
  bool optimize = false;
  CLI::App* rates = app.add_subcommand("rates", "evaluate the achievable rate points");
  rates->add_option("file", rates_file, "problem JSON file")->required();
  rates->add_flag("--optimize", optimize, "minimize the classical rate over channels first");
  rates->add_option("--channel-a", rates_cha, "transmitter channel JSON file");
  rates->add_option("--channel-b", rates_chb, "receiver channel JSON file");
  rates->add_option("--out", rates_out, "CSV output path");

  std::string sim_file, sim_cha, sim_chb;
  ProtocolConfig cfg;
  int theorem = 2, seeds = 1;
  bool no_distance = false;
  CLI::App* sim = app.add_subcommand("simulate", "run the finite-blocklength protocol");
  sim->add_option("file", sim_file, "problem JSON file")->required();
  sim->add_option("--n", cfg.n, "blocklength");
  sim->add_option("--delta", cfg.delta, "typicality width");
  sim->add_option("--epsilon", cfg.epsilon, "cutoff slack");
  sim->add_option("--s", cfg.s, "codewords per common-randomness value");
  sim->add_option("--t", cfg.t, "bins");
  sim->add_option("--m", cfg.m_count, "common-randomness values");
  sim->add_option("--seed", cfg.seed, "base RNG seed");
  sim->add_option("--theorem", theorem, "scheme: 1 lifted, 2 covering");
  sim->add_option("--seeds", seeds, "number of consecutive seeds to run");
  sim->add_option("--trials", cfg.decode_trials, "decode Monte Carlo trials");
  sim->add_flag("--no-distance", no_distance, "skip the exact distance computation");
  sim->add_option("--channel-a", sim_cha, "transmitter channel JSON file");
  sim->add_option("--channel-b", sim_chb, "receiver channel JSON file");

  std::string region_file, region_chb, region_out = "region.csv";
  int grid = 50;
  CLI::App* region = app.add_subcommand("region", "sweep channels and emit the rate region");
  region->add_option("file", region_file, "problem JSON file")->required();
  region->add_option("--grid", grid, "sweep resolution");
  region->add_option("--channel-b", region_chb, "receiver channel JSON file");
  region->add_option("--out", region_out, "CSV output path");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, out);
    return 0;
  } catch (const CLI::ParseError& e) {
    out << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(graph)) return cmd_graph(load_problem(graph_file), out);
    if (app.got_subcommand(rates))
      return cmd_rates(load_problem(rates_file), optimize, rates_cha, rates_chb, rates_out, out);
    if (app.got_subcommand(sim)) {
      if (theorem != 1 && theorem != 2) throw ValidationError("theorem must be 1 or 2");
      if (seeds < 1) throw ValidationError("seeds must be at least 1");
      cfg.scheme = theorem == 1 ? Scheme::Lifted : Scheme::Covering;
      cfg.compute_distance = !no_distance;
      validate_config(cfg);
      return cmd_simulate(load_problem(sim_file), cfg, seeds, sim_cha, sim_chb, out);
    }
    if (app.got_subcommand(region))
      return cmd_region(load_problem(region_file), grid, region_chb, region_out, out);
  } catch (const InfeasibleError& e) {
    out << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    out << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace dqms
