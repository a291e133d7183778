// gwps — analytic and Monte Carlo toolkit for parametric Galton-Watson
// processes driven by a power-series offspring law.
//
// Reports are deterministic: identical invocations (including --seed)
// produce byte-identical CSV/JSON at any --workers count.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gwps/asym.hpp"
#include "gwps/family.hpp"
#include "gwps/gw.hpp"
#include "gwps/io.hpp"
#include "gwps/lagrange.hpp"
#include "gwps/trees.hpp"
#include "gwps/version.hpp"

namespace {

using nlohmann::json;

struct SpecArgs {
  std::string preset;       // exp | planetree (alias geometric)
  std::string coeffs_file;  // explicit coefficient list, one value per token
  std::string radius = "";  // required with --coeffs; "inf" allowed
  int order = gwps::kDefaultOrder;
};

struct OutputArgs {
  std::string format = "csv";
  std::string out_path;
};

void add_spec_flags(CLI::App* cmd, SpecArgs& args) {
  cmd->add_option("--preset", args.preset, "offspring preset: exp | planetree");
  cmd->add_option("--coeffs", args.coeffs_file,
                  "file with whitespace-separated coefficients b_0 b_1 ...");
  cmd->add_option("--radius", args.radius,
                  "declared radius of convergence for --coeffs ('inf' allowed)");
  cmd->add_option("--order", args.order, "materialization order for presets")
      ->capture_default_str();
}

void add_output_flags(CLI::App* cmd, OutputArgs& args) {
  cmd->add_option("--format", args.format, "csv | json")->capture_default_str();
  cmd->add_option("--out", args.out_path, "output path (default: stdout)");
}

gwps::OffspringSpec<double> resolve_spec(const SpecArgs& args) {
  if (!args.preset.empty() && !args.coeffs_file.empty())
    throw std::invalid_argument("--preset and --coeffs are mutually exclusive");
  if (!args.preset.empty()) {
    if (args.preset == "exp") return gwps::make_exp_spec<double>(args.order);
    if (args.preset == "planetree" || args.preset == "geometric")
      return gwps::make_geometric_spec<double>(args.order);
    throw std::invalid_argument("unknown preset '" + args.preset + "'");
  }
  if (args.coeffs_file.empty())
    throw std::invalid_argument("an offspring spec is required: --preset or --coeffs");
  std::ifstream in(args.coeffs_file);
  if (!in) throw std::invalid_argument("cannot open coefficient file '" + args.coeffs_file + "'");
  std::vector<double> coeffs;
  double v;
  while (in >> v) coeffs.push_back(v);
  if (coeffs.empty()) throw std::invalid_argument("coefficient file is empty");
  if (args.radius.empty())
    throw std::invalid_argument(
        "--coeffs requires --radius (the radius is declared, never inferred; pass 'inf' for "
        "polynomials)");
  std::string::size_type base = args.coeffs_file.find_last_of('/');
  const std::string name =
      base == std::string::npos ? args.coeffs_file : args.coeffs_file.substr(base + 1);
  if (args.radius == "inf")
    return gwps::make_polynomial_spec(std::move(coeffs), name);
  return gwps::make_explicit_spec(std::move(coeffs), std::stod(args.radius), name);
}

struct GridPoint {
  double t;
  bool nudged = false;
};

/// "a:b:c" = inclusive start, exclusive stop, step c; or a comma list; or a
/// single value. Points within 1e-9 of the apex are nudged off it (the
/// derivative and series routines treat tau specially) and flagged.
std::vector<GridPoint> parse_grid(const std::string& text, std::optional<double> tau) {
  std::vector<double> raw;
  if (text.find(':') != std::string::npos) {
    std::istringstream ss(text);
    std::string a, b, c;
    std::getline(ss, a, ':');
    std::getline(ss, b, ':');
    std::getline(ss, c);
    const double start = std::stod(a), stop = std::stod(b), step = std::stod(c);
    if (!(step > 0)) throw std::invalid_argument("grid step must be positive");
    for (int k = 0;; ++k) {
      const double t = start + k * step;
      if (t >= stop - 1e-15 * std::max(1.0, std::abs(stop))) break;
      raw.push_back(t);
    }
  } else {
    std::istringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) raw.push_back(std::stod(tok));
  }
  if (raw.empty()) throw std::invalid_argument("empty t grid");
  std::vector<GridPoint> out;
  for (double t : raw) {
    GridPoint p{t, false};
    if (tau && std::abs(t - *tau) < 1e-9) {
      p.t = *tau - 1e-9 <= 0 ? *tau + 1e-9 : (t <= *tau ? *tau - 1e-9 : *tau + 1e-9);
      p.nudged = true;
    }
    out.push_back(p);
  }
  return out;
}

void emit(const OutputArgs& out, const std::string& text) {
  if (out.out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out.out_path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open output path '" + out.out_path + "'");
  f << text;
}

json report_envelope(const std::string& command, const json& config) {
  json j;
  j["schema"] = gwps::kReportSchema;
  j["version"] = gwps::kVersion;
  j["command"] = command;
  j["config"] = config;
  return j;
}

std::string csv_preamble(const std::string& command, const json& config) {
  gwps::CsvWriter head;
  head.comment("gwps " + std::string(gwps::kVersion) + " schema=" +
               std::string(gwps::kReportSchema) + " command=" + command);
  head.comment("config " + config.dump());
  return head.str();
}

json spec_config(const gwps::OffspringSpec<double>& spec) { return gwps::spec_to_json(spec); }

int run_apex(const SpecArgs& sargs, const OutputArgs& oargs) {
  const auto spec = resolve_spec(sargs);
  const auto cls = gwps::classify(spec);
  const auto rad = gwps::g_radius_probe(spec, cls);
  const int q = gwps::lattice_period(spec);
  json config;
  config["spec"] = spec_config(spec);
  if (oargs.format == "json") {
    json j = report_envelope("apex", config);
    j["result"] = {{"class", cls.is_star ? "K-star" : "K-plain"},
                   {"mean_limit", std::isinf(cls.mean_limit) ? json("inf") : json(cls.mean_limit)},
                   {"mean_limit_exact", cls.limit_exact},
                   {"tau", cls.tau ? json(*cls.tau) : json()},
                   {"rho", rad.rho},
                   {"radius_probe_converged", rad.converged},
                   {"Q", q}};
    emit(oargs, j.dump(2) + "\n");
  } else {
    gwps::CsvWriter w;
    w.header({"class", "mean_limit", "tau", "rho", "Q"});
    w.row(cls.is_star ? "K-star" : "K-plain", gwps::format_double(cls.mean_limit),
          cls.tau ? gwps::format_double(*cls.tau) : "", gwps::format_double(rad.rho), q);
    emit(oargs, csv_preamble("apex", config) + w.str());
  }
  return 0;
}

int run_coeffs(const SpecArgs& sargs, const OutputArgs& oargs, int N) {
  const auto spec = resolve_spec(sargs);
  const auto sol = gwps::lagrange_solve(spec, N);
  json config;
  config["spec"] = spec_config(spec);
  config["N"] = N;
  if (oargs.format == "json") {
    json j = report_envelope("coeffs", config);
    j["rho"] = sol.rho;
    j["tau"] = sol.tau ? json(*sol.tau) : json();
    j["Q"] = sol.lattice;
    json rows = json::array();
    for (int n = 1; n <= sol.order(); ++n)
      rows.push_back({{"n", n},
                      {"A_n", sol.coeffs[n]},
                      {"log_A_n", sol.log_coeffs[n]},
                      {"A_n_rho_n", sol.scaled[n]}});
    j["rows"] = rows;
    emit(oargs, j.dump(2) + "\n");
  } else {
    gwps::CsvWriter w;
    w.header({"n", "A_n", "log_A_n", "A_n_rho_n"});
    for (int n = 1; n <= sol.order(); ++n)
      w.row(n, sol.coeffs[n], sol.log_coeffs[n], sol.scaled[n]);
    emit(oargs, csv_preamble("coeffs", config) + w.str());
  }
  return 0;
}

int run_extinction(const SpecArgs& sargs, const OutputArgs& oargs, const std::string& grid_text,
                   int N, long mc_runs, long budget, std::uint64_t seed, int workers) {
  const auto spec = resolve_spec(sargs);
  const auto sol = gwps::lagrange_solve(spec, N);
  const auto grid = parse_grid(grid_text, sol.tau);
  json config;
  config["spec"] = spec_config(spec);
  config["N"] = N;
  config["t"] = grid_text;
  config["mc_runs"] = mc_runs;
  config["budget"] = budget;
  config["seed"] = seed;
  // workers deliberately not embedded: reports are invariant to parallelism.

  json rows = json::array();
  gwps::CsvWriter w;
  w.header({"t", "q_series", "q_fixed_point", "q", "q_mc", "mc_ci", "tail_bound",
            "method_flags"});
  for (const auto& p : grid) {
    const auto sv = gwps::extinction_series(sol, p.t);
    const auto fp = gwps::extinction_fixed_point(spec, p.t);
    const auto routed = gwps::extinction(sol, p.t);
    std::string flags = gwps::to_string(routed.method);
    if (p.nudged) flags += "+nudged";
    if (sv.slow_convergence) flags += "+slow-series";
    if (!fp.converged) flags += "+fp-budget";
    std::optional<double> q_mc, mc_ci;
    if (mc_runs > 0) {
      const auto mc = gwps::mc_extinction(spec, p.t, mc_runs, budget, seed, workers);
      q_mc = mc.fraction;
      mc_ci = mc.ci3;
    }
    rows.push_back({{"t", p.t},
                    {"q_series", sv.q},
                    {"q_fixed_point", fp.q},
                    {"q", routed.q},
                    {"q_mc", q_mc ? json(*q_mc) : json()},
                    {"mc_ci", mc_ci ? json(*mc_ci) : json()},
                    {"tail_bound", sv.tail_bound ? json(*sv.tail_bound) : json()},
                    {"method_flags", flags}});
    w.row(p.t, sv.q, fp.q, routed.q, q_mc ? gwps::format_double(*q_mc) : "",
          mc_ci ? gwps::format_double(*mc_ci) : "",
          sv.tail_bound ? gwps::format_double(*sv.tail_bound) : "", flags);
  }
  if (oargs.format == "json") {
    json j = report_envelope("extinction", config);
    j["rows"] = rows;
    emit(oargs, j.dump(2) + "\n");
  } else {
    emit(oargs, csv_preamble("extinction", config) + w.str());
  }
  return 0;
}

int run_progeny(const SpecArgs& sargs, const OutputArgs& oargs, const std::string& grid_text,
                int N) {
  const auto spec = resolve_spec(sargs);
  const auto sol = gwps::lagrange_solve(spec, N);
  const auto grid = parse_grid(grid_text, sol.tau);
  const double t = grid.front().t;
  const auto law = gwps::progeny_law(sol, t, N);
  json config;
  config["spec"] = spec_config(spec);
  config["N"] = N;
  config["t"] = t;
  if (oargs.format == "json") {
    json j = report_envelope("progeny", config);
    j["q"] = law.q;
    j["survival_mass"] = law.survival_mass;
    j["tail_finite"] = law.tail_finite;
    json rows = json::array();
    for (int n = 1; n < static_cast<int>(law.probs.size()); ++n)
      rows.push_back({{"n", n}, {"prob", law.probs[n]}});
    j["rows"] = rows;
    emit(oargs, j.dump(2) + "\n");
  } else {
    gwps::CsvWriter w;
    w.comment("q=" + gwps::format_double(law.q) +
              " survival_mass=" + gwps::format_double(law.survival_mass) +
              " tail_finite=" + gwps::format_double(law.tail_finite));
    w.header({"n", "prob"});
    for (int n = 1; n < static_cast<int>(law.probs.size()); ++n) w.row(n, law.probs[n]);
    emit(oargs, csv_preamble("progeny", config) + w.str());
  }
  return 0;
}

int run_simulate(const SpecArgs& sargs, const OutputArgs& oargs, const std::string& grid_text,
                 int N, long runs, long budget, std::uint64_t seed, int workers) {
  const auto spec = resolve_spec(sargs);
  const auto sol = gwps::lagrange_solve(spec, N);
  const auto grid = parse_grid(grid_text, sol.tau);
  json config;
  config["spec"] = spec_config(spec);
  config["N"] = N;
  config["t"] = grid_text;
  config["runs"] = runs;
  config["budget"] = budget;
  config["seed"] = seed;
  // workers deliberately not embedded: reports are invariant to parallelism.

  json rows = json::array();
  gwps::CsvWriter w;
  w.header({"t", "runs", "budget", "extinct", "censored", "extinct_fraction", "ci3",
            "q_reference", "censor_bound", "mean_extinct_size", "max_generations"});
  for (const auto& p : grid) {
    const auto mc = gwps::mc_extinction(spec, p.t, runs, budget, seed, workers);
    const auto routed = gwps::extinction(sol, p.t);
    // P(extinct but size > budget) <= q - sum of the computable finite probs.
    const auto law = gwps::progeny_law(sol, p.t, sol.order());
    double finite = 0;
    for (double pr : law.probs) finite += pr;
    const double censor_bound = std::max(routed.q - finite, 0.0);
    const double mean_size =
        mc.extinct > 0 ? static_cast<double>(mc.extinct_size_total) / mc.extinct : 0.0;
    rows.push_back({{"t", p.t},
                    {"runs", runs},
                    {"budget", budget},
                    {"extinct", mc.extinct},
                    {"censored", mc.censored},
                    {"extinct_fraction", mc.fraction},
                    {"ci3", mc.ci3},
                    {"q_reference", routed.q},
                    {"censor_bound", censor_bound},
                    {"mean_extinct_size", mean_size},
                    {"max_generations", mc.max_generations}});
    w.row(p.t, runs, budget, mc.extinct, mc.censored, mc.fraction, mc.ci3, routed.q,
          censor_bound, mean_size, mc.max_generations);
  }
  if (oargs.format == "json") {
    json j = report_envelope("simulate", config);
    j["rows"] = rows;
    emit(oargs, j.dump(2) + "\n");
  } else {
    emit(oargs, csv_preamble("simulate", config) + w.str());
  }
  return 0;
}

int run_enumerate(const SpecArgs& sargs, const OutputArgs& oargs, int n) {
  const auto spec = resolve_spec(sargs);
  const auto trees = gwps::enumerate_plane_trees(n);
  json config;
  config["spec"] = spec_config(spec);
  config["n"] = n;
  double weight_sum = 0;
  json rows = json::array();
  gwps::CsvWriter w;
  w.header({"index", "tree", "weight"});
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const double wt = gwps::tree_weight(trees[i], spec);
    weight_sum += wt;
    rows.push_back({{"index", i}, {"tree", gwps::to_parens(trees[i])}, {"weight", wt}});
    w.row(static_cast<long>(i), gwps::to_parens(trees[i]), wt);
  }
  if (oargs.format == "json") {
    json j = report_envelope("enumerate", config);
    j["count"] = trees.size();
    j["weight_sum"] = weight_sum;
    j["rows"] = rows;
    emit(oargs, j.dump(2) + "\n");
  } else {
    w.comment("count=" + std::to_string(trees.size()) +
              " weight_sum=" + gwps::format_double(weight_sum));
    emit(oargs, csv_preamble("enumerate", config) + w.str());
  }
  return 0;
}

int run_asymptotics(const SpecArgs& sargs, const OutputArgs& oargs, int N, int n_max) {
  const auto spec = resolve_spec(sargs);
  const auto sol = gwps::lagrange_solve(spec, N);
  if (!sol.profile)
    throw std::runtime_error("asymptotics: spec is not in K-star (no apex, no OMM profile)");
  const auto rows_v = gwps::an_ratios(sol.scaled, *sol.profile, n_max > 0 ? n_max : N);
  json config;
  config["spec"] = spec_config(spec);
  config["N"] = N;
  json prof = {{"C", sol.profile->C},
               {"tau", sol.profile->tau},
               {"sigma_tau", sol.profile->sigma_tau},
               {"Q", sol.profile->Q}};
  if (oargs.format == "json") {
    json j = report_envelope("asymptotics", config);
    j["profile"] = prof;
    json rows = json::array();
    for (const auto& r : rows_v)
      rows.push_back({{"n", r.n}, {"A_n_rho_n_n32", r.scaled_n32}, {"ratio", r.ratio}});
    j["rows"] = rows;
    emit(oargs, j.dump(2) + "\n");
  } else {
    gwps::CsvWriter w;
    w.comment("profile " + prof.dump());
    w.header({"n", "A_n_rho_n_n32", "ratio"});
    for (const auto& r : rows_v) w.row(r.n, r.scaled_n32, r.ratio);
    emit(oargs, csv_preamble("asymptotics", config) + w.str());
  }
  return 0;
}

int run_conditional(const SpecArgs& sargs, const OutputArgs& oargs, const std::string& pred_name,
                    int n, const std::string& grid_text, int N) {
  const auto spec = resolve_spec(sargs);
  const auto pred = gwps::parse_predicate(pred_name);
  const double rn = gwps::sum_weights(n, spec, pred);
  const double an = gwps::sum_weights(n, spec);
  const double ratio = gwps::conditional_size_prob(pred, spec, n);
  json config;
  config["spec"] = spec_config(spec);
  config["pred"] = pred.name;
  config["n"] = n;
  config["N"] = N;
  json j = report_envelope("conditional", config);
  j["R_n"] = rn;
  j["A_n"] = an;
  j["size_conditional"] = ratio;  // P(T in R | |T| = n): independent of t
  gwps::CsvWriter w;
  w.header({"t", "R_n", "A_n", "size_conditional", "extinction_conditional", "tail_bound"});
  json rows = json::array();
  if (!grid_text.empty()) {
    const auto sol = gwps::lagrange_solve(spec, N);
    for (const auto& p : parse_grid(grid_text, sol.tau)) {
      const auto ce = gwps::conditional_extinction_prob(pred, sol, p.t, N);
      rows.push_back({{"t", p.t},
                      {"extinction_conditional", ce.value},
                      {"tail_bound", ce.tail_bound},
                      {"tail_dominates", ce.tail_dominates}});
      w.row(p.t, rn, an, ratio, ce.value, ce.tail_bound);
    }
  } else {
    w.row("", rn, an, ratio, "", "");
  }
  if (oargs.format == "json") {
    j["rows"] = rows;
    emit(oargs, j.dump(2) + "\n");
  } else {
    emit(oargs, csv_preamble("conditional", config) + w.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parametric Galton-Watson processes via power-series coefficients"};
  app.require_subcommand(1);

  SpecArgs sargs;
  OutputArgs oargs;
  int N = gwps::kDefaultOrder;
  int n = 1;
  int n_max = 0;
  long runs = 100000, budget = 10000, mc_runs = 0;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string grid_text, pred_name = "all";

  auto* apex = app.add_subcommand("apex", "class, apex tau, radius rho, lattice Q");
  auto* coeffs = app.add_subcommand("coeffs", "Lagrange coefficients A_n");
  auto* extinction = app.add_subcommand("extinction", "extinction probability over a t grid");
  auto* progeny = app.add_subcommand("progeny", "total-progeny law at one t");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo tree simulation");
  auto* enumerate = app.add_subcommand("enumerate", "exact plane-tree enumeration");
  auto* asymptotics = app.add_subcommand("asymptotics", "Otter-Meir-Moon ratio table");
  auto* conditional = app.add_subcommand("conditional", "subclass-conditional probabilities");

  for (auto* cmd : {apex, coeffs, extinction, progeny, simulate, enumerate, asymptotics,
                    conditional}) {
    add_spec_flags(cmd, sargs);
    add_output_flags(cmd, oargs);
  }
  for (auto* cmd : {coeffs, extinction, progeny, simulate, asymptotics, conditional})
    cmd->add_option("-N", N, "solution truncation order")->capture_default_str();
  for (auto* cmd : {extinction, progeny, simulate, conditional})
    cmd->add_option("--t", grid_text, "t grid: start:stop:step | comma list | single value");
  extinction->add_option("--mc-runs", mc_runs, "add a Monte Carlo column with this many trees");
  for (auto* cmd : {extinction, simulate}) {
    cmd->add_option("--budget", budget, "node budget before censoring")->capture_default_str();
    cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
    cmd->add_option("--workers", workers, "worker threads")->capture_default_str();
  }
  simulate->add_option("--runs", runs, "number of simulated trees")->capture_default_str();
  for (auto* cmd : {enumerate, conditional})
    cmd->add_option("-n", n, "tree size (node count)")->required();
  asymptotics->add_option("--nmax", n_max, "last ratio row (default: N)");
  conditional->add_option("--pred", pred_name,
                          "subclass: all | root-outdegree:<j> | max-outdegree:<j> | leaves:<k>")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // exit 2 on any flag/validation problem
  }

  try {
    if (apex->parsed()) return run_apex(sargs, oargs);
    if (coeffs->parsed()) return run_coeffs(sargs, oargs, N);
    if (extinction->parsed()) {
      if (grid_text.empty()) throw std::invalid_argument("extinction requires --t");
      return run_extinction(sargs, oargs, grid_text, N, mc_runs, budget, seed, workers);
    }
    if (progeny->parsed()) {
      if (grid_text.empty()) throw std::invalid_argument("progeny requires --t");
      return run_progeny(sargs, oargs, grid_text, N);
    }
    if (simulate->parsed()) {
      if (grid_text.empty()) throw std::invalid_argument("simulate requires --t");
      return run_simulate(sargs, oargs, grid_text, N, runs, budget, seed, workers);
    }
    if (enumerate->parsed()) return run_enumerate(sargs, oargs, n);
    if (asymptotics->parsed()) return run_asymptotics(sargs, oargs, N, n_max);
    if (conditional->parsed())
      return run_conditional(sargs, oargs, pred_name, n, grid_text, N);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
