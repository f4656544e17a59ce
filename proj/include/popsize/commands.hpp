#pragma once

// Command implementations behind the CLI. Each command reads a RunConfig,
// writes its tables and a JSON report into the output directory, and returns
// the report.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "popsize/estimators.hpp"
#include "popsize/identification.hpp"
#include "popsize/io.hpp"
#include "popsize/nuisance.hpp"
#include "popsize/simulate.hpp"

namespace popsize {

namespace detail {

inline std::filesystem::path prepare_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("an output directory is required (--out)");
  std::filesystem::path dir(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out + "': " + ec.message());
  return dir;
}

inline json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

inline json report_json(const EstimateReport& r) {
  return json{{"method", to_string(r.method)},
              {"N", r.observed},
              {"psi_inv_hat", r.psi_inv_hat},
              {"psi_inv_clamped", r.psi_inv_clamped},
              {"psi_hat", r.psi_hat},
              {"sigma_hat", r.sigma_hat},
              {"alpha", r.alpha},
              {"ci_psi_inv", interval_json(r.ci_psi_inv)},
              {"n_hat", r.n_hat},
              {"ci_n", interval_json(r.ci_n)},
              {"clamped", r.clamped}};
}

inline json block_json(const BoundBlock& b) {
  return json{{"psi_inv_hat", b.psi_inv_hat}, {"psi_hat", b.psi_hat},         {"sigma_hat", b.sigma_hat},
              {"ci_psi_inv", interval_json(b.ci_psi_inv)}, {"n_hat", b.n_hat}, {"ci_n", interval_json(b.ci_n)},
              {"clamped", b.clamped}};
}

inline json envelope(const RunConfig& cfg, const std::string& command) {
  return json{{"command", command}, {"config_hash", config_fingerprint(cfg)}, {"config", cfg.to_json()}};
}

inline LearnerSpec seeded_learner(const RunConfig& cfg) {
  auto spec = cfg.learner;
  spec.seed = cfg.seed;
  return spec;
}

}  // namespace detail

struct FloorEstimate {
  double q_floor = 0.0;
  EstimateReport plug_in;
  EstimateReport one_step;
};

// Point-identified pipeline: cross-fit q, then plug-in and one-step
// estimates (the plug-in interval uses the one-step sigma), one row pair per
// q floor.
inline std::vector<FloorEstimate> estimate_dataset(const ObservedDataset& data, const RunConfig& cfg) {
  cfg.validate();
  const auto subset = cfg.list_subset();
  const auto sweeps = cross_fit_q(data, subset, detail::seeded_learner(cfg), cfg.folds, cfg.q_floors);
  std::vector<FloorEstimate> out;
  for (std::size_t f = 0; f < sweeps.size(); ++f) {
    const auto& q = sweeps[f];
    const auto os = one_step_psi_inv(data, subset, q);
    const double plug = plug_in_psi_inv(q);
    out.push_back({cfg.q_floors[f], n_point_and_ci(plug, os.sigma(), data.size(), cfg.alpha, Method::plug_in),
                   n_point_and_ci(os, data.size(), cfg.alpha)});
  }
  return out;
}

inline json run_estimate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto dir = detail::prepare_out(cfg);
  const auto data = load_dataset(cfg.input, cfg);
  const auto results = estimate_dataset(data, cfg);
  const auto hash = config_fingerprint(cfg);

  Table t;
  t.header = {"config_hash", "q_floor", "method",  "N",       "psi_inv_hat", "psi_inv_clamped", "psi_hat",
              "sigma_hat",   "ci_psi_inv_lo", "ci_psi_inv_hi", "n_hat", "ci_n_lo", "ci_n_hi", "clamped"};
  json rows = json::array();
  for (const auto& r : results)
    for (const auto* rep : {&r.plug_in, &r.one_step}) {
      t.add({hash, format_double(r.q_floor), to_string(rep->method), std::to_string(rep->observed),
             format_double(rep->psi_inv_hat), format_double(rep->psi_inv_clamped), format_double(rep->psi_hat),
             format_double(rep->sigma_hat), format_double(rep->ci_psi_inv.lo), format_double(rep->ci_psi_inv.hi),
             format_double(rep->n_hat), format_double(rep->ci_n.lo), format_double(rep->ci_n.hi),
             rep->clamped ? "1" : "0"});
      auto row = detail::report_json(*rep);
      row["q_floor"] = r.q_floor;
      rows.push_back(std::move(row));
    }
  t.write(dir / "estimate.csv");
  auto doc = detail::envelope(cfg, "estimate");
  doc["N"] = data.size();
  doc["estimates"] = rows;
  write_json(dir / "estimate.json", doc);

  log << "N = " << data.size() << " observed units, " << data.lists() << " lists, subset of "
      << cfg.list_subset().size() << "\n";
  for (const auto& r : results) {
    const auto& os = r.one_step;
    log << "q floor " << format_double(r.q_floor) << ": n_hat = " << format_double(os.n_hat) << "  "
        << (1.0 - cfg.alpha) * 100 << "% CI [" << format_double(os.ci_n.lo) << ", " << format_double(os.ci_n.hi)
        << "]  (plug-in " << format_double(r.plug_in.n_hat) << ")" << (os.clamped ? "  [clamped at N]" : "")
        << "\n";
  }
  return doc;
}

struct SensitivityRow {
  double q_floor = 0.0;
  BoundsReport bounds;
};

inline std::vector<SensitivityRow> sensitivity_dataset(const ObservedDataset& data, const RunConfig& cfg) {
  cfg.validate();
  if (cfg.delta_grid.empty()) throw ConfigError("sensitivity needs a nonempty delta grid (--delta-grid)");
  if (cfg.epsilon_grid.empty()) throw ConfigError("sensitivity needs a nonempty epsilon grid (--epsilon-grid)");
  const auto subset = cfg.list_subset();
  const auto sweeps = cross_fit_q(data, subset, detail::seeded_learner(cfg), cfg.folds, cfg.q_floors);
  std::vector<SensitivityRow> out;
  for (std::size_t f = 0; f < sweeps.size(); ++f)
    for (double eps : cfg.epsilon_grid)
      for (double delta : cfg.delta_grid) {
        const auto s = SensitivityParams::make(delta, eps);
        const auto lo = bound_psi_inv_one_step(data, subset, sweeps[f], s, BoundSide::lower);
        const auto hi = bound_psi_inv_one_step(data, subset, sweeps[f], s, BoundSide::upper);
        out.push_back({cfg.q_floors[f], n_bounds_and_ci(lo, hi, data.size(), cfg.alpha, s)});
      }
  return out;
}

inline json run_sensitivity(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto dir = detail::prepare_out(cfg);
  const auto data = load_dataset(cfg.input, cfg);
  const auto rows = sensitivity_dataset(data, cfg);
  const auto hash = config_fingerprint(cfg);

  Table wide;
  wide.header = {"config_hash",   "q_floor",      "epsilon",      "delta",         "lower_psi_inv",
                 "lower_sigma",   "lower_n_hat",  "lower_ci_lo",  "lower_ci_hi",   "upper_psi_inv",
                 "upper_sigma",   "upper_n_hat",  "upper_ci_lo",  "upper_ci_hi",   "combined_ci_lo",
                 "combined_ci_hi", "clamped"};
  Table lng;
  lng.header = {"config_hash", "q_floor", "epsilon", "delta", "side", "point", "ci_lo", "ci_hi"};
  json items = json::array();
  for (const auto& r : rows) {
    const auto& b = r.bounds;
    const auto f = format_double(r.q_floor);
    const auto e = format_double(b.params.epsilon);
    const auto d = format_double(b.params.delta);
    wide.add({hash, f, e, d, format_double(b.lower.psi_inv_hat), format_double(b.lower.sigma_hat),
              format_double(b.lower.n_hat), format_double(b.lower.ci_n.lo), format_double(b.lower.ci_n.hi),
              format_double(b.upper.psi_inv_hat), format_double(b.upper.sigma_hat), format_double(b.upper.n_hat),
              format_double(b.upper.ci_n.lo), format_double(b.upper.ci_n.hi), format_double(b.combined_ci_n.lo),
              format_double(b.combined_ci_n.hi), (b.lower.clamped || b.upper.clamped) ? "1" : "0"});
    lng.add({hash, f, e, d, "lower", format_double(b.lower.n_hat), format_double(b.lower.ci_n.lo),
             format_double(b.lower.ci_n.hi)});
    lng.add({hash, f, e, d, "upper", format_double(b.upper.n_hat), format_double(b.upper.ci_n.lo),
             format_double(b.upper.ci_n.hi)});
    items.push_back({{"q_floor", r.q_floor},
                     {"epsilon", b.params.epsilon},
                     {"delta", b.params.delta},
                     {"lower", detail::block_json(b.lower)},
                     {"upper", detail::block_json(b.upper)},
                     {"combined_ci_n", detail::interval_json(b.combined_ci_n)},
                     {"combined_ci_psi_inv", detail::interval_json(b.combined_ci_psi_inv)}});
  }
  wide.write(dir / "sensitivity.csv");
  lng.write(dir / "sensitivity_long.csv");
  auto doc = detail::envelope(cfg, "sensitivity");
  doc["N"] = data.size();
  doc["bounds"] = items;
  write_json(dir / "sensitivity.json", doc);

  for (const auto& r : rows) {
    const auto& b = r.bounds;
    log << "q floor " << format_double(r.q_floor) << ", eps " << format_double(b.params.epsilon) << ", delta "
        << format_double(b.params.delta) << ": n in [" << format_double(b.lower.n_hat) << ", "
        << format_double(b.upper.n_hat) << "], CI [" << format_double(b.combined_ci_n.lo) << ", "
        << format_double(b.combined_ci_n.hi) << "]\n";
  }
  return doc;
}

inline std::vector<SimulationConfig> study_grid(const RunConfig& cfg) {
  const auto& s = cfg.simulate;
  SimulationConfig base;
  base.n_true = s.n_true;
  base.psi_target = s.psi_target;
  base.lists = s.subset_size;
  base.subset_size = s.subset_size;
  base.reps = s.reps;
  base.base_seed = cfg.seed;
  base.q_floor_true = s.q_floor_true;
  std::vector<SimulationConfig> grid;
  for (double b : s.b_grid)
    for (double a : s.rate_grid) {
      auto c = base;
      c.b = b;
      c.alpha_rate = a;
      c.validate();
      grid.push_back(c);
    }
  if (grid.empty()) throw ConfigError("simulation grid is empty");
  return grid;
}

inline json run_simulate(const RunConfig& cfg, std::ostream& log) {
  const auto dir = detail::prepare_out(cfg);
  const auto grid = study_grid(cfg);
  const auto result = run_study(grid);
  const auto hash = config_fingerprint(cfg);
  const auto pop = generate_population(grid.front(), 0);

  Table t;
  t.header = {"config_hash", "estimator", "b",   "alpha_rate",    "n_true",       "psi_target",
              "reps",        "mean_abs_bias", "mse", "coverage_95", "mean_ci_width"};
  json cells = json::array();
  for (const auto& c : result.cells) {
    t.add({hash, to_string(c.estimator), format_double(c.b), format_double(c.alpha_rate), std::to_string(c.n_true),
           format_double(c.psi_target), std::to_string(c.reps), format_double(c.mean_abs_bias), format_double(c.mse),
           format_double(c.coverage_95), format_double(c.mean_ci_width)});
    cells.push_back({{"estimator", to_string(c.estimator)},
                     {"b", c.b},
                     {"alpha_rate", c.alpha_rate},
                     {"n_true", c.n_true},
                     {"psi_target", c.psi_target},
                     {"reps", c.reps},
                     {"mean_abs_bias", c.mean_abs_bias},
                     {"mse", c.mse},
                     {"coverage_95", c.coverage_95},
                     {"mean_ci_width", c.mean_ci_width}});
  }
  t.write(dir / "simulate.csv");
  auto doc = detail::envelope(cfg, "simulate");
  doc["reps_used"] = result.reps_used;
  doc["truth_rep0"] = {{"n", pop.truth.n},          {"observed", pop.truth.observed},
                       {"psi", pop.truth.psi},      {"psi_inv", pop.truth.psi_inv},
                       {"tilt_scale", pop.truth.tilt_scale}, {"min_q", pop.truth.min_q}};
  doc["cells"] = cells;
  write_json(dir / "simulate.json", doc);

  log << result.cells.size() << " cells, " << result.reps_used << " replications\n";
  for (const auto& c : result.cells)
    log << to_string(c.estimator) << " b=" << format_double(c.b) << " rate=" << format_double(c.alpha_rate)
        << ": bias " << format_double(c.mean_abs_bias) << ", coverage " << format_double(c.coverage_95) << "\n";
  return doc;
}

// One covariate stratum of an enumerable population: its mass under P and
// the full 2^K profile table indexed by mask (bit k = list k + 1).
struct DiagnoseStratum {
  double weight = 0.0;
  std::vector<double> p;
};

struct StratumDiagnosis {
  double alpha1_subtable = 0.0;  // over the selected lists, complement zero
  bool renormalized = false;
  OddsRatioDecomposition odds;   // full K-list table
  std::vector<double> q;         // Q-probabilities of suffix-zero profiles
  double gamma_inverse_q = 0.0;
  double gamma_inverse_exact = 0.0;  // 1 / P(Y != 0 | X)
  double q_mass = 0.0;               // stratum mass under Q
};

struct Diagnosis {
  std::vector<StratumDiagnosis> strata;
  double psi_inv = 0.0;
  double efficiency_bound = 0.0;
};

inline Diagnosis diagnose_strata(const std::vector<DiagnoseStratum>& strata, const ListSubset& subset) {
  if (strata.empty()) throw ConfigError("diagnose needs at least one stratum");
  const std::size_t cells = std::size_t{1} << subset.lists();
  Diagnosis d;
  std::vector<Stratum> q_strata;
  double q_total = 0.0;
  for (const auto& s : strata) {
    if (s.p.size() != cells)
      throw ConfigError("stratum table has " + std::to_string(s.p.size()) + " cells, expected " +
                        std::to_string(cells));
    if (!(s.weight > 0.0)) throw ConfigError("stratum weights must be positive");
    const double total = check_positive_table(s.p);
    StratumDiagnosis out;
    std::vector<double> sub(std::size_t{1} << subset.size());
    for (std::size_t local = 0; local < sub.size(); ++local) {
      std::uint64_t mask = 0;
      for (int j = 0; j < subset.size(); ++j)
        if (local >> j & 1U) mask |= std::uint64_t{1} << subset.selected()[static_cast<std::size_t>(j)];
      sub[local] = s.p[mask];
    }
    const auto a1 = alpha1_from_conditional_probs(sub);
    out.alpha1_subtable = a1.value;
    out.renormalized = std::fabs(total - 1.0) > 1e-8;
    if (subset.lists() >= 2) out.odds = odds_ratio_decomposition(s.p);
    const double observed = 1.0 - s.p[0] / total;
    for (std::size_t i = 0; i < subset.profile_count(); ++i)
      out.q.push_back(s.p[subset.profile_at(i).mask()] / total / observed);
    out.gamma_inverse_q = gamma_inverse(out.q);
    out.gamma_inverse_exact = 1.0 / observed;
    out.q_mass = s.weight * observed;
    q_total += out.q_mass;
    q_strata.push_back({out.q_mass, out.q});
    d.strata.push_back(std::move(out));
  }
  for (auto& s : d.strata) s.q_mass /= q_total;
  d.psi_inv = exact_psi_inv(q_strata);
  d.efficiency_bound = efficiency_bound(q_strata);
  return d;
}

// Input document: {"strata": [{"weight": w, "p": [2^K cell probabilities]}]}
inline std::vector<DiagnoseStratum> read_strata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  try {
    const auto doc = json::parse(in);
    std::vector<DiagnoseStratum> out;
    for (const auto& s : doc.at("strata"))
      out.push_back({s.value("weight", 1.0), s.at("p").get<std::vector<double>>()});
    return out;
  } catch (const json::exception& e) {
    throw DataError("bad diagnose input '" + path + "': " + e.what());
  }
}

inline json run_diagnose(RunConfig cfg, std::ostream& log) {
  const auto dir = detail::prepare_out(cfg);
  const auto strata = read_strata(cfg.input);
  if (strata.empty()) throw DataError("diagnose input has no strata");
  const std::size_t cells = strata.front().p.size();
  if (cells < 2 || (cells & (cells - 1)) != 0) throw DataError("cell table length must be a power of two");
  const int K = std::countr_zero(cells);
  if (cfg.lists.empty())
    for (int k = 0; k < K; ++k) cfg.lists.push_back("list" + std::to_string(k + 1));
  if (static_cast<int>(cfg.lists.size()) != K)
    throw ConfigError("configured list count does not match the 2^K table length");
  const auto subset = cfg.list_subset();
  const auto diag = diagnose_strata(strata, subset);
  const auto hash = config_fingerprint(cfg);

  Table t;
  t.header = {"config_hash", "stratum", "q_mass", "alpha1_subtable", "or_lhs", "or_even_odd_ratio",
              "gamma_inverse_q", "gamma_inverse_exact"};
  json items = json::array();
  for (std::size_t i = 0; i < diag.strata.size(); ++i) {
    const auto& s = diag.strata[i];
    t.add({hash, std::to_string(i), format_double(s.q_mass), format_double(s.alpha1_subtable),
           format_double(s.odds.lhs), format_double(s.odds.even_odd_ratio), format_double(s.gamma_inverse_q),
           format_double(s.gamma_inverse_exact)});
    json factors = json::array();
    for (const auto& f : s.odds.factors)
      factors.push_back({{"rest_mask", f.rest_mask}, {"rest_order", f.rest_order}, {"odds_ratio", f.odds_ratio}});
    items.push_back({{"q_mass", s.q_mass},
                     {"alpha1_subtable", s.alpha1_subtable},
                     {"renormalized", s.renormalized},
                     {"or_lhs", s.odds.lhs},
                     {"or_even_odd_ratio", s.odds.even_odd_ratio},
                     {"or_factors", factors},
                     {"q", s.q},
                     {"gamma_inverse_q", s.gamma_inverse_q},
                     {"gamma_inverse_exact", s.gamma_inverse_exact}});
  }
  t.write(dir / "diagnose.csv");
  auto doc = detail::envelope(cfg, "diagnose");
  doc["psi_inv"] = diag.psi_inv;
  doc["efficiency_bound"] = diag.efficiency_bound;
  doc["strata"] = items;
  write_json(dir / "diagnose.json", doc);

  log << diag.strata.size() << " strata, psi^-1 = " << format_double(diag.psi_inv)
      << ", efficiency bound = " << format_double(diag.efficiency_bound) << "\n";
  return doc;
}

// Writes a covariate-driven K-list population with planted truth as CSV
// (population.csv) plus its truth record (truth.json).
inline json run_generate(const RunConfig& cfg, int lists, double planted_interaction, std::ostream& log) {
  const auto dir = detail::prepare_out(cfg);
  ListPopulationConfig pc;
  pc.n_true = cfg.simulate.n_true;
  pc.lists = lists;
  pc.planted_interaction = planted_interaction;
  pc.seed = cfg.seed;
  const auto pop = generate_list_population(pc);
  write_dataset(dir / "population.csv", pop.observed);
  auto doc = detail::envelope(cfg, "generate");
  doc["n_true"] = pop.n_true;
  doc["observed"] = pop.observed.size();
  doc["lists"] = lists;
  doc["planted_interaction"] = planted_interaction;
  doc["psi"] = pop.law.psi();
  write_json(dir / "truth.json", doc);
  log << "wrote " << pop.observed.size() << " observed units of n = " << pop.n_true << " to "
      << (dir / "population.csv").string() << "\n";
  return doc;
}

}  // namespace popsize
