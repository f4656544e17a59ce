// popsize: command-line front end for estimation, sensitivity analysis,
// simulation studies and population diagnostics.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "popsize/popsize.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> input, lists, subset, covariates, learner, q_floor, delta_grid, epsilon_grid, out,
      id_column, delimiter, b_grid, rate_grid;
  std::optional<int> folds, reps, subset_size;
  std::optional<double> alpha, psi_target, q_floor_true;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> n_true;
  int generate_lists = 7;
  double interaction = 0.0;
};

void add_data_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--input", f.input, "Input file (CSV for estimate/sensitivity, JSON for diagnose)");
  cmd->add_option("--lists", f.lists, "Comma-separated list indicator columns");
  cmd->add_option("--subset", f.subset, "Comma-separated list names entering the model (default: all)");
  cmd->add_option("--covariates", f.covariates, "Comma-separated covariates as name:cat or name:num");
  cmd->add_option("--id-column", f.id_column, "Unit id column (default: row number)");
  cmd->add_option("--delimiter", f.delimiter, "Field delimiter (default ',')");
  cmd->add_option("--learner", f.learner, "empirical-cell | knn[:k=K] | multinomial-logistic[:lambda=..,iters=..,tol=..]");
  cmd->add_option("--folds", f.folds, "Cross-fitting folds (default 2)");
  cmd->add_option("--q-floor", f.q_floor, "Truncation floor(s) for q estimates, comma-separated");
}

void add_common_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags override its keys");
  cmd->add_option("--alpha", f.alpha, "Confidence intervals at level 1 - alpha (default 0.05)");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--out", f.out, "Output directory");
}

popsize::RunConfig resolve(const Flags& f) {
  using namespace popsize;
  RunConfig cfg = f.config.empty() ? RunConfig{} : RunConfig::from_file(f.config);
  if (f.input) cfg.input = *f.input;
  if (f.lists) cfg.lists = split_list(*f.lists);
  if (f.subset) cfg.subset = split_list(*f.subset);
  if (f.covariates) {
    cfg.covariates.clear();
    for (const auto& c : split_list(*f.covariates)) cfg.covariates.push_back(parse_covariate_spec(c));
  }
  if (f.id_column) cfg.id_column = *f.id_column;
  if (f.delimiter) {
    if (f.delimiter->size() != 1) throw ConfigError("delimiter must be one character");
    cfg.delimiter = (*f.delimiter)[0];
  }
  if (f.learner) cfg.learner = LearnerSpec::parse(*f.learner);
  if (f.folds) cfg.folds = *f.folds;
  if (f.q_floor) cfg.q_floors = parse_grid(*f.q_floor);
  if (f.delta_grid) cfg.delta_grid = parse_grid(*f.delta_grid);
  if (f.epsilon_grid) cfg.epsilon_grid = parse_grid(*f.epsilon_grid);
  if (f.alpha) cfg.alpha = *f.alpha;
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.reps) cfg.simulate.reps = *f.reps;
  if (f.n_true) cfg.simulate.n_true = *f.n_true;
  if (f.psi_target) cfg.simulate.psi_target = *f.psi_target;
  if (f.subset_size) cfg.simulate.subset_size = *f.subset_size;
  if (f.q_floor_true) cfg.simulate.q_floor_true = *f.q_floor_true;
  if (f.b_grid) cfg.simulate.b_grid = parse_grid(*f.b_grid);
  if (f.rate_grid) cfg.simulate.rate_grid = parse_grid(*f.rate_grid);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capture-recapture population size estimation"};
  app.require_subcommand(1);
  Flags f;

  auto* estimate = app.add_subcommand("estimate", "Point estimate and CI of the population size");
  add_common_flags(estimate, f);
  add_data_flags(estimate, f);

  auto* sensitivity = app.add_subcommand("sensitivity", "Bounds on the population size over delta/epsilon grids");
  add_common_flags(sensitivity, f);
  add_data_flags(sensitivity, f);
  sensitivity->add_option("--delta-grid", f.delta_grid, "Comma-separated bounds on the highest-order interaction");
  sensitivity->add_option("--epsilon-grid", f.epsilon_grid, "Comma-separated lower bounds on capture probability");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of plug-in and one-step estimators");
  add_common_flags(simulate, f);
  simulate->add_option("--reps", f.reps, "Replications per grid cell (default 200)");
  simulate->add_option("--n-true", f.n_true, "Population size (default 10000)");
  simulate->add_option("--psi-target", f.psi_target, "Population capture probability (default 0.7)");
  simulate->add_option("--subset-size", f.subset_size, "Number of lists (default 3)");
  simulate->add_option("--q-floor-true", f.q_floor_true, "Lower bound of latent q draws (default 0.05)");
  simulate->add_option("--b-grid", f.b_grid, "Noise bias scales (default 1,10)");
  simulate->add_option("--rate-grid", f.rate_grid, "Noise rate exponents (default 0.1,...,0.5)");

  auto* diagnose = app.add_subcommand("diagnose", "Interaction, odds-ratio and efficiency-bound report");
  add_common_flags(diagnose, f);
  diagnose->add_option("--input", f.input, "JSON file with strata and full 2^K cell tables");
  diagnose->add_option("--lists", f.lists, "Names for the K lists");
  diagnose->add_option("--subset", f.subset, "Comma-separated list names entering the model (default: all)");

  auto* generate = app.add_subcommand("generate", "Write a synthetic multi-list CSV with planted truth");
  add_common_flags(generate, f);
  generate->add_option("--n-true", f.n_true, "Population size (default 10000)");
  generate->add_option("--list-count", f.generate_lists, "Number of lists (default 7)");
  generate->add_option("--interaction", f.interaction, "Planted log odds ratio between lists 1 and 2");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(f);
    if (estimate->parsed()) popsize::run_estimate(cfg, std::cout);
    else if (sensitivity->parsed()) popsize::run_sensitivity(cfg, std::cout);
    else if (simulate->parsed()) popsize::run_simulate(cfg, std::cout);
    else if (diagnose->parsed()) popsize::run_diagnose(cfg, std::cout);
    else if (generate->parsed()) popsize::run_generate(cfg, f.generate_lists, f.interaction, std::cout);
  } catch (const popsize::Error& e) {
    std::cerr << "error [" << e.category() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
