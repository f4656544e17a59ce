#pragma once

// Synthetic populations, nuisance perturbation, and the Monte Carlo harness
// for bias / MSE / coverage of the plug-in and one-step estimators.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "popsize/dataset.hpp"
#include "popsize/error.hpp"
#include "popsize/estimators.hpp"
#include "popsize/identification.hpp"
#include "popsize/numeric.hpp"
#include "popsize/nuisance.hpp"

namespace popsize {

struct SimulationConfig {
  std::int64_t n_true = 10000;
  double psi_target = 0.7;
  int lists = 3;          // K
  int subset_size = 3;    // J; the DGP only ever sets the first J lists
  double b = 1.0;         // noise bias scale
  double alpha_rate = 0.5;
  int reps = 200;
  std::uint64_t base_seed = 20240501;
  double q_floor_true = 0.05;

  void validate() const {
    if (n_true < 1) throw ConfigError("n_true must be >= 1");
    if (!(psi_target > 0.0 && psi_target < 1.0)) throw ConfigError("psi_target must lie in (0, 1)");
    if (subset_size < 1 || subset_size > lists || lists > kMaxLists) throw ConfigError("need 1 <= J <= K");
    if (!(alpha_rate > 0.0 && alpha_rate <= 0.5)) throw ConfigError("alpha_rate must lie in (0, 0.5]");
    if (reps < 1) throw ConfigError("reps must be >= 1");
    if (!(q_floor_true > 0.0)) throw ConfigError("q_floor_true must be > 0");
    const double m = static_cast<double>((std::size_t{1} << subset_size) - 1);
    if (!(m * q_floor_true < 1.0)) throw ConfigError("q_floor_true too large for 2^J - 1 profiles");
  }

  ListSubset subset() const {
    std::vector<int> idx(static_cast<std::size_t>(subset_size));
    for (int j = 0; j < subset_size; ++j) idx[static_cast<std::size_t>(j)] = j;
    return ListSubset(lists, std::move(idx));
  }
};

struct PopulationTruth {
  std::int64_t n = 0;
  std::size_t observed = 0;
  double psi = 0.0;        // mean of gamma_i over the population
  double psi_inv = 0.0;    // 1 / psi
  double tilt_scale = 1.0; // calibrated weight on odd-order profiles
  double min_q = 0.0;      // smallest latent q over the population
};

// Latent per-unit q-vectors (canonical order) for all n units, their gamma,
// and the observed dataset (ids are population indices).
struct Population {
  std::size_t profiles = 0;             // 2^J - 1
  std::vector<double> latent_q;         // n x profiles, row-major
  std::vector<double> gamma;            // n
  std::vector<std::size_t> observed_index;  // observed unit -> population index
  ObservedDataset observed;
  PopulationTruth truth;

  std::span<const double> q_of(std::size_t unit) const {
    return std::span<const double>(latent_q).subspan(unit * profiles, profiles);
  }
  // Latent q-vectors of the observed units as estimates (no truncation).
  QEstimates observed_q() const {
    std::vector<std::int64_t> ids;
    std::vector<QVector> q;
    for (std::size_t i = 0; i < observed_index.size(); ++i) {
      ids.push_back(observed[i].id);
      q.push_back(QVector::truncated(q_of(observed_index[i]), 0.0));
    }
    return QEstimates::from_vectors(std::move(ids), std::move(q), 0.0);
  }
};

inline std::mt19937_64 stream_rng(std::uint64_t base_seed, std::uint64_t rep, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

namespace detail {

// q = floor + (1 - m floor) w, w_y proportional to E_y t_y with t_y = scale on
// odd-order profiles and 1 on even-order ones.
inline void tilted_q(std::span<const double> draws, double scale, double floor, std::span<double> out) {
  const double free_mass = 1.0 - static_cast<double>(out.size()) * floor;
  double total = 0.0;
  for (std::size_t y = 0; y < out.size(); ++y) {
    out[y] = draws[y] * (profile_sign(y) > 0 ? scale : 1.0);
    total += out[y];
  }
  for (double& v : out) v = floor + free_mass * v / total;
}

inline double population_psi(std::span<const double> draws, std::size_t profiles, double scale, double floor,
                             std::vector<double>* q_out, std::vector<double>* gamma_out) {
  const std::size_t n = draws.size() / profiles;
  std::vector<double> q(profiles);
  CompensatedSum acc;
  for (std::size_t i = 0; i < n; ++i) {
    tilted_q(draws.subspan(i * profiles, profiles), scale, floor, q);
    const double g = 1.0 / gamma_inverse(q);
    acc.add(g);
    if (q_out) std::copy(q.begin(), q.end(), q_out->begin() + static_cast<std::ptrdiff_t>(i * profiles));
    if (gamma_out) (*gamma_out)[i] = g;
  }
  return acc.value() / static_cast<double>(n);
}

}  // namespace detail

// Latent q's are uniform on {q >= q_floor_true, sum q = 1} before a single
// multiplicative tilt of odd-order profiles, calibrated by bisection so the
// population mean of gamma equals psi_target. The tilt keeps the floor and
// the highest-order interaction of the unobserved sub-table at zero.
inline Population generate_population(const SimulationConfig& cfg, std::uint64_t rep = 0) {
  cfg.validate();
  const std::size_t m = (std::size_t{1} << cfg.subset_size) - 1;
  const auto n = static_cast<std::size_t>(cfg.n_true);
  auto rng = stream_rng(cfg.base_seed, rep, 0x706f70);

  std::vector<double> draws(n * m);
  std::exponential_distribution<double> expo(1.0);
  for (double& d : draws) d = expo(rng);

  auto psi_at = [&](double log_scale) {
    return detail::population_psi(draws, m, std::exp(log_scale), cfg.q_floor_true, nullptr, nullptr);
  };
  double lo = -60.0;  // psi decreasing in the tilt
  double hi = 60.0;
  const double psi_lo = psi_at(lo);
  const double psi_hi = psi_at(hi);
  if (!(psi_hi <= cfg.psi_target && cfg.psi_target <= psi_lo))
    throw ConfigError("psi_target " + std::to_string(cfg.psi_target) + " unreachable: attainable range [" +
                      std::to_string(psi_hi) + ", " + std::to_string(psi_lo) + "] under q_floor_true");
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (psi_at(mid) > cfg.psi_target ? lo : hi) = mid;
  }

  Population pop;
  pop.profiles = m;
  pop.latent_q.resize(n * m);
  pop.gamma.resize(n);
  const double scale = std::exp(0.5 * (lo + hi));
  pop.truth.psi = detail::population_psi(draws, m, scale, cfg.q_floor_true, &pop.latent_q, &pop.gamma);
  pop.truth.psi_inv = 1.0 / pop.truth.psi;
  pop.truth.n = cfg.n_true;
  pop.truth.tilt_scale = scale;
  pop.truth.min_q = *std::min_element(pop.latent_q.begin(), pop.latent_q.end());

  const auto subset = cfg.subset();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<ObservedUnit> units;
  for (std::size_t i = 0; i < n; ++i) {
    const double u_observe = unif(rng);
    const double u_profile = unif(rng);
    if (u_observe >= pop.gamma[i]) continue;
    const auto q = pop.q_of(i);
    std::size_t y = 0;
    double cum = q[0];
    while (y + 1 < m && u_profile >= cum) cum += q[++y];
    units.push_back({static_cast<std::int64_t>(i), {}, subset.profile_at(y)});
    pop.observed_index.push_back(i);
  }
  pop.observed = ObservedDataset(cfg.lists, {}, std::move(units));
  pop.truth.observed = pop.observed.size();
  return pop;
}

// q-hat = expit(logit(q) + e), e ~ N(b n^-alpha, (n^-alpha)^2) independently
// per component.
inline std::vector<std::vector<double>> perturb_q(const std::vector<std::vector<double>>& q_true, double b,
                                                  double alpha_rate, double n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double sd = std::pow(n, -alpha_rate);
  std::normal_distribution<double> noise(b * sd, sd);
  auto out = q_true;
  for (auto& row : out)
    for (double& v : row) {
      if (!(v > 0.0 && v < 1.0)) throw DomainError("perturb_q needs q components in (0, 1)");
      v = expit(logit(v) + noise(rng));
    }
  return out;
}

// Realized remainder psi_os(q-hat) - psi^{-1} - Q_N(phi) with phi built from
// the true q's. psi^{-1} cancels, leaving Q_N(phi-hat - phi) on uncentered
// influence values.
inline double remainder_diagnostic(const ObservedDataset& data, const ListSubset& subset, const QEstimates& q_true,
                                   const QEstimates& q_hat) {
  const auto truth = one_step_psi_inv(data, subset, q_true);
  const auto est = one_step_psi_inv(data, subset, q_hat);
  CompensatedSum acc;
  for (std::size_t i = 0; i < truth.size(); ++i) acc.add(est.values[i] - truth.values[i]);
  return acc.value() / static_cast<double>(truth.size());
}

// Same remainder with the profile drawn from its true conditional law and
// integrated out exactly, under Q-weights over covariate units:
//   sum_i w_i [ (1/gamma-hat_i - 1) sum_y (-1)^(|y|+1) q_y / q-hat_y - (1/gamma_i - 1) ] / sum_i w_i
inline double expected_remainder(const std::vector<std::vector<double>>& q_true,
                                 const std::vector<std::vector<double>>& q_hat, std::span<const double> weights) {
  if (q_true.size() != q_hat.size() || q_true.size() != weights.size())
    throw DomainError("remainder inputs differ in length");
  CompensatedSum num;
  CompensatedSum den;
  for (std::size_t i = 0; i < q_true.size(); ++i) {
    const double r_hat = gamma_inverse(q_hat[i]) - 1.0;
    const double r = gamma_inverse(q_true[i]) - 1.0;
    double ratio = 0.0;
    for (std::size_t y = 0; y < q_true[i].size(); ++y) ratio += profile_sign(y) * q_true[i][y] / q_hat[i][y];
    num.add(weights[i] * (r_hat * ratio - r));
    den.add(weights[i]);
  }
  return num.value() / den.value();
}

struct StudyCell {
  Method estimator = Method::one_step;
  double b = 0.0;
  double alpha_rate = 0.0;
  std::int64_t n_true = 0;
  double psi_target = 0.0;
  int reps = 0;
  double mean_abs_bias = 0.0;
  double mse = 0.0;
  double coverage_95 = 0.0;
  double mean_ci_width = 0.0;
};

struct StudyResult {
  std::vector<StudyCell> cells;  // grid order, plug-in row then one-step row
  int reps_used = 0;

  const StudyCell& find(Method m, double b, double alpha_rate) const {
    for (const auto& c : cells)
      if (c.estimator == m && c.b == b && c.alpha_rate == alpha_rate) return c;
    throw ConfigError("no study cell for the requested estimator/b/alpha_rate");
  }
};

// One replication of one grid cell: plug-in and one-step estimates with the
// one-step sigma used for both intervals.
struct ReplicationOutcome {
  double plug_in = 0.0;
  double one_step = 0.0;
  double sigma = 0.0;
  std::size_t observed = 0;
  double truth = 0.0;
};

inline ReplicationOutcome run_replication(const SimulationConfig& cfg, const Population& pop, std::uint64_t rep) {
  const std::uint64_t tag = std::hash<double>{}(cfg.b) * 31U ^ std::hash<double>{}(cfg.alpha_rate);
  auto rng = stream_rng(cfg.base_seed, rep, tag | 1U);
  const double sd = std::pow(static_cast<double>(cfg.n_true), -cfg.alpha_rate);
  std::normal_distribution<double> noise(cfg.b * sd, sd);

  std::vector<std::int64_t> ids;
  std::vector<QVector> q_hat;
  std::vector<double> row(pop.profiles);
  for (std::size_t i = 0; i < pop.observed_index.size(); ++i) {
    const auto q = pop.q_of(pop.observed_index[i]);
    for (std::size_t y = 0; y < row.size(); ++y) row[y] = expit(logit(q[y]) + noise(rng));
    ids.push_back(pop.observed[i].id);
    q_hat.push_back(QVector::truncated(row, 0.0));
  }
  const auto estimates = QEstimates::from_vectors(std::move(ids), std::move(q_hat), 0.0);
  const auto os = one_step_psi_inv(pop.observed, cfg.subset(), estimates);
  return {plug_in_psi_inv(estimates), os.center, os.sigma(), pop.observed.size(), pop.truth.psi_inv};
}

// Replications run on worker threads; each derives its randomness from
// (base_seed, rep), so results do not depend on scheduling. Grid cells that
// share a population configuration and seed reuse the same population per
// replication.
inline StudyResult run_study(const std::vector<SimulationConfig>& grid, unsigned threads = 0) {
  if (grid.empty()) throw ConfigError("simulation grid is empty");
  for (const auto& c : grid) c.validate();
  int max_reps = 0;
  for (const auto& c : grid) max_reps = std::max(max_reps, c.reps);

  using PopKey = std::tuple<std::int64_t, double, int, int, std::uint64_t, double>;
  auto key_of = [](const SimulationConfig& c) {
    return PopKey{c.n_true, c.psi_target, c.lists, c.subset_size, c.base_seed, c.q_floor_true};
  };

  std::vector<std::vector<ReplicationOutcome>> outcomes(static_cast<std::size_t>(max_reps),
                                                        std::vector<ReplicationOutcome>(grid.size()));
  std::atomic<int> next{0};
  std::vector<std::string> failures(static_cast<std::size_t>(max_reps));
  auto worker = [&] {
    for (int rep = next++; rep < max_reps; rep = next++) {
      try {
        std::map<PopKey, Population> cache;
        for (std::size_t c = 0; c < grid.size(); ++c) {
          if (rep >= grid[c].reps) continue;
          const auto key = key_of(grid[c]);
          auto it = cache.find(key);
          if (it == cache.end())
            it = cache.emplace(key, generate_population(grid[c], static_cast<std::uint64_t>(rep))).first;
          outcomes[static_cast<std::size_t>(rep)][c] =
              run_replication(grid[c], it->second, static_cast<std::uint64_t>(rep));
        }
      } catch (const std::exception& e) {
        failures[static_cast<std::size_t>(rep)] = e.what();
      }
    }
  };
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(max_reps));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& f : failures)
    if (!f.empty()) throw Error("replication failed: " + f);

  const double z = two_sided_z(0.05);
  StudyResult result;
  result.reps_used = max_reps;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (Method m : {Method::plug_in, Method::one_step}) {
      CompensatedSum abs_bias, sq, covered, width;
      for (int rep = 0; rep < grid[c].reps; ++rep) {
        const auto& o = outcomes[static_cast<std::size_t>(rep)][c];
        const double est = m == Method::plug_in ? o.plug_in : o.one_step;
        const double err = est - o.truth;
        const double half = z * o.sigma / std::sqrt(static_cast<double>(o.observed));
        abs_bias.add(std::fabs(err));
        sq.add(err * err);
        covered.add(std::fabs(err) <= half ? 1.0 : 0.0);
        width.add(2.0 * half);
      }
      const double r = grid[c].reps;
      result.cells.push_back({m, grid[c].b, grid[c].alpha_rate, grid[c].n_true, grid[c].psi_target, grid[c].reps,
                              abs_bias.value() / r, sq.value() / r, covered.value() / r, width.value() / r});
    }
  }
  return result;
}

// Default grid: b in {1, 10} x alpha_rate in {0.1, ..., 0.5}.
inline std::vector<SimulationConfig> default_study_grid(const SimulationConfig& base) {
  std::vector<SimulationConfig> grid;
  for (double b : {1.0, 10.0})
    for (double a : {0.1, 0.2, 0.3, 0.4, 0.5}) {
      auto c = base;
      c.b = b;
      c.alpha_rate = a;
      grid.push_back(c);
    }
  return grid;
}

// ---------------------------------------------------------------------------
// Covariate-driven K-list populations with planted truth.

struct ListPopulationConfig {
  std::int64_t n_true = 20000;
  int lists = 7;
  // log odds ratio between lists 1 and 2 among units missed by lists 3..K;
  // this is exactly alpha_1(X) of the two-list sub-table.
  double planted_interaction = 0.0;
  std::uint64_t seed = 1;
};

// Exact per-cell law of a covariate population: cell weights under P and the
// full 2^K profile distribution in each cell.
struct ListPopulationLaw {
  std::vector<CovariateColumn> schema;
  std::vector<std::vector<double>> cell_codes;  // covariate codes per cell
  std::vector<double> cell_weight;              // P(X = cell)
  std::vector<std::vector<double>> profile_probs;  // P(Y = y | X = cell), 2^K each

  double gamma(std::size_t cell) const { return 1.0 - profile_probs[cell][0]; }
  double psi() const {
    double acc = 0.0;
    for (std::size_t c = 0; c < cell_weight.size(); ++c) acc += cell_weight[c] * gamma(c);
    return acc;
  }
  // Exact q's of the subset's suffix-zero profiles in a cell.
  std::vector<double> q(std::size_t cell, const ListSubset& subset) const {
    std::vector<double> out(subset.profile_count());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = profile_probs[cell][subset.profile_at(i).mask()] / gamma(cell);
    return out;
  }
};

inline ListPopulationLaw list_population_law(const ListPopulationConfig& cfg) {
  if (cfg.lists < 2 || cfg.lists > 12) throw ConfigError("covariate population supports 2..12 lists");
  ListPopulationLaw law;
  law.schema = {{"sex", ColumnKind::categorical, {"female", "male"}},
                {"age", ColumnKind::categorical, {"0-29", "30-59", "60+"}},
                {"region", ColumnKind::categorical, {"north", "south"}}};
  // Two large lists, the rest small; effects vary by list so lists are
  // heterogeneous but independent given covariates.
  auto logit_capture = [&](int k, int sex, int age, int region) {
    const double base = k == 0 ? 0.1 : k == 1 ? -0.1 : -2.0 - 0.15 * (k - 2);
    const double sex_eff = (k % 2 == 0 ? 0.3 : -0.25) * sex;
    const double age_eff = (k == 1 ? -0.35 : 0.2 + 0.05 * k) * age;
    const double region_eff = (k % 3 == 0 ? -0.4 : 0.3) * region;
    return base + sex_eff + age_eff + region_eff;
  };
  const std::size_t cells_k = std::size_t{1} << cfg.lists;
  const double cell_mass[3] = {0.40, 0.35, 0.25};
  for (int sex = 0; sex < 2; ++sex)
    for (int age = 0; age < 3; ++age)
      for (int region = 0; region < 2; ++region) {
        law.cell_codes.push_back({double(sex), double(age), double(region)});
        law.cell_weight.push_back(0.5 * cell_mass[age] * (region == 0 ? 0.55 : 0.45));
        std::vector<double> p(cells_k);
        double total = 0.0;
        for (std::size_t y = 0; y < cells_k; ++y) {
          double v = 1.0;
          for (int k = 0; k < cfg.lists; ++k) {
            const double pk = expit(logit_capture(k, sex, age, region));
            v *= (y >> k & 1U) ? pk : 1.0 - pk;
          }
          if ((y >> 2) == 0 && (y & 3U) == 3U) v *= std::exp(cfg.planted_interaction);
          p[y] = v;
          total += v;
        }
        for (double& v : p) v /= total;
        law.profile_probs.push_back(std::move(p));
      }
  return law;
}

struct ListPopulation {
  ObservedDataset observed;
  ListPopulationLaw law;
  std::int64_t n_true = 0;
};

inline ListPopulation generate_list_population(const ListPopulationConfig& cfg) {
  if (cfg.n_true < 1) throw ConfigError("n_true must be >= 1");
  ListPopulation pop;
  pop.law = list_population_law(cfg);
  pop.n_true = cfg.n_true;
  std::mt19937_64 rng(cfg.seed);
  std::discrete_distribution<std::size_t> pick_cell(pop.law.cell_weight.begin(), pop.law.cell_weight.end());
  std::vector<std::discrete_distribution<std::uint64_t>> pick_profile;
  for (const auto& p : pop.law.profile_probs) pick_profile.emplace_back(p.begin(), p.end());
  std::vector<ObservedUnit> units;
  for (std::int64_t i = 0; i < cfg.n_true; ++i) {
    const auto cell = pick_cell(rng);
    const auto y = pick_profile[cell](rng);
    if (y == 0) continue;
    units.push_back({i + 1, pop.law.cell_codes[cell], CaptureProfile(y, cfg.lists)});
  }
  pop.observed = ObservedDataset(cfg.lists, pop.law.schema, std::move(units));
  return pop;
}

}  // namespace popsize
