#pragma once

// Delimited-text ingestion, run configuration, and table/JSON emission.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "popsize/dataset.hpp"
#include "popsize/error.hpp"
#include "popsize/learners.hpp"

namespace popsize {

using json = nlohmann::ordered_json;

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Splits one record; double quotes delimit fields and "" escapes a quote.
inline std::vector<std::string> split_record(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delimiter) {
      fields.push_back(trim(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end || s.empty()) return std::nullopt;
  return v;
}

struct CovariateSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
};

// "sex:cat", "age:num", "region" (categorical when the kind is omitted)
inline CovariateSpec parse_covariate_spec(const std::string& text) {
  const auto colon = text.find(':');
  CovariateSpec spec{trim(text.substr(0, colon)), ColumnKind::categorical};
  if (spec.name.empty()) throw ConfigError("empty covariate name");
  if (colon != std::string::npos) {
    const auto kind = trim(text.substr(colon + 1));
    if (kind == "num" || kind == "numeric")
      spec.kind = ColumnKind::numeric;
    else if (kind == "cat" || kind == "categorical")
      spec.kind = ColumnKind::categorical;
    else
      throw ConfigError("unknown covariate kind '" + kind + "' for '" + spec.name + "'");
  }
  return spec;
}

inline std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  for (auto& f : split_record(text, sep)) out.push_back(f);
  return out;
}

inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  for (const auto& f : split_list(text)) {
    const auto v = parse_number(f);
    if (!v) throw ConfigError("bad number '" + f + "' in grid");
    out.push_back(*v);
  }
  return out;
}

struct SimulateOptions {
  int reps = 200;
  std::int64_t n_true = 10000;
  double psi_target = 0.7;
  int subset_size = 3;
  double q_floor_true = 0.05;
  std::vector<double> b_grid{1.0, 10.0};
  std::vector<double> rate_grid{0.1, 0.2, 0.3, 0.4, 0.5};
};

/// Every field mirrors a CLI flag; see README for the schema.
struct RunConfig {
  std::string input;
  char delimiter = ',';
  std::string id_column;                 // empty: 1-based data row number
  std::vector<std::string> lists;        // K indicator columns
  std::vector<std::string> subset;       // J list names; empty: all lists
  std::vector<CovariateSpec> covariates;
  LearnerSpec learner;
  int folds = 2;
  std::vector<double> q_floors{0.01};
  std::vector<double> delta_grid;
  std::vector<double> epsilon_grid{0.01};
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string out;
  SimulateOptions simulate;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    for (double f : q_floors)
      if (!(f >= 0.0 && f < 1.0)) throw ConfigError("q-floor values must lie in [0, 1)");
    for (double d : delta_grid)
      if (!(d >= 0.0)) throw ConfigError("delta values must be >= 0");
    for (double e : epsilon_grid)
      if (!(e > 0.0 && e < 1.0)) throw ConfigError("epsilon values must lie in (0, 1)");
    for (const auto& s : subset)
      if (std::find(lists.begin(), lists.end(), s) == lists.end())
        throw ConfigError("subset list '" + s + "' is not among the list columns");
    learner.validate();
  }

  ListSubset list_subset() const {
    if (lists.empty()) throw ConfigError("no list columns configured");
    if (subset.empty()) return ListSubset::all(static_cast<int>(lists.size()));
    std::vector<int> idx;
    for (const auto& s : subset) {
      const auto it = std::find(lists.begin(), lists.end(), s);
      if (it == lists.end()) throw ConfigError("subset list '" + s + "' is not among the list columns");
      idx.push_back(static_cast<int>(it - lists.begin()));
    }
    return ListSubset(static_cast<int>(lists.size()), std::move(idx));
  }

  json to_json() const {
    json covs = json::array();
    for (const auto& c : covariates)
      covs.push_back(c.name + (c.kind == ColumnKind::numeric ? ":num" : ":cat"));
    return json{{"input", input},
                {"delimiter", std::string(1, delimiter)},
                {"id_column", id_column},
                {"lists", lists},
                {"subset", subset},
                {"covariates", covs},
                {"learner", learner.describe()},
                {"learner_seed", learner.seed},
                {"folds", folds},
                {"q_floor", q_floors},
                {"delta_grid", delta_grid},
                {"epsilon_grid", epsilon_grid},
                {"alpha", alpha},
                {"seed", seed},
                {"out", out},
                {"simulate",
                 {{"reps", simulate.reps},
                  {"n_true", simulate.n_true},
                  {"psi_target", simulate.psi_target},
                  {"subset_size", simulate.subset_size},
                  {"q_floor_true", simulate.q_floor_true},
                  {"b_grid", simulate.b_grid},
                  {"rate_grid", simulate.rate_grid}}}};
  }

  // Applies keys present in `j` over the current values.
  void merge_json(const json& j) {
    auto grid = [](const json& v) {
      if (v.is_array()) return v.get<std::vector<double>>();
      return std::vector<double>{v.get<double>()};
    };
    try {
      for (const auto& [key, v] : j.items()) {
        if (key == "input") input = v.get<std::string>();
        else if (key == "delimiter") {
          const auto d = v.get<std::string>();
          if (d.size() != 1) throw ConfigError("delimiter must be one character");
          delimiter = d[0];
        } else if (key == "id_column") id_column = v.get<std::string>();
        else if (key == "lists") lists = v.get<std::vector<std::string>>();
        else if (key == "subset") subset = v.get<std::vector<std::string>>();
        else if (key == "covariates") {
          covariates.clear();
          for (const auto& c : v) covariates.push_back(parse_covariate_spec(c.get<std::string>()));
        } else if (key == "learner") {
          const auto seed_keep = learner.seed;
          learner = LearnerSpec::parse(v.get<std::string>());
          learner.seed = seed_keep;
        } else if (key == "learner_seed") learner.seed = v.get<std::uint64_t>();
        else if (key == "folds") folds = v.get<int>();
        else if (key == "q_floor") q_floors = grid(v);
        else if (key == "delta_grid") delta_grid = grid(v);
        else if (key == "epsilon_grid") epsilon_grid = grid(v);
        else if (key == "alpha") alpha = v.get<double>();
        else if (key == "seed") seed = v.get<std::uint64_t>();
        else if (key == "out") out = v.get<std::string>();
        else if (key == "simulate") {
          for (const auto& [sk, sv] : v.items()) {
            if (sk == "reps") simulate.reps = sv.get<int>();
            else if (sk == "n_true") simulate.n_true = sv.get<std::int64_t>();
            else if (sk == "psi_target") simulate.psi_target = sv.get<double>();
            else if (sk == "subset_size") simulate.subset_size = sv.get<int>();
            else if (sk == "q_floor_true") simulate.q_floor_true = sv.get<double>();
            else if (sk == "b_grid") simulate.b_grid = grid(sv);
            else if (sk == "rate_grid") simulate.rate_grid = grid(sv);
            else throw ConfigError("unknown simulate config key '" + sk + "'");
          }
        } else {
          throw ConfigError("unknown config key '" + key + "'");
        }
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad config value: ") + e.what());
    }
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    RunConfig cfg;
    try {
      cfg.merge_json(json::parse(in));
    } catch (const json::parse_error& e) {
      throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return cfg;
  }
};

// FNV-1a over the canonical JSON echo of the configuration.
inline std::string config_fingerprint(const RunConfig& cfg) {
  const std::string text = cfg.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Reads the configured list and covariate columns. Categorical levels are
// the sorted distinct strings seen in the file.
inline ObservedDataset load_dataset(const std::string& path, const RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  if (cfg.lists.empty()) throw ConfigError("no list columns configured");
  std::string line;
  if (!std::getline(in, line)) throw DataError("input file '" + path + "' is empty");
  const auto header = split_record(line, cfg.delimiter);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("unknown column", std::nullopt, name);
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> list_cols;
  for (const auto& l : cfg.lists) list_cols.push_back(column(l));
  std::vector<std::size_t> cov_cols;
  for (const auto& c : cfg.covariates) cov_cols.push_back(column(c.name));
  const std::optional<std::size_t> id_col =
      cfg.id_column.empty() ? std::nullopt : std::optional<std::size_t>(column(cfg.id_column));

  struct RawRow {
    std::size_t row;
    std::int64_t id;
    std::uint64_t mask;
    std::vector<std::string> cov;
  };
  std::vector<RawRow> raw;
  std::vector<std::size_t> zero_rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line, cfg.delimiter);
    if (fields.size() != header.size())
      throw DataError("malformed row: expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()),
                      row);
    RawRow r{row, static_cast<std::int64_t>(row), 0, {}};
    for (std::size_t k = 0; k < list_cols.size(); ++k) {
      const auto& f = fields[list_cols[k]];
      if (f == "1")
        r.mask |= std::uint64_t{1} << k;
      else if (f != "0")
        throw DataError("list indicator must be 0 or 1, found '" + f + "'", row, cfg.lists[k]);
    }
    if (r.mask == 0) zero_rows.push_back(row);
    if (id_col) {
      const auto v = parse_number(fields[*id_col]);
      if (!v || *v != static_cast<double>(static_cast<std::int64_t>(*v)))
        throw DataError("unit id must be an integer", row, cfg.id_column);
      r.id = static_cast<std::int64_t>(*v);
    }
    for (std::size_t c = 0; c < cov_cols.size(); ++c) {
      const auto& f = fields[cov_cols[c]];
      if (f.empty() || f == "NA") throw DataError("missing covariate value", row, cfg.covariates[c].name);
      r.cov.push_back(f);
    }
    raw.push_back(std::move(r));
  }
  if (!zero_rows.empty()) {
    std::string rows;
    for (std::size_t i = 0; i < zero_rows.size() && i < 20; ++i) rows += (i ? "," : "") + std::to_string(zero_rows[i]);
    if (zero_rows.size() > 20) rows += ",...";
    throw DataError(std::to_string(zero_rows.size()) + " row(s) with all-zero list indicators: rows " + rows,
                    zero_rows.front());
  }

  std::vector<CovariateColumn> schema;
  std::vector<std::map<std::string, double>> codes(cfg.covariates.size());
  for (std::size_t c = 0; c < cfg.covariates.size(); ++c) {
    CovariateColumn col{cfg.covariates[c].name, cfg.covariates[c].kind, {}};
    if (col.kind == ColumnKind::categorical) {
      std::set<std::string> levels;
      for (const auto& r : raw) levels.insert(r.cov[c]);
      col.levels.assign(levels.begin(), levels.end());
      for (std::size_t l = 0; l < col.levels.size(); ++l) codes[c][col.levels[l]] = static_cast<double>(l);
    }
    schema.push_back(std::move(col));
  }

  std::vector<ObservedUnit> units;
  units.reserve(raw.size());
  for (const auto& r : raw) {
    ObservedUnit u{r.id, {}, CaptureProfile(r.mask, static_cast<int>(cfg.lists.size()))};
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (schema[c].kind == ColumnKind::categorical) {
        u.covariates.push_back(codes[c].at(r.cov[c]));
      } else {
        const auto v = parse_number(r.cov[c]);
        if (!v || !std::isfinite(*v)) throw DataError("non-numeric value '" + r.cov[c] + "'", r.row, schema[c].name);
        u.covariates.push_back(*v);
      }
    }
    units.push_back(std::move(u));
  }
  return ObservedDataset(static_cast<int>(cfg.lists.size()), std::move(schema), std::move(units), cfg.lists);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

  void write(std::ostream& out, char delimiter = ',') const {
    auto emit = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? std::string(1, delimiter) : "") << r[i];
      out << '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
  }

  void write(const std::filesystem::path& path, char delimiter = ',') const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    write(out, delimiter);
  }
};

// Inverse of load_dataset: id, list columns, then covariates (categorical
// as level strings).
inline void write_dataset(const std::filesystem::path& path, const ObservedDataset& data,
                          const std::string& id_column = "id") {
  Table t;
  t.header.push_back(id_column);
  for (const auto& l : data.list_names()) t.header.push_back(l);
  for (const auto& c : data.schema()) t.header.push_back(c.name);
  for (const auto& u : data.units()) {
    std::vector<std::string> row{std::to_string(u.id)};
    for (int k = 0; k < data.lists(); ++k) row.push_back(u.profile[k] ? "1" : "0");
    for (std::size_t c = 0; c < data.schema().size(); ++c) {
      const auto& col = data.schema()[c];
      row.push_back(col.kind == ColumnKind::categorical
                        ? col.levels[static_cast<std::size_t>(std::lround(u.covariates[c]))]
                        : format_double(u.covariates[c]));
    }
    t.add(std::move(row));
  }
  t.write(path);
}

inline void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace popsize
