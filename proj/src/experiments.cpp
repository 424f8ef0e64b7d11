#include "tarnet/experiments.hpp"

#include "tarnet/errors.hpp"
#include "tarnet/estimators.hpp"
#include "tarnet/kernels.hpp"
#include "tarnet/model.hpp"
#include "tarnet/pipeline.hpp"
#include "tarnet/random.hpp"
#include "tarnet/var_process.hpp"

#include <omp.h>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

namespace tarnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t u64(Index v) { return static_cast<std::uint64_t>(v); }

// Runs body(i) for i in [0, count) across replication workers; the first
// failure (in index order) is rethrown after all workers finish.
template <class Body>
void parallel_tasks(long count, Body body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  const int configured = kernels::configured_threads();
  const int threads = configured > 0 ? configured : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::string> split_list(const std::string& value, const char* sep = ",") {
  std::vector<std::string> parts;
  const std::string trimmed = boost::trim_copy(value);
  if (trimmed.empty()) return parts;
  boost::split(parts, trimmed, boost::is_any_of(sep));
  for (auto& p : parts) boost::trim(p);
  return parts;
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  try {
    return boost::lexical_cast<T>(boost::trim_copy(text));
  } catch (const boost::bad_lexical_cast&) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string v = boost::to_lower_copy(boost::trim_copy(text));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& part : split_list(text)) out.push_back(parse_value<T>(key, part));
  return out;
}

Ranks3 parse_ranks(const std::string& key, const std::string& text) {
  const auto v = parse_list<Index>(key, text);
  if (v.size() != 3) throw std::invalid_argument("config key '" + key + "': ranks need three values r1,r2,r3");
  return {v[0], v[1], v[2]};
}

TarArch arch_for(const std::string& model) {
  if (model == "tar") return TarArch::tar;
  if (model == "tar2") return TarArch::tar2;
  if (model == "ltar") return TarArch::ltar;
  throw std::invalid_argument("unknown network '" + model + "'");
}

ResultRecord base_record(const ExperimentConfig& cfg, const std::string& dgp, Index n, Index p, Ranks3 ranks,
                         double ratio, Index t, int rep) {
  ResultRecord r;
  r.experiment = cfg.experiment_id();
  r.dgp = dgp;
  r.n = n;
  r.p = p;
  r.ranks = ranks;
  r.ratio = ratio;
  r.t = t;
  r.replication = rep;
  r.error = kNaN;
  r.l2 = kNaN;
  r.rmse = kNaN;
  r.mae = kNaN;
  r.final_loss = kNaN;
  return r;
}

void fill_fit(ResultRecord& r, const FitReport& fit) {
  r.epochs = fit.epochs_run;
  r.final_loss = fit.final_loss;
  r.converged = fit.converged;
  r.non_unique = fit.non_unique;
  r.restarts = fit.restarts;
  r.wall_seconds = fit.wall_seconds;
  if (fit.diverged) r.diagnostic = "non-finite loss encountered";
}

void fill_metrics(ResultRecord& r, const Metrics& m) {
  r.l2 = m.l2;
  r.rmse = m.rmse;
  r.mae = m.mae;
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string report_path(const std::string& dir, const std::string& id, std::uint64_t seed, const std::string& suffix) {
  return (std::filesystem::path(dir) / (id + "_seed" + std::to_string(seed) + "_" + suffix)).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report file '" + path + "'");
  return out;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::sample_complexity: return "sample-complexity";
    case ExperimentKind::dgp_comparison: return "dgp-comparison";
    case ExperimentKind::macro: return "macro";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "sample-complexity") return ExperimentKind::sample_complexity;
  if (s == "dgp-comparison") return ExperimentKind::dgp_comparison;
  if (s == "macro") return ExperimentKind::macro;
  throw std::invalid_argument("unknown experiment kind '" + s + "'");
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::sample_complexity: break;
    case ExperimentKind::dgp_comparison:
      c.n_list = {25};
      c.p_list = {3};
      c.ranks_list = {{2, 2, 2}};
      break;
    case ExperimentKind::macro:
      c.p_list = {4};
      c.ranks_list = {{4, 3, 2}};
      c.lr_rank = 4;
      c.replications = 1;
      c.models = {"tar2", "tar", "ltar", "mlp1", "mlp0"};
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  training.validate();
  if (replications < 1) throw std::invalid_argument("replications must be at least 1");
  if (p_list.empty() || ranks_list.empty()) throw std::invalid_argument("p and ranks lists must be nonempty");
  for (Index p : p_list)
    if (p < 1) throw std::invalid_argument("lag orders must be positive");
  for (const Ranks3& r : ranks_list)
    if (r.p1 < 1 || r.p2 < 1 || r.p3 < 1) throw std::invalid_argument("ranks must be positive");
  if (lr_rank < 0) throw std::invalid_argument("lr_rank must be nonnegative");
  switch (kind) {
    case ExperimentKind::sample_complexity:
      if (n_list.empty() || ratios.empty() || estimators.empty()) {
        throw std::invalid_argument("n, ratios and estimators must be nonempty");
      }
      for (double r : ratios)
        if (!(r > 0.0)) throw std::invalid_argument("ratios must be positive");
      for (const auto& e : estimators)
        if (e != "ols" && e != "lr" && e != "ltr") throw std::invalid_argument("unknown estimator '" + e + "'");
      if (burn_in < 0) throw std::invalid_argument("burn_in must be nonnegative");
      break;
    case ExperimentKind::dgp_comparison:
      if (n_list.empty() || lengths.empty() || models.empty() || dgps.empty()) {
        throw std::invalid_argument("n, lengths, models and dgps must be nonempty");
      }
      for (const auto& m : models) arch_for(m);
      for (const auto& g : dgps)
        if (g != "linear" && g != "nonlinear") throw std::invalid_argument("unknown dgp '" + g + "'");
      break;
    case ExperimentKind::macro:
      if (data_path.empty()) throw std::invalid_argument("macro experiment needs grid.data");
      for (const auto& m : models)
        if (m != "mlp0" && m != "mlp1") arch_for(m);
      if (standardize_range != "all" && standardize_range != "train" && standardize_range != "none") {
        throw std::invalid_argument("standardize must be all, train or none");
      }
      if (train_len < 1 || test_len < 1) throw std::invalid_argument("train_len and test_len must be positive");
      break;
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "grid.master_seed", "grid.replications", "grid.n",         "grid.p",          "grid.ranks",
      "grid.ratios",      "grid.estimators",   "grid.lr_rank",   "grid.burn_in",    "grid.dgps",
      "grid.lengths",     "grid.models",       "grid.data",      "grid.data_has_codes", "grid.train_len",
      "grid.test_len",    "grid.standardize",  "grid.bias",      "grid.activation", "grid.activate_f1",
      "training.learning_rate", "training.momentum", "training.loss_drop_tolerance", "training.max_epochs",
      "training.init_scale", "training.divergence_restarts", "output.dir", "output.id"};
  return keys;
}

void apply_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "grid.master_seed") c.master_seed = parse_value<std::uint64_t>(key, value);
  else if (key == "grid.replications") c.replications = parse_value<int>(key, value);
  else if (key == "grid.n") c.n_list = parse_list<Index>(key, value);
  else if (key == "grid.p") c.p_list = parse_list<Index>(key, value);
  else if (key == "grid.ranks") {
    c.ranks_list.clear();
    for (const auto& triple : split_list(value, ";")) c.ranks_list.push_back(parse_ranks(key, triple));
  } else if (key == "grid.ratios") c.ratios = parse_list<double>(key, value);
  else if (key == "grid.estimators") c.estimators = split_list(value);
  else if (key == "grid.lr_rank") c.lr_rank = parse_value<Index>(key, value);
  else if (key == "grid.burn_in") c.burn_in = parse_value<Index>(key, value);
  else if (key == "grid.dgps") c.dgps = split_list(value);
  else if (key == "grid.lengths") c.lengths = parse_list<Index>(key, value);
  else if (key == "grid.models") c.models = split_list(value);
  else if (key == "grid.data") c.data_path = boost::trim_copy(value);
  else if (key == "grid.data_has_codes") c.data_has_codes = parse_bool(key, value);
  else if (key == "grid.train_len") c.train_len = parse_value<Index>(key, value);
  else if (key == "grid.test_len") c.test_len = parse_value<Index>(key, value);
  else if (key == "grid.standardize") c.standardize_range = boost::trim_copy(value);
  else if (key == "grid.bias") c.bias = parse_bool(key, value);
  else if (key == "grid.activation") c.activation = activation_from_string(boost::trim_copy(value));
  else if (key == "grid.activate_f1") c.activate_f1 = parse_bool(key, value);
  else if (key == "training.learning_rate") c.training.learning_rate = parse_value<double>(key, value);
  else if (key == "training.momentum") c.training.momentum = parse_value<double>(key, value);
  else if (key == "training.loss_drop_tolerance") c.training.loss_drop_tolerance = parse_value<double>(key, value);
  else if (key == "training.max_epochs") c.training.max_epochs = parse_value<long>(key, value);
  else if (key == "training.init_scale") c.training.init_scale = parse_value<double>(key, value);
  else if (key == "training.divergence_restarts") c.training.divergence_restarts = parse_value<int>(key, value);
  else if (key == "output.dir") c.output_dir = boost::trim_copy(value);
  else if (key == "output.id") c.id = boost::trim_copy(value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

ExperimentConfig load_experiment_config(const std::string& path, ExperimentKind kind,
                                        const std::map<std::string, std::string>& overrides) {
  ExperimentConfig c = ExperimentConfig::defaults(kind);
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) throw std::invalid_argument("config file '" + path + "' does not exist");
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw std::invalid_argument(std::string("cannot parse config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw std::invalid_argument("config entry '" + section + "' is outside a section");
      for (const auto& [key, value] : body) apply_config_value(c, section + "." + key, value.data());
    }
    // Relative data paths are taken relative to the config file.
    if (!c.data_path.empty() && std::filesystem::path(c.data_path).is_relative() &&
        !overrides.count("grid.data")) {
      const auto base = std::filesystem::path(path).parent_path();
      c.data_path = (base / c.data_path).lexically_normal().string();
    }
  }
  for (const auto& [key, value] : overrides) apply_config_value(c, key, value);
  c.validate();
  return c;
}

ExperimentResult run_sample_complexity(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Cell {
    Index n, p;
    Ranks3 ranks;
    double ratio;
    Index t;
    std::size_t truth;  // index into weights
  };
  std::vector<VarWeights> weights;
  std::vector<Cell> cells;
  std::vector<ResultRecord> skipped;
  std::vector<std::size_t> skipped_before;  // cell count when each skip occurred
  std::size_t model_index = 0;
  for (Index n : cfg.n_list) {
    for (Index p : cfg.p_list) {
      for (const Ranks3& ranks : cfg.ranks_list) {
        // One true tensor per (N, P, ranks), shared by all ratios.
        weights.push_back(generate_low_tucker_weights(n, p, ranks, 0.9, derive_seed(cfg.master_seed, {1, model_index})));
        for (double ratio : cfg.ratios) {
          const Index t = std::lround(static_cast<double>(n) / (ratio * ratio));
          if (t < p + 1) {
            ResultRecord r = base_record(cfg, "var", n, p, ranks, ratio, t, -1);
            r.skipped = true;
            r.diagnostic = "T=" + std::to_string(t) + " < P+1=" + std::to_string(p + 1);
            skipped.push_back(r);
            skipped_before.push_back(cells.size());
            continue;
          }
          cells.push_back({n, p, ranks, ratio, t, weights.size() - 1});
        }
        ++model_index;
      }
    }
  }

  const long reps = cfg.replications;
  const long tasks = static_cast<long>(cells.size()) * reps;
  std::vector<std::vector<ResultRecord>> slots(static_cast<std::size_t>(tasks));
  parallel_tasks(tasks, [&](long task) {
    const std::size_t c = static_cast<std::size_t>(task / reps);
    const int rep = static_cast<int>(task % reps);
    const Cell& cell = cells[c];
    const VarWeights& truth = weights[cell.truth];
    const std::uint64_t noise_seed = derive_seed(cfg.master_seed, {2, c, u64(rep)});
    const Matrix series = simulate_var(truth, NoiseSpec::identity(cell.n, noise_seed), cell.t, cfg.burn_in);
    const DesignPair d = build_design(series, cell.p, false);
    auto& out = slots[static_cast<std::size_t>(task)];
    for (std::size_t k = 0; k < cfg.estimators.size(); ++k) {
      const std::string& est = cfg.estimators[k];
      TrainConfig tc = cfg.training;
      tc.seed = derive_seed(cfg.master_seed, {3, c, u64(rep), k});
      FitReport fit;
      if (est == "ols") fit = fit_ols(d);
      else if (est == "lr") fit = fit_lr(d, cfg.lr_rank > 0 ? cfg.lr_rank : cell.ranks.p1, tc);
      else fit = fit_ltr(d, cell.ranks, tc);
      ResultRecord r = base_record(cfg, "var", cell.n, cell.p, cell.ranks, cell.ratio, cell.t, rep);
      r.estimator = est;
      r.seed = est == "ols" ? noise_seed : tc.seed;
      fill_fit(r, fit);
      r.error = estimation_error(fit, truth);
      out.push_back(std::move(r));
    }
  });

  // Merge by cell order, diagnostics in grid position.
  ExperimentResult res;
  std::size_t s = 0;
  for (std::size_t c = 0; c <= cells.size(); ++c) {
    while (s < skipped.size() && skipped_before[s] == c) res.records.push_back(skipped[s++]);
    if (c == cells.size()) break;
    for (long rep = 0; rep < reps; ++rep)
      for (auto& r : slots[c * static_cast<std::size_t>(reps) + static_cast<std::size_t>(rep)]) res.records.push_back(std::move(r));
  }
  return res;
}

ExperimentResult run_dgp_comparison(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Cell {
    std::string dgp;
    Index n, p;
    Ranks3 ranks;
    Index len;
  };
  std::vector<Cell> cells;
  for (const auto& dgp : cfg.dgps)
    for (Index n : cfg.n_list)
      for (Index p : cfg.p_list)
        for (const Ranks3& ranks : cfg.ranks_list)
          for (Index len : cfg.lengths) {
            if (len < p + 2) throw std::invalid_argument("sequence length " + std::to_string(len) + " too short for P=" + std::to_string(p));
            cells.push_back({dgp, n, p, ranks, len});
          }

  const long reps = cfg.replications;
  const long tasks = static_cast<long>(cells.size()) * reps;
  std::vector<std::vector<ResultRecord>> slots(static_cast<std::size_t>(tasks));
  parallel_tasks(tasks, [&](long task) {
    const std::size_t c = static_cast<std::size_t>(task / reps);
    const int rep = static_cast<int>(task % reps);
    const Cell& cell = cells[c];
    const std::uint64_t seq_seed = derive_seed(cfg.master_seed, {1, c, u64(rep)});
    // len training rows plus one held-out test row.
    const Index t_eff = cell.len + 1 - cell.p;
    Matrix series;
    std::optional<VarWeights> truth;
    if (cell.dgp == "linear") {
      truth = generate_low_tucker_weights(cell.n, cell.p, cell.ranks, 0.9, seq_seed);
      series = simulate_var(*truth, NoiseSpec::identity(cell.n, derive_seed(cfg.master_seed, {2, c, u64(rep)})), t_eff,
                            cfg.burn_in);
    } else {
      series = generate_nl_dgp(cell.n, cell.p, cell.ranks, t_eff, cfg.burn_in, seq_seed);
    }
    const DesignPair d = build_design(series.topRows(cell.len), cell.p, true);
    const Matrix truth_row = series.row(cell.len).transpose();
    auto& out = slots[static_cast<std::size_t>(task)];
    for (std::size_t k = 0; k < cfg.models.size(); ++k) {
      TrainConfig tc = cfg.training;
      tc.seed = derive_seed(cfg.master_seed, {3, c, u64(rep), k});
      const TarFit fit = train_tar(d, arch_for(cfg.models[k]), cell.ranks, tc, cfg.bias, cfg.activation, cfg.activate_f1);
      const Model m = make_tar_model(d, fit);
      const Matrix pred = rolling_forecast(m, series, cell.len, 1);
      ResultRecord r = base_record(cfg, cell.dgp, cell.n, cell.p, cell.ranks, 0.0, d.t(), rep);
      r.estimator = cfg.models[k];
      r.seed = tc.seed;
      fill_fit(r, fit.report);
      fill_metrics(r, evaluate(pred, truth_row));
      // only the linear net has a weight tensor to compare
      if (truth && cfg.models[k] == "ltar") r.error = estimation_error(fit.report, *truth);
      out.push_back(std::move(r));
    }
  });

  ExperimentResult res;
  for (auto& slot : slots)
    for (auto& r : slot) res.records.push_back(std::move(r));
  return res;
}

ExperimentResult run_macro_benchmark(const ExperimentConfig& cfg) {
  cfg.validate();
  Series raw = read_series_csv(cfg.data_path, cfg.data_has_codes);
  Series s = cfg.data_has_codes ? apply_transform(raw) : raw;
  s.validate();
  const Index p = cfg.p_list.front();
  const Ranks3 ranks = cfg.ranks_list.front();
  const Index n = s.cols();
  if (s.rows() < cfg.train_len + cfg.test_len) {
    throw DataError("macro data has " + std::to_string(s.rows()) + " usable rows; need train_len + test_len = " +
                    std::to_string(cfg.train_len + cfg.test_len) +
                    " (CSV: header of variable names, optional transform-code row, numeric rows)");
  }
  if (cfg.train_len <= p) throw DataError("train_len must exceed the lag order");
  if (ranks.p1 > n || ranks.p2 > n || ranks.p3 > p) {
    throw DataError("ranks (" + std::to_string(ranks.p1) + "," + std::to_string(ranks.p2) + "," +
                    std::to_string(ranks.p3) + ") exceed N=" + std::to_string(n) + " or P=" + std::to_string(p));
  }
  if (cfg.standardize_range == "all") standardize(s);
  else if (cfg.standardize_range == "train") standardize(s, 0, cfg.train_len);
  const Matrix& values = s.values;
  const DesignPair d = build_design(values.topRows(cfg.train_len), p, true);
  const Matrix truth = values.middleRows(cfg.train_len, cfg.test_len).transpose();
  const Index lr_rank = cfg.lr_rank > 0 ? cfg.lr_rank : ranks.p1;

  const long reps = cfg.replications;
  const long models = static_cast<long>(cfg.models.size());
  const long tasks = reps * models;
  std::vector<ResultRecord> records(static_cast<std::size_t>(tasks));
  std::vector<Matrix> preds(static_cast<std::size_t>(tasks));
  parallel_tasks(tasks, [&](long task) {
    const int rep = static_cast<int>(task / models);
    const std::size_t k = static_cast<std::size_t>(task % models);
    const std::string& name = cfg.models[k];
    TrainConfig tc = cfg.training;
    tc.seed = derive_seed(cfg.master_seed, {3, 0, u64(rep), k});
    ResultRecord r = base_record(cfg, "data", n, p, ranks, 0.0, d.t(), rep);
    r.estimator = name;
    Model m;
    if (name == "mlp0") {
      const FitReport fit = fit_ols(d);
      m = make_linear_model(ModelKind::ols, d, fit);
      fill_fit(r, fit);
      r.ranks = {0, 0, 0};
    } else if (name == "mlp1") {
      const FitReport fit = fit_lr(d, lr_rank, tc);
      m = make_linear_model(ModelKind::lr, d, fit);
      fill_fit(r, fit);
      r.ranks = {lr_rank, 0, 0};
      r.seed = tc.seed;
    } else {
      const TarFit fit = train_tar(d, arch_for(name), ranks, tc, cfg.bias, cfg.activation, cfg.activate_f1);
      m = make_tar_model(d, fit);
      fill_fit(r, fit.report);
      r.seed = tc.seed;
    }
    Matrix pr = rolling_forecast(m, values, cfg.train_len, cfg.test_len);
    fill_metrics(r, evaluate(pr, truth));
    records[static_cast<std::size_t>(task)] = std::move(r);
    preds[static_cast<std::size_t>(task)] = std::move(pr);
  });

  ExperimentResult res;
  res.records = std::move(records);
  // Traces for the first replication.
  for (long k = 0; k < models; ++k) {
    const Matrix& pr = preds[static_cast<std::size_t>(k)];
    for (Index i = 0; i < n; ++i)
      for (Index step = 0; step < cfg.test_len; ++step)
        res.traces.push_back({cfg.models[static_cast<std::size_t>(k)], step, s.names[static_cast<std::size_t>(i)],
                              truth(i, step), pr(i, step)});
  }
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::sample_complexity: return run_sample_complexity(cfg);
    case ExperimentKind::dgp_comparison: return run_dgp_comparison(cfg);
    case ExperimentKind::macro: return run_macro_benchmark(cfg);
  }
  throw std::invalid_argument("unknown experiment kind");
}

std::vector<AggregateCell> aggregate(const std::vector<ResultRecord>& records) {
  if (records.empty()) throw std::invalid_argument("cannot aggregate an empty record set");
  std::vector<AggregateCell> cells;
  std::vector<std::vector<const ResultRecord*>> members;
  auto same = [](const AggregateCell& c, const ResultRecord& r) {
    return c.experiment == r.experiment && c.dgp == r.dgp && c.n == r.n && c.p == r.p && c.ranks == r.ranks &&
           c.ratio == r.ratio && c.t == r.t && c.estimator == r.estimator;
  };
  for (const auto& r : records) {
    if (r.skipped) continue;
    std::size_t i = 0;
    while (i < cells.size() && !same(cells[i], r)) ++i;
    if (i == cells.size()) {
      AggregateCell c;
      c.experiment = r.experiment;
      c.dgp = r.dgp;
      c.n = r.n;
      c.p = r.p;
      c.ranks = r.ranks;
      c.ratio = r.ratio;
      c.t = r.t;
      c.estimator = r.estimator;
      cells.push_back(c);
      members.emplace_back();
    }
    members[i].push_back(&r);
  }
  if (cells.empty()) throw std::invalid_argument("every record is a skipped cell; nothing to aggregate");

  using Getter = double (*)(const ResultRecord&);
  const std::vector<std::pair<std::string, Getter>> fields{
      {"error", [](const ResultRecord& r) { return r.error; }},
      {"l2", [](const ResultRecord& r) { return r.l2; }},
      {"rmse", [](const ResultRecord& r) { return r.rmse; }},
      {"mae", [](const ResultRecord& r) { return r.mae; }},
      {"epochs", [](const ResultRecord& r) { return static_cast<double>(r.epochs); }}};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    AggregateCell& c = cells[i];
    c.count = static_cast<Index>(members[i].size());
    for (const ResultRecord* r : members[i]) c.non_unique += r->non_unique ? 1 : 0;
    for (const auto& [name, get] : fields) {
      double sum = 0.0;
      Index k = 0;
      for (const ResultRecord* r : members[i]) {
        const double v = get(*r);
        if (std::isfinite(v)) {
          sum += v;
          ++k;
        }
      }
      if (k == 0) continue;
      Stat st;
      st.count = k;
      st.mean = sum / static_cast<double>(k);
      if (k > 1) {
        double ss = 0.0;
        for (const ResultRecord* r : members[i]) {
          const double v = get(*r);
          if (std::isfinite(v)) ss += (v - st.mean) * (v - st.mean);
        }
        st.se = std::sqrt(ss / static_cast<double>(k - 1)) / std::sqrt(static_cast<double>(k));
      }
      c.metrics[name] = st;
    }
  }
  return cells;
}

std::vector<std::string> record_columns() {
  return {"experiment", "dgp",   "n",     "p",          "r1",         "r2",        "r3",       "ratio",
          "t",          "replication", "estimator", "error", "l2", "rmse", "mae", "epochs",
          "restarts",   "final_loss", "converged", "non_unique", "skipped", "diagnostic", "seed"};
}

void write_records_csv(const std::vector<ResultRecord>& records, std::ostream& out) {
  out << boost::join(record_columns(), ",") << '\n';
  for (const auto& r : records) {
    out << sanitize(r.experiment) << ',' << sanitize(r.dgp) << ',' << r.n << ',' << r.p << ',' << r.ranks.p1 << ','
        << r.ranks.p2 << ',' << r.ranks.p3 << ',' << fmt_double(r.ratio) << ',' << r.t << ',' << r.replication << ','
        << sanitize(r.estimator) << ',' << fmt_double(r.error) << ',' << fmt_double(r.l2) << ',' << fmt_double(r.rmse)
        << ',' << fmt_double(r.mae) << ',' << r.epochs << ',' << r.restarts << ',' << fmt_double(r.final_loss) << ',' << r.converged << ','
        << r.non_unique << ',' << r.skipped << ',' << sanitize(r.diagnostic) << ',' << r.seed << '\n';
  }
}

std::vector<ResultRecord> load_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open records file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != boost::join(record_columns(), ",")) {
    throw DataError("'" + path + "' does not start with the record header");
  }
  std::vector<ResultRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    boost::split(f, line, boost::is_any_of(","));
    if (f.size() != record_columns().size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(record_columns().size()) +
                      " fields");
    }
    try {
      ResultRecord r;
      std::size_t i = 0;
      auto num = [&](const std::string& s) { return std::strtod(s.c_str(), nullptr); };
      r.experiment = f[i++];
      r.dgp = f[i++];
      r.n = std::stol(f[i++]);
      r.p = std::stol(f[i++]);
      r.ranks.p1 = std::stol(f[i++]);
      r.ranks.p2 = std::stol(f[i++]);
      r.ranks.p3 = std::stol(f[i++]);
      r.ratio = num(f[i++]);
      r.t = std::stol(f[i++]);
      r.replication = std::stoi(f[i++]);
      r.estimator = f[i++];
      r.error = num(f[i++]);
      r.l2 = num(f[i++]);
      r.rmse = num(f[i++]);
      r.mae = num(f[i++]);
      r.epochs = std::stol(f[i++]);
      r.restarts = std::stoi(f[i++]);
      r.final_loss = num(f[i++]);
      r.converged = f[i++] == "1";
      r.non_unique = f[i++] == "1";
      r.skipped = f[i++] == "1";
      r.diagnostic = f[i++];
      r.seed = std::stoull(f[i++]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record");
    }
  }
  return out;
}

nlohmann::json aggregate_json(const std::vector<AggregateCell>& cells, const std::string& id, std::uint64_t seed) {
  nlohmann::json j;
  j["experiment"] = id;
  j["master_seed"] = seed;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json e;
    e["experiment"] = c.experiment;
    e["dgp"] = c.dgp;
    e["n"] = c.n;
    e["p"] = c.p;
    e["ranks"] = {c.ranks.p1, c.ranks.p2, c.ranks.p3};
    e["ratio"] = c.ratio;
    e["t"] = c.t;
    e["estimator"] = c.estimator;
    e["count"] = c.count;
    e["non_unique"] = c.non_unique;
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [name, st] : c.metrics) m[name] = {{"mean", st.mean}, {"se", st.se}, {"count", st.count}};
    e["metrics"] = std::move(m);
    arr.push_back(std::move(e));
  }
  j["cells"] = std::move(arr);
  return j;
}

ReportFiles emit_report(const ExperimentResult& result, const std::string& dir, const std::string& id,
                        std::uint64_t seed) {
  if (result.records.empty()) throw std::invalid_argument("refusing to write a report with no records");
  const std::vector<AggregateCell> cells = aggregate(result.records);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create report directory '" + dir + "': " + ec.message());

  ReportFiles files;
  files.records_csv = report_path(dir, id, seed, "records.csv");
  files.aggregate_json = report_path(dir, id, seed, "aggregate.json");
  files.plot_csv = report_path(dir, id, seed, "plot.csv");
  files.timing_csv = report_path(dir, id, seed, "timing.csv");
  {
    auto out = open_out(files.records_csv);
    write_records_csv(result.records, out);
  }
  {
    auto out = open_out(files.aggregate_json);
    out << aggregate_json(cells, id, seed).dump(1) << '\n';
  }
  {
    auto out = open_out(files.plot_csv);
    out << "estimator,dgp,n,p,r1,r2,r3,ratio,t,count,non_unique";
    const std::vector<std::string> metrics{"error", "l2", "rmse", "mae"};
    for (const auto& m : metrics) out << ",mean_" << m << ",se_" << m;
    out << '\n';
    for (const auto& c : cells) {
      out << c.estimator << ',' << c.dgp << ',' << c.n << ',' << c.p << ',' << c.ranks.p1 << ',' << c.ranks.p2 << ','
          << c.ranks.p3 << ',' << fmt_double(c.ratio) << ',' << c.t << ',' << c.count << ',' << c.non_unique;
      for (const auto& m : metrics) {
        const auto it = c.metrics.find(m);
        if (it == c.metrics.end()) out << ",nan,nan";
        else out << ',' << fmt_double(it->second.mean) << ',' << fmt_double(it->second.se);
      }
      out << '\n';
    }
  }
  if (!result.traces.empty()) {
    files.traces_csv = report_path(dir, id, seed, "traces.csv");
    auto out = open_out(files.traces_csv);
    out << "model,step,variable,truth,prediction\n";
    for (const auto& t : result.traces) {
      out << t.model << ',' << t.step << ',' << sanitize(t.variable) << ',' << fmt_double(t.truth) << ','
          << fmt_double(t.prediction) << '\n';
    }
  }
  {
    auto out = open_out(files.timing_csv);
    out << "experiment,dgp,n,p,r1,r2,r3,ratio,t,replication,estimator,wall_seconds\n";
    for (const auto& r : result.records) {
      out << sanitize(r.experiment) << ',' << r.dgp << ',' << r.n << ',' << r.p << ',' << r.ranks.p1 << ','
          << r.ranks.p2 << ',' << r.ranks.p3 << ',' << fmt_double(r.ratio) << ',' << r.t << ',' << r.replication << ','
          << r.estimator << ',' << fmt_double(r.wall_seconds) << '\n';
    }
  }
  return files;
}

std::string format_aggregate_table(const std::vector<AggregateCell>& cells) {
  std::vector<std::string> metric_names;
  for (const std::string m : {"error", "l2", "rmse", "mae", "epochs"}) {
    if (std::any_of(cells.begin(), cells.end(), [&](const AggregateCell& c) { return c.metrics.count(m) > 0; })) {
      metric_names.push_back(m);
    }
  }
  std::vector<std::string> header{"estimator", "dgp", "n", "p", "ranks", "ratio", "t", "count", "non_unique"};
  for (const auto& m : metric_names) {
    header.push_back(m);
    header.push_back(m + "_se");
  }
  auto fixed4 = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
  };
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : cells) {
    std::vector<std::string> row{c.estimator,
                                 c.dgp,
                                 std::to_string(c.n),
                                 std::to_string(c.p),
                                 std::to_string(c.ranks.p1) + "," + std::to_string(c.ranks.p2) + "," +
                                     std::to_string(c.ranks.p3),
                                 fixed4(c.ratio),
                                 std::to_string(c.t),
                                 std::to_string(c.count),
                                 std::to_string(c.non_unique)};
    for (const auto& m : metric_names) {
      const auto it = c.metrics.find(m);
      row.push_back(it == c.metrics.end() ? "-" : fixed4(it->second.mean));
      row.push_back(it == c.metrics.end() ? "-" : fixed4(it->second.se));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto& row : rows) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << "  ";
      if (i < 2) os << std::left << std::setw(static_cast<int>(width[i])) << row[i];
      else os << std::right << std::setw(static_cast<int>(width[i])) << row[i];
    }
    os << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return os.str();
}

}  // namespace tarnet
