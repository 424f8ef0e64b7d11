// tarnet command-line driver: simulate, fit, forecast, transform,
// experiment, inspect.
//
// Exit codes: 0 ok, 1 usage or invalid arguments, 2 data errors,
// 3 numerical failures.

#include "tarnet/errors.hpp"
#include "tarnet/estimators.hpp"
#include "tarnet/experiments.hpp"
#include "tarnet/kernels.hpp"
#include "tarnet/model.hpp"
#include "tarnet/pipeline.hpp"
#include "tarnet/tar_net.hpp"
#include "tarnet/var_process.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

using namespace tarnet;

namespace {

std::vector<Index> parse_ranks(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stol(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("--ranks expects integers r1,r2,r3, got '" + text + "'");
    }
  }
  if (out.size() != 3) throw std::invalid_argument("--ranks expects three integers r1,r2,r3, got '" + text + "'");
  return out;
}

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string sidecar_path(const std::string& csv) {
  std::filesystem::path p(csv);
  p.replace_extension(".truth.json");
  return p.string();
}

nlohmann::json weights_json(const VarWeights& w) {
  const Matrix m = w.unfolded();
  nlohmann::json data = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"layout", "W(1) = (A_1 ... A_P), row-major"}, {"dims", {m.rows(), m.cols()}}, {"data", data}};
}

void add_training_flags(CLI::App* cmd, TrainConfig& tc) {
  cmd->add_option("--learning-rate", tc.learning_rate, "gradient step size")->capture_default_str();
  cmd->add_option("--momentum", tc.momentum, "momentum coefficient in [0,1)")->capture_default_str();
  cmd->add_option("--loss-drop-tolerance", tc.loss_drop_tolerance, "stop when the loss changes by less than this")
      ->capture_default_str();
  cmd->add_option("--max-epochs", tc.max_epochs, "epoch limit")->capture_default_str();
  cmd->add_option("--init-scale", tc.init_scale, "sd of the Gaussian initialization")->capture_default_str();
  cmd->add_option("--divergence-restarts", tc.divergence_restarts, "rate halvings allowed after a non-finite loss")
      ->capture_default_str();
  cmd->add_option("--seed", tc.seed, "initialization seed")->capture_default_str();
}

struct SimulateArgs {
  Index n = 0, p = 0, t = 0, burn_in = 500;
  std::string ranks, dgp = "ltr", out;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto r = parse_ranks(a.ranks);
  const Ranks3 ranks{r[0], r[1], r[2]};
  if (a.n < 1 || a.p < 1 || a.t < 1) throw std::invalid_argument("--n, --p and --t must be positive");
  if (ranks.p1 > a.n || ranks.p2 > a.n || ranks.p3 > a.p) {
    throw std::invalid_argument("ranks (" + a.ranks + ") must satisfy r1,r2 <= N=" + std::to_string(a.n) +
                                " and r3 <= P=" + std::to_string(a.p));
  }
  VarWeights truth;
  Matrix values;
  if (a.dgp == "ltr") {
    truth = generate_low_tucker_weights(a.n, a.p, ranks, 1.0, derive_seed(a.seed, {0}));
    values = simulate_var(truth, NoiseSpec::identity(a.n, derive_seed(a.seed, {1})), a.t, a.burn_in);
  } else if (a.dgp == "nl") {
    const NlDgp dgp(a.n, a.p, ranks, derive_seed(a.seed, {0}));
    truth = dgp.linear_weights();
    values = dgp.generate(a.t, a.burn_in, derive_seed(a.seed, {1}));
  } else {
    throw std::invalid_argument("--dgp must be ltr or nl");
  }
  Series s;
  for (Index i = 0; i < a.n; ++i) s.names.push_back("y" + std::to_string(i + 1));
  s.values = values;
  write_series_csv(s, a.out);

  const SpectralSummary mu = spectral_mu(truth);
  nlohmann::json side;
  side["dgp"] = a.dgp;
  side["n"] = a.n;
  side["p"] = a.p;
  side["ranks"] = {ranks.p1, ranks.p2, ranks.p3};
  side["t"] = a.t;
  side["burn_in"] = a.burn_in;
  side["seed"] = a.seed;
  side["companion_radius"] = companion_radius(truth);
  side["weights"] = weights_json(truth);
  side["spectral"] = {{"mu_min", mu.mu_min},
                      {"mu_max", mu.mu_max},
                      {"m_constant", mu.m_constant},
                      {"grid_points", mu.grid_points},
                      {"stationary", mu.stationary}};
  std::ofstream out(sidecar_path(a.out));
  if (!out) throw DataError("cannot write '" + sidecar_path(a.out) + "'");
  out << side.dump(1) << '\n';
  std::cout << "wrote " << values.rows() << " rows x " << values.cols() << " variables to " << a.out << '\n'
            << "truth and spectral summary in " << sidecar_path(a.out) << '\n';
  return 0;
}

struct FitArgs {
  std::string method, ranks, input, model_out, activation = "relu";
  Index r = 0, lags = 0, train_len = 0;
  bool bias = false, codes = false, no_center = false, no_f1_activation = false;
  TrainConfig tc;
};

int cmd_fit(const FitArgs& a) {
  const ModelKind kind = model_kind_from_string(a.method);
  Ranks3 ranks{};
  if (kind == ModelKind::ltr || kind == ModelKind::tar || kind == ModelKind::tar2) {
    if (a.ranks.empty()) throw std::invalid_argument("--method " + a.method + " needs --ranks r1,r2,r3");
    const auto r = parse_ranks(a.ranks);
    ranks = {r[0], r[1], r[2]};
  }
  if (kind == ModelKind::lr && a.r < 1) throw std::invalid_argument("--method lr needs --r");
  if (kind != ModelKind::tar && kind != ModelKind::tar2 && a.bias) {
    throw std::invalid_argument("--bias applies to tar and tar2 only; linear models train on centered data");
  }
  if (a.lags < 1) throw std::invalid_argument("--lags must be positive");
  a.tc.validate();
  Series s = read_series_csv(a.input, a.codes);
  if (a.codes) s = apply_transform(s);
  Matrix values = s.values;
  if (a.train_len > 0) {
    if (a.train_len > values.rows()) throw DataError("--train-len exceeds the " + std::to_string(values.rows()) + " rows");
    values = values.topRows(a.train_len).eval();
  }
  if (values.rows() <= a.lags) throw DataError("need more than P=" + std::to_string(a.lags) + " rows");
  if (kind == ModelKind::ltr || kind == ModelKind::tar || kind == ModelKind::tar2) {
    if (ranks.p1 > s.cols() || ranks.p2 > s.cols() || ranks.p3 > a.lags) {
      throw std::invalid_argument("ranks (" + a.ranks + ") must satisfy r1,r2 <= N=" + std::to_string(s.cols()) +
                                  " and r3 <= P=" + std::to_string(a.lags));
    }
  }
  const DesignPair d = build_design(values, a.lags, !a.no_center);

  Model m;
  FitReport rep;
  switch (kind) {
    case ModelKind::ols: rep = fit_ols(d); m = make_linear_model(kind, d, rep); break;
    case ModelKind::lr: rep = fit_lr(d, a.r, a.tc); m = make_linear_model(kind, d, rep); break;
    case ModelKind::ltr: rep = fit_ltr(d, ranks, a.tc); m = make_linear_model(kind, d, rep); break;
    case ModelKind::tar:
    case ModelKind::tar2: {
      const TarFit fit = train_tar(d, kind == ModelKind::tar ? TarArch::tar : TarArch::tar2, ranks, a.tc, a.bias,
                                   activation_from_string(a.activation), !a.no_f1_activation);
      rep = fit.report;
      m = make_tar_model(d, fit);
      break;
    }
  }
  if (!std::isfinite(rep.final_loss) || rep.diverged) {
    throw NumericalError("training produced a non-finite loss; try a smaller --learning-rate");
  }
  save_model(m, a.model_out);
  std::cout << "method " << a.method << '\n'
            << "final_loss " << full(rep.final_loss) << '\n'
            << "epochs " << rep.epochs_run << '\n'
            << "converged " << (rep.converged ? "yes" : "no") << '\n'
            << "parameter_count " << m.parameter_count() << '\n';
  if (rep.non_unique) std::cout << "note: minimum-norm solution, the least-squares fit is not unique\n";
  return 0;
}

struct ForecastArgs {
  std::string model, input, per_variable, out, trace_out;
  Index train_len = 0, test_len = 0;
  bool codes = false;
};

int cmd_forecast(const ForecastArgs& a) {
  const Model m = load_model(a.model);
  Series s = read_series_csv(a.input, a.codes);
  if (a.codes) s = apply_transform(s);
  if (s.cols() != m.n) {
    throw DataError("model expects N=" + std::to_string(m.n) + " variables (P=" + std::to_string(m.p) +
                    " lags) but the data has N=" + std::to_string(s.cols()));
  }
  const Index test_len = a.test_len > 0 ? a.test_len : s.rows() - a.train_len;
  const Matrix preds = rolling_forecast(m, s.values, a.train_len, test_len);
  const Matrix truth = s.values.middleRows(a.train_len, test_len).transpose();
  const Metrics met = evaluate(preds, truth);

  if (!a.out.empty()) {
    Series ps;
    ps.names = s.names;
    ps.values = preds.transpose();
    write_series_csv(ps, a.out);
  }
  if (!a.per_variable.empty()) {
    const Index i = s.column_index(a.per_variable);
    const std::string path = a.trace_out.empty() ? a.per_variable + "_trace.csv" : a.trace_out;
    Series tr;
    tr.names = {"truth", "prediction"};
    tr.values.resize(test_len, 2);
    tr.values.col(0) = truth.row(i).transpose();
    tr.values.col(1) = preds.row(i).transpose();
    write_series_csv(tr, path);
    std::cout << "trace for " << a.per_variable << " in " << path << '\n';
  }
  std::cout << "l2 " << full(met.l2) << '\n' << "rmse " << full(met.rmse) << '\n' << "mae " << full(met.mae) << '\n';
  return 0;
}

struct TransformArgs {
  std::string input, output, standardize = "none";
  Index stats_rows = 0;
  bool codes = true;
};

int cmd_transform(const TransformArgs& a) {
  Series s = read_series_csv(a.input, a.codes);
  if (a.codes) s = apply_transform(s);
  nlohmann::json stats_json;
  if (a.standardize != "none") {
    StandardizeStats st;
    if (a.standardize == "all") st = standardize(s);
    else if (a.standardize == "train") st = standardize(s, 0, a.stats_rows);
    else throw std::invalid_argument("--standardize must be none, all or train");
    stats_json["names"] = s.names;
    stats_json["mean"] = std::vector<double>(st.mean.data(), st.mean.data() + st.mean.size());
    stats_json["sd"] = std::vector<double>(st.sd.data(), st.sd.data() + st.sd.size());
  }
  write_series_csv(s, a.output);
  std::cout << "wrote " << s.rows() << " rows x " << s.cols() << " variables to " << a.output << '\n';
  if (!stats_json.is_null()) {
    std::filesystem::path p(a.output);
    p.replace_extension(".stats.json");
    std::ofstream out(p);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    out << stats_json.dump(1) << '\n';
    std::cout << "standardization stats in " << p.string() << '\n';
  }
  return 0;
}

struct ExperimentArgs {
  std::string kind, config;
  std::map<std::string, std::string> values;  // flag name -> value
};

std::string flag_for_key(const std::string& key) {
  const auto dot = key.find('.');
  const std::string section = key.substr(0, dot);
  std::string name = key.substr(dot + 1);
  if (section == "output") name = "output_" + name;
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

int cmd_experiment(const ExperimentArgs& a, const std::map<std::string, std::string>& overrides) {
  const ExperimentConfig cfg = load_experiment_config(a.config, experiment_kind_from_string(a.kind), overrides);
  const ExperimentResult res = run_experiment(cfg);
  const ReportFiles files = emit_report(res, cfg.output_dir, cfg.experiment_id(), cfg.master_seed);
  std::cout << format_aggregate_table(aggregate(res.records));
  for (const auto& r : res.records)
    if (r.skipped) std::cout << "skipped: N=" << r.n << " P=" << r.p << " ratio=" << r.ratio << ": " << r.diagnostic << '\n';
  std::cout << "records   " << files.records_csv << '\n'
            << "aggregate " << files.aggregate_json << '\n'
            << "plot      " << files.plot_csv << '\n';
  if (!files.traces_csv.empty()) std::cout << "traces    " << files.traces_csv << '\n';
  return 0;
}

int cmd_inspect(const std::string& path) {
  const Model m = load_model(path);
  std::cout << "kind " << to_string(m.kind) << '\n' << "n " << m.n << '\n' << "p " << m.p << '\n';
  if (m.kind == ModelKind::lr) std::cout << "r " << m.r << '\n';
  if (m.kind == ModelKind::ltr || m.kind == ModelKind::tar || m.kind == ModelKind::tar2) {
    std::cout << "ranks " << m.ranks.p1 << ',' << m.ranks.p2 << ',' << m.ranks.p3 << '\n';
  }
  if (m.tar) std::cout << "activation " << to_string(m.tar->activation) << '\n';
  if (m.tar2) std::cout << "activation " << to_string(m.tar2->lane_a.activation) << '\n';
  std::cout << "bias " << (m.has_bias() ? "yes" : "no") << '\n'
            << "parameter_count " << m.parameter_count() << '\n'
            << "epochs " << m.epochs << '\n'
            << "final_loss " << full(m.final_loss) << '\n'
            << "seed " << m.seed << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  kernels::apply_thread_cap();
  CLI::App app{"Tucker autoregressive nets: simulation, estimation, forecasting and experiments"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "simulate a VAR series from low-Tucker-rank weights");
  simulate->add_option("--n", sim.n, "number of variables N")->required();
  simulate->add_option("--p", sim.p, "lag order P")->required();
  simulate->add_option("--ranks", sim.ranks, "Tucker ranks r1,r2,r3")->required();
  simulate->add_option("--t", sim.t, "effective sample size T (the file has T+P rows)")->required();
  simulate->add_option("--burn-in", sim.burn_in, "discarded warm-up steps")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "master seed")->capture_default_str();
  simulate->add_option("--dgp", sim.dgp, "ltr (linear) or nl (nonlinear encoder/decoder)")
      ->check(CLI::IsMember({"ltr", "nl"}))
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "output CSV; the truth goes to <out>.truth.json")->required();

  FitArgs fit;
  auto* fitc = app.add_subcommand("fit", "train an estimator and save it as JSON");
  fitc->add_option("--method", fit.method, "ols, lr, ltr, tar or tar2")
      ->check(CLI::IsMember({"ols", "lr", "ltr", "tar", "tar2"}))
      ->required();
  fitc->add_option("--ranks", fit.ranks, "Tucker ranks r1,r2,r3 (ltr, tar, tar2)");
  fitc->add_option("--r", fit.r, "matrix rank (lr)");
  fitc->add_option("--lags", fit.lags, "lag order P")->required();
  fitc->add_option("--input", fit.input, "series CSV")->required()->check(CLI::ExistingFile);
  fitc->add_option("--model-out", fit.model_out, "model JSON path")->required();
  fitc->add_option("--train-len", fit.train_len, "use only the first rows (0: all)")->capture_default_str();
  fitc->add_flag("--bias", fit.bias, "add an output bias (tar, tar2)");
  fitc->add_option("--activation", fit.activation, "relu, sigmoid or identity (tar, tar2)")
      ->check(CLI::IsMember({"relu", "sigmoid", "identity"}))
      ->capture_default_str();
  fitc->add_flag("--no-f1-activation", fit.no_f1_activation, "keep the fully connected layer linear");
  fitc->add_flag("--codes", fit.codes, "input has a transform-code row; apply it");
  fitc->add_flag("--no-center", fit.no_center, "do not remove the column means");
  add_training_flags(fitc, fit.tc);

  ForecastArgs fc;
  auto* forecast = app.add_subcommand("forecast", "rolling one-step-ahead forecasts with a saved model");
  forecast->add_option("--model", fc.model, "model JSON")->required()->check(CLI::ExistingFile);
  forecast->add_option("--input", fc.input, "series CSV on the training scale")->required()->check(CLI::ExistingFile);
  forecast->add_option("--train-len", fc.train_len, "rows before the first forecast")->required();
  forecast->add_option("--test-len", fc.test_len, "number of forecasts (0: to the end)")->capture_default_str();
  forecast->add_option("--per-variable", fc.per_variable, "write a truth/prediction trace for this variable");
  forecast->add_option("--trace-out", fc.trace_out, "trace CSV path (default <name>_trace.csv)");
  forecast->add_option("--out", fc.out, "predictions CSV");
  forecast->add_flag("--codes", fc.codes, "input has a transform-code row; apply it");

  TransformArgs tf;
  bool tf_no_codes = false;
  auto* transform = app.add_subcommand("transform", "apply transform codes and optional standardization");
  transform->add_option("--input", tf.input, "CSV with a transform-code row")->required()->check(CLI::ExistingFile);
  transform->add_option("--output", tf.output, "output CSV")->required();
  transform->add_option("--standardize", tf.standardize, "none, all or train")
      ->check(CLI::IsMember({"none", "all", "train"}))
      ->capture_default_str();
  transform->add_option("--stats-rows", tf.stats_rows, "with --standardize train: statistics from the first rows");
  transform->add_flag("--no-codes", tf_no_codes, "input has no code row; only standardize");

  ExperimentArgs ex;
  auto* experiment = app.add_subcommand("experiment", "run a study and write its reports");
  experiment->add_option("--kind", ex.kind, "sample-complexity, dgp-comparison or macro")
      ->check(CLI::IsMember({"sample-complexity", "dgp-comparison", "macro"}))
      ->required();
  experiment->add_option("--config", ex.config, "INI file with [grid], [training] and [output]")->required();
  for (const auto& key : config_keys()) {
    experiment->add_option("--" + flag_for_key(key), ex.values[key], "overrides " + key);
  }

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "describe a saved model");
  inspect->add_option("--model", inspect_path, "model JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*fitc) return cmd_fit(fit);
    if (*forecast) return cmd_forecast(fc);
    if (*transform) {
      tf.codes = !tf_no_codes;
      return cmd_transform(tf);
    }
    if (*experiment) {
      std::map<std::string, std::string> overrides;
      for (const auto& key : config_keys())
        if (experiment->count("--" + flag_for_key(key))) overrides[key] = ex.values[key];
      return cmd_experiment(ex, overrides);
    }
    if (*inspect) return cmd_inspect(inspect_path);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
