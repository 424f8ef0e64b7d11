#ifndef TARNET_EXPERIMENTS_HPP
#define TARNET_EXPERIMENTS_HPP

#include "tarnet/optimizer.hpp"
#include "tarnet/tar_net.hpp"
#include "tarnet/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tarnet {

enum class ExperimentKind { sample_complexity, dgp_comparison, macro };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::sample_complexity;
  std::uint64_t master_seed = 0;
  int replications = 50;

  // sample-complexity
  std::vector<Index> n_list{9, 25, 36};
  std::vector<Index> p_list{3, 5, 8};
  std::vector<Ranks3> ranks_list{{2, 2, 2}, {3, 3, 3}};
  std::vector<double> ratios{0.15, 0.25, 0.35, 0.45};
  std::vector<std::string> estimators{"ols", "lr", "ltr"};
  Index lr_rank = 0;  // 0: r1 of the cell
  Index burn_in = 500;

  // dgp-comparison
  std::vector<std::string> dgps{"linear", "nonlinear"};
  std::vector<Index> lengths{500};  // training rows; one more row is the test point
  std::vector<std::string> models{"tar2", "tar", "ltar"};

  // macro
  std::string data_path;
  bool data_has_codes = false;
  Index train_len = 104;
  Index test_len = 90;
  std::string standardize_range = "all";  // all | train | none
  bool bias = true;
  Activation activation = Activation::relu;
  bool activate_f1 = true;

  TrainConfig training;
  std::string output_dir = ".";
  std::string id;  // defaults to the kind name

  /// Kind-specific defaults.
  static ExperimentConfig defaults(ExperimentKind kind);
  std::string experiment_id() const { return id.empty() ? to_string(kind) : id; }
  void validate() const;
};

/// Known config keys as "section.key".
const std::vector<std::string>& config_keys();
/// Parses "section.key" = value into the config. Throws std::invalid_argument.
void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// INI text with [grid], [training] and [output] sections.
ExperimentConfig load_experiment_config(const std::string& path, ExperimentKind kind,
                                        const std::map<std::string, std::string>& overrides = {});

struct ResultRecord {
  std::string experiment;
  std::string dgp;  // sample-complexity: "var"
  Index n = 0;
  Index p = 0;
  Ranks3 ranks{};
  double ratio = 0.0;  // sqrt(N/T); 0 when not applicable
  Index t = 0;         // effective sample size
  int replication = 0;
  std::string estimator;
  double error = 0.0;  // Frobenius estimation error; NaN when not applicable
  double l2 = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  long epochs = 0;
  int restarts = 0;
  double final_loss = 0.0;
  bool converged = false;
  bool non_unique = false;
  bool skipped = false;
  std::string diagnostic;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;  // written to the timing file only
};

struct TraceRow {
  std::string model;
  Index step = 0;
  std::string variable;
  double truth = 0.0;
  double prediction = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRecord> records;
  std::vector<TraceRow> traces;
};

ExperimentResult run_sample_complexity(const ExperimentConfig& cfg);
ExperimentResult run_dgp_comparison(const ExperimentConfig& cfg);
/// Uses cfg.data_path; the data is transformed (if it carries codes) and
/// standardized before training.
ExperimentResult run_macro_benchmark(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct Stat {
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(count); 0 for a single value
  Index count = 0;
};

struct AggregateCell {
  std::string experiment;
  std::string dgp;
  Index n = 0;
  Index p = 0;
  Ranks3 ranks{};
  double ratio = 0.0;
  Index t = 0;
  std::string estimator;
  Index count = 0;
  Index non_unique = 0;
  std::map<std::string, Stat> metrics;  // error, l2, rmse, mae, epochs (finite values only)
};

/// Groups non-skipped records by cell and estimator in order of first
/// appearance. Throws std::invalid_argument on an empty input.
std::vector<AggregateCell> aggregate(const std::vector<ResultRecord>& records);

struct ReportFiles {
  std::string records_csv;
  std::string aggregate_json;
  std::string plot_csv;
  std::string traces_csv;  // empty when there are no traces
  std::string timing_csv;
};

std::vector<std::string> record_columns();
void write_records_csv(const std::vector<ResultRecord>& records, std::ostream& out);
std::vector<ResultRecord> load_records_csv(const std::string& path);
nlohmann::json aggregate_json(const std::vector<AggregateCell>& cells, const std::string& id, std::uint64_t seed);

/// Writes the report files into dir, named <id>_seed<seed>_*.
ReportFiles emit_report(const ExperimentResult& result, const std::string& dir, const std::string& id,
                        std::uint64_t seed);

/// Human-readable aggregate table, values rounded to 4 decimals.
std::string format_aggregate_table(const std::vector<AggregateCell>& cells);

}  // namespace tarnet

#endif  // TARNET_EXPERIMENTS_HPP
