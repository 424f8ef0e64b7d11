#ifndef TARNET_PIPELINE_HPP
#define TARNET_PIPELINE_HPP

#include "tarnet/tensor.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace tarnet {

struct Model;

/// Time-major panel: values(t, i) is variable i at time t.
struct Series {
  std::vector<std::string> names;
  Matrix values;            // T x N
  std::vector<int> codes;   // empty, or one transform code per variable

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  Index column_index(const std::string& name) const;  // throws DataError
  void validate() const;
};

/// Header row of names, optional row of transform codes, then numeric rows.
Series read_series_csv(const std::string& path, bool with_codes = false);
Series parse_series_csv(std::istream& in, bool with_codes, const std::string& source = "<stream>");
void write_series_csv(const Series& s, const std::string& path);

/// 1 none, 2 diff, 3 diff^2, 4 log, 5 diff log, 6 diff^2 log.
int differencing_order(int code);
Vector transform_column(const Vector& x, int code, const std::string& name = "");
/// Applies each column's code and keeps the trailing common length.
Series apply_transform(const Series& s);

struct StandardizeStats {
  Vector mean;
  Vector sd;  // population convention
};

/// Statistics from rows [begin, end); the whole series is then rescaled.
StandardizeStats standardize(Series& s, Index begin, Index end);
StandardizeStats standardize(Series& s);
void apply_standardize(Matrix& values, const StandardizeStats& st);
void invert_standardize(Matrix& values, const StandardizeStats& st);

/// Maps an N x P lag matrix (newest lag in column 0) to a prediction.
using Predictor = std::function<Vector(const Matrix&)>;

/// Predicts rows train_len .. train_len+test_len-1 from the true rows
/// before each. Returns N x test_len.
Matrix rolling_forecast(const Predictor& f, Index p, const Matrix& values, Index train_len, Index test_len);
Matrix rolling_forecast(const Model& m, const Matrix& values, Index train_len, Index test_len);

/// Lag matrix for target row `row` of a time-major panel.
Matrix lag_window(const Matrix& values, Index row, Index p);

struct Metrics {
  double l2 = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
};

/// preds and truth are N x steps.
Metrics evaluate(const Matrix& preds, const Matrix& truth);

}  // namespace tarnet

#endif  // TARNET_PIPELINE_HPP
