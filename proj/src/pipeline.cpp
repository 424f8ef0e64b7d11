#include "tarnet/pipeline.hpp"

#include "tarnet/errors.hpp"
#include "tarnet/model.hpp"

#include <boost/algorithm/string.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

namespace tarnet {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  boost::split(fields, line, boost::is_any_of(","));
  for (auto& f : fields) boost::trim(f);
  return fields;
}

std::string where(const std::string& source, std::size_t line, std::size_t col) {
  return source + ":" + std::to_string(line) + " column " + std::to_string(col + 1);
}

double parse_number(const std::string& text, const std::string& location) {
  if (text.empty() || boost::iequals(text, "na") || boost::iequals(text, "nan")) {
    throw DataError("missing value at " + location);
  }
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE || !std::isfinite(v)) {
    throw DataError("invalid number '" + text + "' at " + location);
  }
  return v;
}

}  // namespace

Index Series::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<Index>(i);
  throw DataError("no variable named '" + name + "'");
}

void Series::validate() const {
  if (static_cast<Index>(names.size()) != values.cols()) throw DataError("series has mismatched names and columns");
  if (!codes.empty() && codes.size() != names.size()) throw DataError("series has mismatched codes and columns");
  for (int c : codes)
    if (c < 1 || c > 6) throw DataError("transform code " + std::to_string(c) + " outside 1..6");
  if (!values.allFinite()) throw DataError("series contains non-finite values");
}

Series parse_series_csv(std::istream& in, bool with_codes, const std::string& source) {
  Series s;
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!boost::trim_copy(line).empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw DataError(source + ": empty file, expected a header row of variable names");
  s.names = split_fields(line);
  const std::size_t n = s.names.size();
  for (std::size_t i = 0; i < n; ++i)
    if (s.names[i].empty()) throw DataError("empty variable name at " + where(source, line_no, i));

  if (with_codes) {
    if (!next_line()) throw DataError(source + ": missing transform code row");
    const auto fields = split_fields(line);
    if (fields.size() != n) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(n) + " codes, got " +
                      std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double c = parse_number(fields[i], where(source, line_no, i));
      if (c != std::floor(c) || c < 1 || c > 6) {
        throw DataError("transform code '" + fields[i] + "' must be an integer 1..6 at " + where(source, line_no, i));
      }
      s.codes.push_back(static_cast<int>(c));
    }
  }

  std::vector<double> flat;
  Index rows = 0;
  while (next_line()) {
    const auto fields = split_fields(line);
    if (fields.size() != n) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(n) + " fields, got " +
                      std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < n; ++i) flat.push_back(parse_number(fields[i], where(source, line_no, i) + " (" + s.names[i] + ")"));
    ++rows;
  }
  if (rows == 0) throw DataError(source + ": no data rows");
  s.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), rows, static_cast<Index>(n));
  return s;
}

Series read_series_csv(const std::string& path, bool with_codes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_series_csv(in, with_codes, path);
}

void write_series_csv(const Series& s, const std::string& path) {
  s.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << boost::join(s.names, ",") << '\n';
  if (!s.codes.empty()) {
    for (std::size_t i = 0; i < s.codes.size(); ++i) out << (i ? "," : "") << s.codes[i];
    out << '\n';
  }
  char buf[32];
  for (Index t = 0; t < s.rows(); ++t) {
    for (Index i = 0; i < s.cols(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s.values(t, i));
      if (i) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

int differencing_order(int code) {
  switch (code) {
    case 1:
    case 4: return 0;
    case 2:
    case 5: return 1;
    case 3:
    case 6: return 2;
  }
  throw std::invalid_argument("transform code " + std::to_string(code) + " outside 1..6");
}

Vector transform_column(const Vector& x, int code, const std::string& name) {
  const int order = differencing_order(code);
  Vector v = x;
  if (code >= 4) {
    for (Index t = 0; t < v.size(); ++t) {
      if (!(v(t) > 0.0)) {
        throw DataError("log transform of nonpositive value " + std::to_string(v(t)) + " in variable '" + name +
                        "' at row " + std::to_string(t));
      }
      v(t) = std::log(v(t));
    }
  }
  for (int k = 0; k < order; ++k) {
    if (v.size() < 2) throw DataError("variable '" + name + "' is too short to difference");
    v = (v.tail(v.size() - 1) - v.head(v.size() - 1)).eval();
  }
  return v;
}

Series apply_transform(const Series& s) {
  s.validate();
  if (s.codes.empty()) throw DataError("series has no transform codes");
  int max_order = 0;
  for (int c : s.codes) max_order = std::max(max_order, differencing_order(c));
  const Index len = s.rows() - max_order;
  if (len < 1) throw DataError("series too short for its transform codes");
  Series out;
  out.names = s.names;
  out.values.resize(len, s.cols());
  for (Index i = 0; i < s.cols(); ++i) {
    const Vector col = transform_column(s.values.col(i), s.codes[static_cast<std::size_t>(i)], s.names[static_cast<std::size_t>(i)]);
    out.values.col(i) = col.tail(len);
  }
  return out;
}

StandardizeStats standardize(Series& s, Index begin, Index end) {
  if (begin < 0 || end > s.rows() || end - begin < 2) {
    throw DataError("standardization range [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") must hold at least 2 of " + std::to_string(s.rows()) + " rows");
  }
  const auto block = s.values.middleRows(begin, end - begin);
  StandardizeStats st;
  st.mean = block.colwise().mean().transpose();
  st.sd.resize(s.cols());
  for (Index i = 0; i < s.cols(); ++i) {
    const double var = (block.col(i).array() - st.mean(i)).square().mean();
    if (!(var > 0.0)) {
      const std::string name = i < static_cast<Index>(s.names.size()) ? s.names[static_cast<std::size_t>(i)] : std::to_string(i);
      throw DataError("variable '" + name + "' has zero variance over the standardization range");
    }
    st.sd(i) = std::sqrt(var);
  }
  apply_standardize(s.values, st);
  return st;
}

StandardizeStats standardize(Series& s) { return standardize(s, 0, s.rows()); }

void apply_standardize(Matrix& values, const StandardizeStats& st) {
  values = ((values.rowwise() - st.mean.transpose()).array().rowwise() / st.sd.transpose().array()).matrix();
}

void invert_standardize(Matrix& values, const StandardizeStats& st) {
  values = ((values.array().rowwise() * st.sd.transpose().array()).matrix()).rowwise() + st.mean.transpose();
}

Matrix lag_window(const Matrix& values, Index row, Index p) {
  if (row < p || row > values.rows()) throw std::invalid_argument("lag window out of range");
  Matrix lags(values.cols(), p);
  for (Index k = 0; k < p; ++k) lags.col(k) = values.row(row - 1 - k).transpose();
  return lags;
}

Matrix rolling_forecast(const Predictor& f, Index p, const Matrix& values, Index train_len, Index test_len) {
  if (test_len < 1) throw DataError("test length must be positive");
  if (train_len < p) {
    throw DataError("training length " + std::to_string(train_len) + " is shorter than the lag order " + std::to_string(p));
  }
  if (train_len + test_len > values.rows()) {
    throw DataError("train_len + test_len = " + std::to_string(train_len + test_len) + " exceeds the " +
                    std::to_string(values.rows()) + " available rows");
  }
  Matrix preds(values.cols(), test_len);
  for (Index s = 0; s < test_len; ++s) {
    const Vector y = f(lag_window(values, train_len + s, p));
    if (y.size() != values.cols()) throw DataError("predictor returned a vector of the wrong length");
    preds.col(s) = y;
  }
  return preds;
}

Matrix rolling_forecast(const Model& m, const Matrix& values, Index train_len, Index test_len) {
  if (values.cols() != m.n) {
    throw DataError("model has N=" + std::to_string(m.n) + ", P=" + std::to_string(m.p) + " but data has " +
                    std::to_string(values.cols()) + " variables");
  }
  return rolling_forecast([&m](const Matrix& lags) { return m.predict(lags); }, m.p, values, train_len, test_len);
}

Metrics evaluate(const Matrix& preds, const Matrix& truth) {
  if (preds.rows() != truth.rows() || preds.cols() != truth.cols()) {
    throw DataError("prediction shape " + std::to_string(preds.rows()) + "x" + std::to_string(preds.cols()) +
                    " does not match truth " + std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  if (preds.size() == 0) throw DataError("nothing to evaluate");
  const Matrix err = preds - truth;
  Metrics m;
  m.l2 = err.colwise().norm().mean();
  m.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
  m.mae = err.cwiseAbs().mean();
  return m;
}

}  // namespace tarnet
