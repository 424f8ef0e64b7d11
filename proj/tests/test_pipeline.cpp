#include "tarnet/errors.hpp"
#include "tarnet/model.hpp"
#include "tarnet/pipeline.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace tarnet;
using namespace tarnet::testing;

namespace {

Series parse(const std::string& text, bool codes = false) {
  std::istringstream in(text);
  return parse_series_csv(in, codes, "mem.csv");
}

Vector vec_of(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

// Undo a difference given the leading values that were dropped.
Vector integrate(const Vector& d, double start) {
  Vector out(d.size() + 1);
  out(0) = start;
  for (Index i = 0; i < d.size(); ++i) out(i + 1) = out(i) + d(i);
  return out;
}

}  // namespace

TEST(Csv, ParsesHeaderCodesAndValues) {
  const Series s = parse("a, b\n5,1\n1.5,2\n-3e-1, 4\n", true);
  EXPECT_EQ(s.names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(s.codes, (std::vector<int>{5, 1}));
  ASSERT_EQ(s.rows(), 2);
  EXPECT_EQ(s.values(1, 0), -0.3);
  EXPECT_EQ(s.column_index("b"), 1);
  EXPECT_THROW(s.column_index("c"), DataError);
}

TEST(Csv, MissingValuesReportLocation) {
  const std::string msg = error_of([] { parse("a,b\n1,2\n3,\n"); });
  EXPECT_NE(msg.find("mem.csv:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("b"), std::string::npos) << msg;
  EXPECT_FALSE(error_of([] { parse("a,b\n1,NA\n"); }).empty());
  EXPECT_FALSE(error_of([] { parse("a,b\n1,2,3\n"); }).empty());
  EXPECT_FALSE(error_of([] { parse("a,b\n1,x\n"); }).empty());
  EXPECT_FALSE(error_of([] { parse("a,b\n7,1\n1,2\n", true); }).empty());
  EXPECT_FALSE(error_of([] { parse(""); }).empty());
}

TEST(Csv, WriteReadRoundTripIsExact) {
  TempDir dir;
  Rng rng(200);
  Series s;
  s.names = {"y1", "y2", "y3"};
  s.values = rng.normal_matrix(20, 3);
  write_series_csv(s, dir.file("s.csv"));
  const Series back = read_series_csv(dir.file("s.csv"));
  EXPECT_EQ(back.names, s.names);
  EXPECT_EQ(back.values, s.values);
  EXPECT_THROW(read_series_csv(dir.file("absent.csv")), DataError);
}

TEST(Transform, CodeExamples) {
  const Vector x = vec_of({1, 3, 6});
  EXPECT_EQ(transform_column(x, 1), x);
  EXPECT_EQ(transform_column(x, 2), vec_of({2, 3}));
  EXPECT_EQ(transform_column(x, 3), vec_of({1}));
  const Vector e = vec_of({1, std::exp(1.0), std::exp(3.0), std::exp(6.0)});
  const Vector six = transform_column(e, 6);
  ASSERT_EQ(six.size(), 2);
  EXPECT_NEAR(six(0), 1.0, 1e-12);
  EXPECT_NEAR(six(1), 1.0, 1e-12);
  for (int c = 1; c <= 6; ++c) EXPECT_EQ(differencing_order(c), (c - 1) % 3);
}

TEST(Transform, LogOfNonpositiveNamesVariableAndRow) {
  const std::string msg = error_of([] { transform_column(vec_of({1, 2, -1}), 5, "gdp"); });
  EXPECT_NE(msg.find("gdp"), std::string::npos) << msg;
  EXPECT_NE(msg.find("2"), std::string::npos) << msg;
  EXPECT_THROW(transform_column(vec_of({1, 2}), 7), std::invalid_argument);
}

TEST(Transform, InversesRecoverPositiveData) {
  Rng rng(201);
  Vector x(30);
  for (Index i = 0; i < x.size(); ++i) x(i) = std::exp(0.3 * rng.normal()) + 1.0;
  EXPECT_EQ(transform_column(x, 1), x);
  EXPECT_LT((integrate(transform_column(x, 2), x(0)) - x).norm(), 1e-12);
  EXPECT_LT((transform_column(x, 4).array().exp().matrix() - x).norm(), 1e-12);
  EXPECT_LT((integrate(transform_column(x, 5), std::log(x(0))).array().exp().matrix() - x).norm(), 1e-11);
  const Vector d1 = transform_column(x, 2);
  EXPECT_LT((integrate(integrate(transform_column(x, 3), d1(0)), x(0)) - x).norm(), 1e-11);
  const Vector l = x.array().log();
  const Vector ld = transform_column(l, 2);
  EXPECT_LT((integrate(integrate(transform_column(x, 6), ld(0)), l(0)).array().exp().matrix() - x).norm(), 1e-10);
}

TEST(Transform, AlignsToCommonTrailingLength) {
  const Series t = apply_transform(parse("a,b,c\n2,4,3\n1,1,1\n2,4,2\n4,9,4\n7,16,7\n11,25,11\n", true));
  ASSERT_EQ(t.rows(), 3);
  EXPECT_EQ(t.values.col(0), vec_of({2, 3, 4}));
  EXPECT_EQ(t.values.col(1), vec_of({std::log(9.0), std::log(16.0), std::log(25.0)}));
  EXPECT_EQ(t.values.col(2), vec_of({1, 1, 1}));
}

TEST(Standardize, PopulationConvention) {
  Series s;
  s.names = {"x"};
  s.values = Matrix(2, 1);
  s.values << 0, 2;
  const StandardizeStats st = standardize(s);
  EXPECT_EQ(st.mean(0), 1.0);
  EXPECT_EQ(st.sd(0), 1.0);
  EXPECT_EQ(s.values(0, 0), -1.0);
  EXPECT_EQ(s.values(1, 0), 1.0);
}

TEST(Standardize, StatsRangeHasZeroMeanUnitVariance) {
  Rng rng(202);
  Series s;
  s.names = {"a", "b", "c"};
  s.values = 3.0 * rng.normal_matrix(50, 3);
  s.values.col(1).array() += 10.0;
  const Matrix original = s.values;
  const StandardizeStats st = standardize(s, 5, 40);
  const Matrix block = s.values.middleRows(5, 35);
  for (Index j = 0; j < 3; ++j) {
    EXPECT_LT(std::abs(block.col(j).mean()), 1e-12);
    EXPECT_NEAR((block.col(j).array() - block.col(j).mean()).square().mean(), 1.0, 1e-12);
  }
  Matrix back = s.values;
  invert_standardize(back, st);
  EXPECT_LT((back - original).cwiseAbs().maxCoeff(), 1e-12);
  Matrix again = original;
  apply_standardize(again, st);
  EXPECT_LT((again - s.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Standardize, ZeroVarianceNamesColumn) {
  Series s = parse("flat,x\n1,1\n1,2\n1,3\n");
  EXPECT_NE(error_of([&] { standardize(s); }).find("flat"), std::string::npos);
}

TEST(RollingForecast, CallsOncePerStepWithoutLookAhead) {
  Rng rng(203);
  const Matrix values = rng.normal_matrix(40, 3);
  int calls = 0;
  Index steps_seen = 0;
  const Predictor f = [&](const Matrix& lags) {
    ++calls;
    // newest lag first: column 0 is the row just before the target
    EXPECT_EQ(lags.col(0), Vector(values.row(30 + steps_seen - 1).transpose()));
    ++steps_seen;
    return Vector(lags.rowwise().sum());
  };
  const Matrix preds = rolling_forecast(f, 2, values, 30, 10);
  EXPECT_EQ(calls, 10);
  ASSERT_EQ(preds.cols(), 10);
  // altering rows after a step leaves that step's prediction unchanged
  Matrix altered = values;
  altered.bottomRows(5).setConstant(99.0);
  const Predictor plain = [](const Matrix& lags) { return Vector(lags.rowwise().sum()); };
  const Matrix p2 = rolling_forecast(plain, 2, altered, 30, 10);
  EXPECT_EQ(p2.leftCols(6), preds.leftCols(6));
  EXPECT_THROW(rolling_forecast(plain, 2, values, 35, 10), DataError);
}

TEST(RollingForecast, ExactLinearModelAndZeroModel) {
  const VarWeights w = generate_low_tucker_weights(4, 2, {2, 2, 2}, 0.9, 5);
  // noiseless continuation of a simulated start
  Matrix values = simulate_var(w, NoiseSpec::identity(4, 6), 10);
  values.conservativeResize(60, Eigen::NoChange);
  for (Index t = 12; t < 60; ++t) values.row(t) = (w.unfolded() * vec(lag_window(values, t, 2))).transpose();
  Model m;
  m.kind = ModelKind::ols;
  m.n = 4;
  m.p = 2;
  m.means = Vector::Zero(4);
  m.w = w.unfolded();
  const Matrix preds = rolling_forecast(m, values, 40, 20);
  const Metrics met = evaluate(preds, values.bottomRows(20).transpose());
  EXPECT_LT(met.l2, 1e-12);
  EXPECT_LT(met.mae, 1e-12);

  Model zero = m;
  zero.w.setZero();
  zero.means = Vector::LinSpaced(4, 1.0, 4.0);
  const Matrix zp = rolling_forecast(zero, values, 40, 20);
  for (Index j = 0; j < 20; ++j) EXPECT_EQ(zp.col(j), zero.means);
  Model wrong = m;
  wrong.n = 5;
  EXPECT_THROW(rolling_forecast(wrong, values, 40, 20), DataError);
}

TEST(Evaluate, HandExamplesAndOracle) {
  Matrix truth = Matrix::Zero(2, 1);
  Matrix pred(2, 1);
  pred << 3, 4;
  Metrics m = evaluate(pred, truth);
  EXPECT_DOUBLE_EQ(m.l2, 5.0);
  EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(12.5));
  EXPECT_DOUBLE_EQ(m.mae, 3.5);
  m = evaluate(truth, truth);
  EXPECT_EQ(m.l2 + m.rmse + m.mae, 0.0);

  Rng rng(204);
  const Matrix a = rng.normal_matrix(5, 9), b = rng.normal_matrix(5, 9);
  double l2 = 0, sq = 0, ab = 0;
  for (Index t = 0; t < 9; ++t) {
    double col = 0;
    for (Index i = 0; i < 5; ++i) {
      const double e = a(i, t) - b(i, t);
      col += e * e;
      sq += e * e;
      ab += std::abs(e);
    }
    l2 += std::sqrt(col);
  }
  m = evaluate(a, b);
  EXPECT_NEAR(m.l2, l2 / 9, 1e-12);
  EXPECT_NEAR(m.rmse, std::sqrt(sq / 45), 1e-12);
  EXPECT_NEAR(m.mae, ab / 45, 1e-12);
  EXPECT_THROW(evaluate(a, b.leftCols(8)), DataError);
}

TEST(Evaluate, PermutingVariablesChangesNothing) {
  Rng rng(205);
  const Matrix a = rng.normal_matrix(4, 6), b = rng.normal_matrix(4, 6);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  const Metrics m1 = evaluate(a, b);
  const Metrics m2 = evaluate(perm * a, perm * b);
  EXPECT_NEAR(m1.l2, m2.l2, 1e-14);
  EXPECT_NEAR(m1.rmse, m2.rmse, 1e-14);
  EXPECT_NEAR(m1.mae, m2.mae, 1e-14);
}
