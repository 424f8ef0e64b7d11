#include "tarnet/errors.hpp"
#include "tarnet/model.hpp"
#include "tarnet/pipeline.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace tarnet;
using namespace tarnet::testing;

namespace {

struct Data {
  Matrix series;
  DesignPair d;
};

Data make_data(Index n, Index p, std::uint64_t seed) {
  Data out;
  out.series = simulate_var(generate_low_tucker_weights(n, p, {2, 2, 2}, 0.9, seed), NoiseSpec::identity(n, seed + 1), 150);
  out.series.array() += 3.0;
  out.d = build_design(out.series, p, true);
  return out;
}

TrainConfig quick(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.max_epochs = 150;
  cfg.seed = seed;
  return cfg;
}

std::vector<Model> every_kind(const Data& data) {
  std::vector<Model> models;
  models.push_back(make_linear_model(ModelKind::ols, data.d, fit_ols(data.d)));
  models.push_back(make_linear_model(ModelKind::lr, data.d, fit_lr(data.d, 2, quick(1))));
  models.push_back(make_linear_model(ModelKind::ltr, data.d, fit_ltr(data.d, {2, 2, 2}, quick(2))));
  models.push_back(make_tar_model(data.d, train_tar(data.d, TarArch::tar, {2, 2, 2}, quick(3), true)));
  models.push_back(
      make_tar_model(data.d, train_tar(data.d, TarArch::tar2, {2, 2, 2}, quick(4), true, Activation::sigmoid, false)));
  models.push_back(make_tar_model(data.d, train_tar(data.d, TarArch::ltar, {2, 2, 2}, quick(5), false)));
  return models;
}

}  // namespace

TEST(Model, JsonRoundTripReproducesPredictionsBitExactly) {
  const Data data = make_data(5, 3, 300);
  TempDir dir;
  for (const Model& m : every_kind(data)) {
    const std::string path = dir.file(to_string(m.kind) + ".json");
    save_model(m, path);
    const Model back = load_model(path);
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.parameter_count(), m.parameter_count());
    EXPECT_EQ(back.has_bias(), m.has_bias());
    for (Index t = 20; t < 40; ++t) {
      const Matrix lags = lag_window(data.series, t, 3);
      EXPECT_EQ(back.predict(lags), m.predict(lags)) << to_string(m.kind);
    }
  }
}

TEST(Model, DocumentLayout) {
  const Data data = make_data(4, 2, 301);
  const Model m = make_linear_model(ModelKind::ols, data.d, fit_ols(data.d));
  const nlohmann::json j = to_json(m);
  EXPECT_EQ(j.at("format_version"), 1);
  EXPECT_EQ(j.at("kind"), "ols");
  EXPECT_EQ(j.at("n"), 4);
  EXPECT_EQ(j.at("p"), 2);
  EXPECT_EQ(j.at("centered_means").size(), 4u);
  const auto& w = j.at("arrays").at("w");
  EXPECT_EQ(w.at("dims"), nlohmann::json({4, 8}));
  // row-major
  EXPECT_EQ(w.at("data")[1].get<double>(), m.w(0, 1));
  EXPECT_TRUE(j.at("training").contains("epochs"));
}

TEST(Model, PredictAddsBackTrainingMeans) {
  const Data data = make_data(4, 2, 302);
  const Model m = make_linear_model(ModelKind::ols, data.d, fit_ols(data.d));
  const Matrix lags = lag_window(data.series, 30, 2);
  const Matrix centered = lags.colwise() - data.d.means;
  const Vector expected = m.w * vec(centered) + data.d.means;
  EXPECT_LT((m.predict(lags) - expected).norm(), 1e-12);
}

TEST(Model, ParameterCounts) {
  const Data data = make_data(5, 3, 303);
  const std::vector<Model> models = every_kind(data);
  EXPECT_EQ(models[0].parameter_count(), parameter_count(ModelKind::ols, 5, 3, {}));
  EXPECT_EQ(models[1].parameter_count(), parameter_count(ModelKind::lr, 5, 3, {2, 0, 0}));
  EXPECT_EQ(models[2].parameter_count(), parameter_count(ModelKind::ltr, 5, 3, {2, 2, 2}));
  EXPECT_EQ(models[3].parameter_count(), parameter_count(ModelKind::tar, 5, 3, {2, 2, 2}, true));
  EXPECT_EQ(models[4].parameter_count(), parameter_count(ModelKind::tar2, 5, 3, {2, 2, 2}, true));
  EXPECT_EQ(models[5].parameter_count(), parameter_count(ModelKind::ltr, 5, 3, {2, 2, 2}));
}

TEST(Model, RejectsMalformedFiles) {
  TempDir dir;
  const auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir.file(name)) << text;
    return dir.file(name);
  };
  EXPECT_THROW(load_model(write("a.json", "{not json")), DataError);
  EXPECT_THROW(load_model(write("b.json", R"({"format_version": 2, "kind": "ols"})")), DataError);
  EXPECT_THROW(load_model(write("c.json", R"({"format_version": 1, "kind": "ols", "n": 2, "p": 1})")), DataError);
  EXPECT_THROW(load_model(dir.file("missing.json")), DataError);

  const Data data = make_data(4, 2, 304);
  nlohmann::json j = to_json(make_linear_model(ModelKind::ols, data.d, fit_ols(data.d)));
  j["arrays"]["w"]["data"].erase(0);
  EXPECT_THROW(model_from_json(j), DataError);
}

TEST(Model, RejectsWrongLagShape) {
  const Data data = make_data(4, 2, 305);
  const Model m = make_linear_model(ModelKind::ols, data.d, fit_ols(data.d));
  EXPECT_THROW(m.predict(Matrix::Zero(4, 3)), DataError);
}
