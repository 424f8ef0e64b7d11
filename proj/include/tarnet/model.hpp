#ifndef TARNET_MODEL_HPP
#define TARNET_MODEL_HPP

#include "tarnet/estimators.hpp"
#include "tarnet/tar_net.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace tarnet {

/// A fitted one-step predictor together with the centering means it was
/// trained with. Persisted as JSON (format_version 1).
struct Model {
  ModelKind kind = ModelKind::ols;
  Index n = 0;
  Index p = 0;
  Ranks3 ranks{};  // ltr/tar/tar2
  Index r = 0;     // lr
  Vector means;    // zeros when trained uncentered

  Matrix w;  // ols/lr/ltr: N x NP
  std::optional<LowRankFactors> low_rank;
  std::optional<TuckerFactors> tucker;
  std::optional<TarParams> tar;
  std::optional<Tar2Params> tar2;

  long epochs = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;

  /// lags is N x P with column k holding y_{t-1-k} on the original scale.
  Vector predict(const Matrix& lags) const;
  Index parameter_count() const;
  bool has_bias() const;
};

Model make_linear_model(ModelKind kind, const DesignPair& d, const FitReport& fit);
Model make_tar_model(const DesignPair& d, const TarFit& fit);

nlohmann::json to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace tarnet

#endif  // TARNET_MODEL_HPP
