#include "tarnet/model.hpp"

#include "tarnet/errors.hpp"

#include <fstream>
#include <stdexcept>

namespace tarnet {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

// Arrays are stored row-major (last index fastest) with explicit dims.
json matrix_json(const Matrix& m) {
  json data = json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"dims", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

json vector_json(const Vector& v) {
  return {{"dims", {v.size()}}, {"data", std::vector<double>(v.data(), v.data() + v.size())}};
}

json tensor_json(const Tensor3& t) {
  const Dims3 d = t.dims();
  json data = json::array();
  for (Index i = 0; i < d.p1; ++i)
    for (Index j = 0; j < d.p2; ++j)
      for (Index k = 0; k < d.p3; ++k) data.push_back(t(i, j, k));
  return {{"dims", {d.p1, d.p2, d.p3}}, {"data", std::move(data)}};
}

const json& array_entry(const json& arrays, const std::string& name, std::size_t rank) {
  if (!arrays.contains(name)) throw DataError("model file is missing array '" + name + "'");
  const json& a = arrays.at(name);
  if (a.at("dims").size() != rank) throw DataError("array '" + name + "' has wrong rank");
  Index expected = 1;
  for (const auto& d : a.at("dims")) expected *= d.get<Index>();
  if (static_cast<Index>(a.at("data").size()) != expected) throw DataError("array '" + name + "' has wrong length");
  return a;
}

Matrix matrix_from(const json& arrays, const std::string& name) {
  const json& a = array_entry(arrays, name, 2);
  const Index rows = a.at("dims")[0].get<Index>();
  const Index cols = a.at("dims")[1].get<Index>();
  Matrix m(rows, cols);
  const json& data = a.at("data");
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = data[static_cast<std::size_t>(i * cols + j)].get<double>();
  return m;
}

Vector vector_from(const json& arrays, const std::string& name) {
  const json& a = array_entry(arrays, name, 1);
  const auto data = a.at("data").get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

Tensor3 tensor_from(const json& arrays, const std::string& name) {
  const json& a = array_entry(arrays, name, 3);
  const Dims3 d{a.at("dims")[0].get<Index>(), a.at("dims")[1].get<Index>(), a.at("dims")[2].get<Index>()};
  Tensor3 t(d);
  const json& data = a.at("data");
  std::size_t idx = 0;
  for (Index i = 0; i < d.p1; ++i)
    for (Index j = 0; j < d.p2; ++j)
      for (Index k = 0; k < d.p3; ++k) t(i, j, k) = data[idx++].get<double>();
  return t;
}

void put_lane(json& arrays, const std::string& prefix, const TarParams& lane) {
  arrays[prefix + "u1"] = matrix_json(lane.u1);
  arrays[prefix + "u2"] = matrix_json(lane.u2);
  arrays[prefix + "u3"] = matrix_json(lane.u3);
  arrays[prefix + "g1"] = matrix_json(lane.g1);
}

TarParams lane_from(const json& arrays, const std::string& prefix, Activation act, bool activate_f1, LaneOrder order) {
  TarParams lane;
  lane.u1 = matrix_from(arrays, prefix + "u1");
  lane.u2 = matrix_from(arrays, prefix + "u2");
  lane.u3 = matrix_from(arrays, prefix + "u3");
  lane.g1 = matrix_from(arrays, prefix + "g1");
  lane.activation = act;
  lane.activate_f1 = activate_f1;
  lane.order = order;
  return lane;
}

}  // namespace

Vector Model::predict(const Matrix& lags) const {
  if (lags.rows() != n || lags.cols() != p) {
    throw DataError("model expects an N x P = " + std::to_string(n) + " x " + std::to_string(p) + " lag matrix, got " +
                    std::to_string(lags.rows()) + " x " + std::to_string(lags.cols()));
  }
  const Matrix centered = lags.colwise() - means;
  Vector out;
  switch (kind) {
    case ModelKind::ols:
    case ModelKind::lr:
    case ModelKind::ltr: out = w * vec(centered); break;
    case ModelKind::tar: out = tar_forward(*tar, centered); break;
    case ModelKind::tar2: out = tar2_forward(*tar2, centered); break;
  }
  return out + means;
}

bool Model::has_bias() const {
  if (kind == ModelKind::tar) return tar->bias.size() != 0 && tar->bias.cwiseAbs().maxCoeff() > 0.0;
  if (kind == ModelKind::tar2) return tar2->bias.size() != 0 && tar2->bias.cwiseAbs().maxCoeff() > 0.0;
  return false;
}

Index Model::parameter_count() const {
  return tarnet::parameter_count(kind, n, p, kind == ModelKind::lr ? Ranks3{r, 0, 0} : ranks, has_bias());
}

Model make_linear_model(ModelKind kind, const DesignPair& d, const FitReport& fit) {
  Model m;
  m.kind = kind;
  m.n = d.n();
  m.p = d.p;
  m.means = d.means;
  m.w = fit.weights.unfolded();
  m.epochs = fit.epochs_run;
  m.final_loss = fit.final_loss;
  m.seed = fit.seed;
  if (kind == ModelKind::lr) {
    if (!fit.low_rank) throw std::invalid_argument("LR model needs low-rank factors");
    m.low_rank = fit.low_rank;
    m.r = fit.low_rank->a.cols();
  } else if (kind == ModelKind::ltr) {
    if (!fit.tucker) throw std::invalid_argument("LTR model needs Tucker factors");
    m.tucker = fit.tucker;
    m.ranks = fit.tucker->ranks();
  } else if (kind != ModelKind::ols) {
    throw std::invalid_argument("make_linear_model: not a linear kind");
  }
  return m;
}

Model make_tar_model(const DesignPair& d, const TarFit& fit) {
  Model m;
  m.kind = fit.spec.arch == TarArch::tar2 ? ModelKind::tar2 : ModelKind::tar;
  m.n = d.n();
  m.p = d.p;
  m.ranks = fit.spec.ranks;
  m.means = d.means;
  if (m.kind == ModelKind::tar2) m.tar2 = fit.tar2();
  else m.tar = fit.tar();
  m.epochs = fit.report.epochs_run;
  m.final_loss = fit.report.final_loss;
  m.seed = fit.report.seed;
  return m;
}

json to_json(const Model& m) {
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = to_string(m.kind);
  j["n"] = m.n;
  j["p"] = m.p;
  if (m.kind == ModelKind::lr) j["r"] = m.r;
  if (m.kind == ModelKind::ltr || m.kind == ModelKind::tar || m.kind == ModelKind::tar2) {
    j["ranks"] = {m.ranks.p1, m.ranks.p2, m.ranks.p3};
  }
  j["centered_means"] = std::vector<double>(m.means.data(), m.means.data() + m.means.size());
  json arrays = json::object();
  switch (m.kind) {
    case ModelKind::ols: arrays["w"] = matrix_json(m.w); break;
    case ModelKind::lr:
      arrays["a"] = matrix_json(m.low_rank->a);
      arrays["b"] = matrix_json(m.low_rank->b);
      arrays["w"] = matrix_json(m.w);
      break;
    case ModelKind::ltr:
      arrays["core"] = tensor_json(m.tucker->core);
      arrays["u1"] = matrix_json(m.tucker->u1);
      arrays["u2"] = matrix_json(m.tucker->u2);
      arrays["u3"] = matrix_json(m.tucker->u3);
      arrays["w"] = matrix_json(m.w);
      break;
    case ModelKind::tar:
      put_lane(arrays, "", *m.tar);
      arrays["bias"] = vector_json(m.tar->bias.size() ? m.tar->bias : Vector::Zero(m.n));
      j["activation"] = to_string(m.tar->activation);
      j["activate_f1"] = m.tar->activate_f1;
      break;
    case ModelKind::tar2:
      put_lane(arrays, "lane_a.", m.tar2->lane_a);
      put_lane(arrays, "lane_b.", m.tar2->lane_b);
      arrays["bias"] = vector_json(m.tar2->bias.size() ? m.tar2->bias : Vector::Zero(m.n));
      j["activation"] = to_string(m.tar2->lane_a.activation);
      j["activate_f1"] = m.tar2->lane_a.activate_f1;
      break;
  }
  j["arrays"] = std::move(arrays);
  j["training"] = {{"epochs", m.epochs}, {"final_loss", m.final_loss}, {"seed", m.seed}};
  return j;
}

Model model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw DataError("unsupported model format_version " + j.at("format_version").dump());
    }
    Model m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.n = j.at("n").get<Index>();
    m.p = j.at("p").get<Index>();
    if (j.contains("r")) m.r = j.at("r").get<Index>();
    if (j.contains("ranks")) m.ranks = {j["ranks"][0].get<Index>(), j["ranks"][1].get<Index>(), j["ranks"][2].get<Index>()};
    const auto means = j.at("centered_means").get<std::vector<double>>();
    if (static_cast<Index>(means.size()) != m.n) throw DataError("centered_means must have N entries");
    m.means = Eigen::Map<const Vector>(means.data(), m.n);
    const json& arrays = j.at("arrays");
    switch (m.kind) {
      case ModelKind::ols: m.w = matrix_from(arrays, "w"); break;
      case ModelKind::lr:
        m.low_rank = LowRankFactors{matrix_from(arrays, "a"), matrix_from(arrays, "b")};
        m.w = matrix_from(arrays, "w");
        break;
      case ModelKind::ltr:
        m.tucker = TuckerFactors{tensor_from(arrays, "core"), matrix_from(arrays, "u1"), matrix_from(arrays, "u2"),
                                 matrix_from(arrays, "u3")};
        m.w = matrix_from(arrays, "w");
        break;
      case ModelKind::tar: {
        const Activation act = activation_from_string(j.at("activation").get<std::string>());
        m.tar = lane_from(arrays, "", act, j.at("activate_f1").get<bool>(), LaneOrder::column_first);
        m.tar->bias = vector_from(arrays, "bias");
        m.tar->validate();
        break;
      }
      case ModelKind::tar2: {
        const Activation act = activation_from_string(j.at("activation").get<std::string>());
        const bool f1 = j.at("activate_f1").get<bool>();
        m.tar2 = Tar2Params{lane_from(arrays, "lane_a.", act, f1, LaneOrder::column_first),
                            lane_from(arrays, "lane_b.", act, f1, LaneOrder::row_first), vector_from(arrays, "bias")};
        m.tar2->validate();
        break;
      }
    }
    if ((m.kind == ModelKind::ols || m.kind == ModelKind::lr || m.kind == ModelKind::ltr) &&
        (m.w.rows() != m.n || m.w.cols() != m.n * m.p)) {
      throw DataError("weight array is not N x NP");
    }
    const json& tr = j.at("training");
    m.epochs = tr.at("epochs").get<long>();
    m.final_loss = tr.at("final_loss").get<double>();
    m.seed = tr.at("seed").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  out << to_json(m).dump(1) << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace tarnet
