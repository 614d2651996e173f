#include "pmm/spqr_io.hpp"

#include <fstream>
#include <json.hpp>

#include "pmm/error.hpp"

namespace pmm {
namespace {

using nlohmann::json;

json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> rows;
  rows.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(data.size()) == r * c, "matrix payload has the wrong size");
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = data[static_cast<std::size_t>(i * c + k)];
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

ThetaComponent parse_component(const std::string& s) {
  for (auto c : {ThetaComponent::delta, ThetaComponent::rho, ThetaComponent::r}) {
    if (to_string(c) == s) return c;
  }
  throw InvalidArgument("unknown theta component '" + s + "'");
}

json layout_json(const FeatureLayout& l) {
  std::vector<std::string> theta;
  for (auto c : l.theta) theta.push_back(to_string(c));
  return {{"theta", theta},
          {"neighbors", l.neighbors},
          {"offsets", l.offsets},
          {"scale", l.scale == NeighborScale::normal ? "normal" : "uniform"},
          {"features", l.names()}};
}

FeatureLayout layout_from(const json& j) {
  FeatureLayout l;
  for (const auto& s : j.at("theta")) l.theta.push_back(parse_component(s.get<std::string>()));
  l.neighbors = j.at("neighbors").get<std::size_t>();
  l.offsets = j.at("offsets").get<bool>();
  const auto scale = j.at("scale").get<std::string>();
  require(scale == "normal" || scale == "uniform", "unknown neighbour scale '" + scale + "'");
  l.scale = scale == "normal" ? NeighborScale::normal : NeighborScale::uniform;
  return l;
}

json model_json(const SpqrModel& m) {
  if (m.nets().empty()) return nullptr;
  json nets = json::array();
  for (const auto& net : m.nets()) {
    json layers = json::array();
    for (const auto& l : net.layers()) {
      layers.push_back({{"weight", matrix_json(l.weight)}, {"bias", vector_json(l.bias)}});
    }
    nets.push_back({{"sizes", net.sizes()}, {"activation", to_string(net.activation())}, {"layers", layers}});
  }
  return {{"basis", {{"size", m.basis().size()}, {"degree", m.basis().degree()}, {"knots", m.basis().knots()}}},
          {"layout", layout_json(m.layout())},
          {"shift", vector_json(m.shift())},
          {"scale", vector_json(m.scale())},
          {"nets", nets}};
}

SpqrModel model_from(const json& j) {
  if (j.is_null()) return {};
  const auto& b = j.at("basis");
  SplineBasis basis(b.at("size").get<std::size_t>(), b.at("degree").get<int>());
  const auto knots = b.at("knots").get<std::vector<double>>();
  require(knots.size() == basis.knots().size(), "stored knot vector does not match the basis");
  for (std::size_t k = 0; k < knots.size(); ++k) {
    require(std::abs(knots[k] - basis.knots()[k]) < 1e-12, "stored knot vector does not match the basis");
  }
  std::vector<SpqrNet> nets;
  for (const auto& nj : j.at("nets")) {
    SpqrNet net(nj.at("sizes").get<std::vector<std::size_t>>(),
                parse_activation(nj.at("activation").get<std::string>()));
    const auto& layers = nj.at("layers");
    require(layers.size() == net.layers().size(), "stored layer count does not match the sizes");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto w = matrix_from(layers[l].at("weight"));
      auto bias = vector_from(layers[l].at("bias"));
      require(w.rows() == net.layers()[l].weight.rows() && w.cols() == net.layers()[l].weight.cols() &&
                  bias.size() == net.layers()[l].bias.size(),
              "stored weights do not match the layer sizes");
      net.layers()[l].weight = std::move(w);
      net.layers()[l].bias = std::move(bias);
    }
    nets.push_back(std::move(net));
  }
  SpqrModel model(basis, layout_from(j.at("layout")), std::move(nets));
  model.set_standardization(vector_from(j.at("shift")), vector_from(j.at("scale")));
  return model;
}

}  // namespace

void write_bundle(std::ostream& out, const NetBundle& bundle) {
  json models = json::array();
  for (const auto& m : bundle.models) models.push_back(model_json(m));
  json j = {{"format", "pmm-spqr"},
            {"version", kSpqrFormatVersion},
            {"kind", bundle.global ? "global" : "local"},
            {"spatial",
             {{"variant", to_string(bundle.spatial.variant)},
              {"alpha", bundle.spatial.alpha},
              {"free_r", bundle.spatial.free_r},
              {"fixed_r", bundle.spatial.fixed_r}}},
            {"site_order", bundle.site_order},
            {"max_neighbors", bundle.max_neighbors},
            {"meta", bundle.meta},
            {"models", models}};
  out << j.dump() << '\n';
}

NetBundle read_bundle(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("net file is not valid JSON: ") + e.what());
  }
  try {
    require(j.value("format", "") == "pmm-spqr", "not a pmm-spqr net file");
    const int version = j.at("version").get<int>();
    require(version == kSpqrFormatVersion, "unsupported net file version " + std::to_string(version));
    NetBundle b;
    b.global = j.at("kind").get<std::string>() == "global";
    const auto& s = j.at("spatial");
    b.spatial.variant = parse_variant(s.at("variant").get<std::string>());
    b.spatial.alpha = s.at("alpha").get<double>();
    b.spatial.free_r = s.at("free_r").get<bool>();
    b.spatial.fixed_r = s.at("fixed_r").get<double>();
    b.site_order = j.at("site_order").get<std::vector<std::string>>();
    b.max_neighbors = j.at("max_neighbors").get<std::size_t>();
    b.meta = j.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& m : j.at("models")) b.models.push_back(model_from(m));
    return b;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed net file: ") + e.what());
  }
}

void save_bundle(const std::filesystem::path& path, const NetBundle& bundle) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  write_bundle(out, bundle);
}

NetBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  return read_bundle(in);
}

}  // namespace pmm
