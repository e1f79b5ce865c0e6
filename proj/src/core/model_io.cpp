#include "starflow/model_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "starflow/coupling_flow.hpp"
#include "starflow/ellipsoid.hpp"

namespace starflow {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

json vec_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json mat_rows_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

Vec json_vec(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::format, std::string("model: ") + what + " must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Mat json_rows(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::format, std::string("model: ") + what + " must be an array of rows");
  if (j.empty()) return Mat(0, 0);
  const auto cols = j.front().size();
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw Error(ErrorCode::format, std::string("model: ragged ") + what);
    m.row(static_cast<Eigen::Index>(i)) = json_vec(j[i], what).transpose();
  }
  return m;
}

json ellipsoid_json(const Ellipsoid& e) {
  return {{"eigenvalues", vec_json(e.eigenvalues())}, {"frame", mat_rows_json(e.frame())}, {"center", vec_json(e.center())}};
}

Ellipsoid json_ellipsoid(const json& j) {
  return Ellipsoid(json_rows(j.at("frame"), "frame"), json_vec(j.at("eigenvalues"), "eigenvalues"),
                   json_vec(j.at("center"), "center"));
}

json radial_json(const RadialFn& rho) {
  if (const auto* c = dynamic_cast<const ConstantRadial*>(&rho)) return {{"type", "constant"}, {"value", c->value()}};
  if (const auto* e = dynamic_cast<const EllipsoidRadial*>(&rho)) {
    return {{"type", "ellipsoid"}, {"ellipsoid", ellipsoid_json(e->ellipsoid())}};
  }
  if (const auto* s = dynamic_cast<const StarRadial*>(&rho)) {
    json branches = json::array();
    for (const auto& b : s->branches()) {
      branches.push_back({{"t_min", b.t_min()},
                          {"offcentered", ellipsoid_json(b.offcentered())},
                          {"centered", ellipsoid_json(b.centered())}});
    }
    return {{"type", "star"}, {"t_max", s->t_max()}, {"branches", branches}};
  }
  throw Error(ErrorCode::unsupported, "save_model: radial function type cannot be serialized");
}

RadialPtr json_radial(const json& j, int d) {
  const auto type = j.at("type").get<std::string>();
  if (type == "constant") return std::make_shared<ConstantRadial>(d, j.at("value").get<double>());
  if (type == "ellipsoid") return std::make_shared<EllipsoidRadial>(json_ellipsoid(j.at("ellipsoid")));
  if (type == "star") {
    std::vector<BranchRadial> branches;
    for (const auto& b : j.at("branches")) {
      branches.emplace_back(json_ellipsoid(b.at("offcentered")), json_ellipsoid(b.at("centered")),
                            b.value("t_min", 0.1));
    }
    if (branches.empty()) throw Error(ErrorCode::format, "model: star radial needs at least one branch");
    return std::make_shared<StarRadial>(std::move(branches), j.value("t_max", 0.1));
  }
  throw Error(ErrorCode::format, "model: unknown radial type '" + type + "'");
}

json warp_json(const WarpPtr& w) {
  if (!w) return {{"type", "none"}};
  if (const auto* lw = dynamic_cast<const LogWarp*>(w.get())) return {{"type", "log"}, {"a", lw->a()}};
  if (dynamic_cast<const IdentityWarp*>(w.get())) return {{"type", "identity"}};
  throw Error(ErrorCode::unsupported, "save_model: warp type cannot be serialized");
}

WarpPtr json_warp(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "none") return nullptr;
  if (type == "identity") return std::make_shared<IdentityWarp>();
  if (type == "log") return std::make_shared<LogWarp>(j.value("a", 10.0));
  throw Error(ErrorCode::format, "model: unknown warp type '" + type + "'");
}

}  // namespace

void save_model(const std::string& path, const ModelBundle& bundle, const std::string& flow_file) {
  if (!bundle.model) throw Error(ErrorCode::invalid_argument, "save_model: no model");
  const StarModel& m = *bundle.model;
  json j;
  j["format"] = "starflow-model";
  j["version"] = kModelFormatVersion;
  j["dim"] = m.dim();

  const Diffeo* base = m.base().get();
  if (dynamic_cast<const IdentityDiffeo*>(base)) {
    j["flow"] = {{"type", "identity"}};
  } else if (const auto* a = dynamic_cast<const AffineDiffeo*>(base)) {
    j["flow"] = {{"type", "affine"}, {"matrix", mat_rows_json(a->matrix())}, {"offset", vec_json(a->offset())}};
  } else if (const auto* f = dynamic_cast<const CouplingFlow*>(base)) {
    save_checkpoint((fs::path(path).parent_path() / flow_file).string(), *f);
    j["flow"] = {{"type", "coupling"}, {"checkpoint", flow_file}};
  } else {
    throw Error(ErrorCode::unsupported, "save_model: base map type cannot be serialized");
  }
  j["warp"] = warp_json(m.warp());
  j["radial"] = radial_json(*m.radial());
  if (bundle.archetypes.size() > 0) {
    require_dim(bundle.archetypes.rows(), m.dim(), "save_model archetypes");
    j["archetypes"] = {{"points", mat_rows_json(bundle.archetypes.transpose())}, {"labels", bundle.archetype_labels}};
  }

  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "save_model: cannot open " + path);
  os << j.dump(2) << '\n';
  if (!os) throw Error(ErrorCode::io, "save_model: write failed for " + path);
}

ModelBundle load_model(const std::string& path, const NormalizerOptions& opts) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io, "load_model: cannot open " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, "load_model: " + std::string(e.what()));
  }
  try {
    if (j.value("format", "") != "starflow-model") throw Error(ErrorCode::format, "load_model: not a model file");
    if (j.value("version", 0) != kModelFormatVersion) throw Error(ErrorCode::format, "load_model: unsupported version");
    const int d = j.at("dim").get<int>();
    if (d < 1) throw Error(ErrorCode::format, "load_model: bad dimension");

    DiffeoPtr base;
    const json& flow = j.at("flow");
    const auto type = flow.at("type").get<std::string>();
    if (type == "identity") {
      base = std::make_shared<IdentityDiffeo>(d);
    } else if (type == "affine") {
      base = std::make_shared<AffineDiffeo>(json_rows(flow.at("matrix"), "matrix"), json_vec(flow.at("offset"), "offset"));
    } else if (type == "coupling") {
      const fs::path ckpt = fs::path(path).parent_path() / flow.at("checkpoint").get<std::string>();
      base = std::make_shared<CouplingFlow>(load_checkpoint(ckpt.string()));
    } else {
      throw Error(ErrorCode::format, "load_model: unknown flow type '" + type + "'");
    }
    require_dim(base->dim(), d, "load_model flow");

    ModelBundle out;
    out.model = std::make_shared<StarModel>(base, json_radial(j.at("radial"), d), json_warp(j.at("warp")), opts);
    if (j.contains("archetypes")) {
      out.archetypes = json_rows(j["archetypes"].at("points"), "archetypes").transpose();
      require_dim(out.archetypes.rows(), d, "load_model archetypes");
      out.archetype_labels = j["archetypes"].value("labels", std::vector<int>{});
      if (!out.archetype_labels.empty() &&
          static_cast<Eigen::Index>(out.archetype_labels.size()) != out.archetypes.cols()) {
        throw Error(ErrorCode::format, "load_model: one label per archetype required");
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, "load_model: " + std::string(e.what()));
  }
}

}  // namespace starflow
