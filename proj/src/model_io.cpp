#include <fstream>
#include <limits>
#include <sstream>

#include "sotbt/errors.hpp"
#include "sotbt/kinematics.hpp"
#include "yaml_util.hpp"

namespace sotbt {

namespace {

void read_frame(const YAML::Node& node, std::string_view what, Eigen::Vector3d& xyz, Eigen::Vector3d& rpy) {
  yaml::only_keys(node, {"xyz", "rpy"}, what);
  xyz = node["xyz"] ? yaml::as_vec3(node["xyz"], "xyz") : Eigen::Vector3d::Zero();
  rpy = node["rpy"] ? yaml::as_vec3(node["rpy"], "rpy") : Eigen::Vector3d::Zero();
}

ManipulatorModel model_from_node(const YAML::Node& root) {
  yaml::only_keys(root, {"name", "joints", "ee_offset"}, "model");
  const std::string name = root["name"] ? yaml::as<std::string>(root["name"], "name") : "model";
  const YAML::Node joints = yaml::required(root, "joints", "model");
  yaml::expect_seq(joints, "joints");

  std::vector<JointDescriptor> descs;
  for (const auto& jn : joints) {
    yaml::only_keys(jn, {"name", "axis", "origin", "limits"}, "joint");
    JointDescriptor d;
    d.name = jn["name"] ? yaml::as<std::string>(jn["name"], "joint name") : "joint" + std::to_string(descs.size() + 1);
    if (jn["axis"]) d.axis = yaml::as_vec3(jn["axis"], "axis");
    if (jn["origin"]) read_frame(jn["origin"], "joint origin", d.origin_xyz, d.origin_rpy);
    if (jn["limits"]) {
      const YAML::Node lim = jn["limits"];
      yaml::only_keys(lim, {"lower", "upper", "velocity"}, "limits");
      if (lim["lower"]) d.lower = yaml::as_double(lim["lower"], "lower");
      if (lim["upper"]) d.upper = yaml::as_double(lim["upper"], "upper");
      if (lim["velocity"]) d.max_velocity = yaml::as_double(lim["velocity"], "velocity");
    }
    descs.push_back(d);
  }
  Eigen::Vector3d ee_xyz = Eigen::Vector3d::Zero(), ee_rpy = Eigen::Vector3d::Zero();
  if (root["ee_offset"]) read_frame(root["ee_offset"], "ee_offset", ee_xyz, ee_rpy);
  try {
    return ManipulatorModel(name, std::move(descs), ee_xyz, ee_rpy);
  } catch (const ValidationError& e) {
    yaml::fail(root, e.what());
  }
}

void emit_frame(YAML::Emitter& out, const Eigen::Vector3d& xyz, const Eigen::Vector3d& rpy) {
  out << YAML::BeginMap;
  out << YAML::Key << "xyz" << YAML::Value;
  yaml::emit_vector(out, xyz);
  out << YAML::Key << "rpy" << YAML::Value;
  yaml::emit_vector(out, rpy);
  out << YAML::EndMap;
}

}  // namespace

ManipulatorModel parse_model(std::string_view text) { return model_from_node(yaml::load(text)); }

ManipulatorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path.string() + "'", 0, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::string serialize_model(const ManipulatorModel& model) {
  YAML::Emitter out;
  out.SetDoublePrecision(std::numeric_limits<double>::max_digits10);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << model.name();
  out << YAML::Key << "joints" << YAML::Value << YAML::BeginSeq;
  for (const auto& j : model.joints()) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << j.name;
    out << YAML::Key << "axis" << YAML::Value;
    yaml::emit_vector(out, j.axis);
    out << YAML::Key << "origin" << YAML::Value;
    emit_frame(out, j.origin_xyz, j.origin_rpy);
    out << YAML::Key << "limits" << YAML::Value << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "lower" << YAML::Value << j.lower;
    out << YAML::Key << "upper" << YAML::Value << j.upper;
    out << YAML::Key << "velocity" << YAML::Value << j.max_velocity;
    out << YAML::EndMap;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "ee_offset" << YAML::Value;
  emit_frame(out, model.ee_xyz(), model.ee_rpy());
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace sotbt
