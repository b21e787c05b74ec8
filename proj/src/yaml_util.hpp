#pragma once

// Strict YAML accessors shared by the document parsers.

#include <initializer_list>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <yaml-cpp/yaml.h>

#include "sotbt/errors.hpp"

namespace sotbt::yaml {

[[noreturn]] inline void fail(const YAML::Node& node, const std::string& msg) {
  const YAML::Mark m = node.Mark();
  if (m.is_null()) throw ParseError(msg, 0, 0);
  throw ParseError(msg, m.line + 1, m.column + 1);
}

inline YAML::Node load(std::string_view text) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, e.mark.line + 1, e.mark.column + 1);
  }
}

inline void expect_map(const YAML::Node& node, std::string_view what) {
  if (!node.IsMap()) fail(node, std::string(what) + " must be a mapping");
}

inline void expect_seq(const YAML::Node& node, std::string_view what) {
  if (!node.IsSequence()) fail(node, std::string(what) + " must be a sequence");
}

/// Rejects keys not in `allowed`.
inline void only_keys(const YAML::Node& node, std::initializer_list<std::string_view> allowed, std::string_view what) {
  expect_map(node, what);
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) fail(kv.first, "unknown key '" + key + "' in " + std::string(what));
  }
}

inline YAML::Node required(const YAML::Node& node, const std::string& key, std::string_view what) {
  const YAML::Node child = node[key];
  if (!child) fail(node, "missing key '" + key + "' in " + std::string(what));
  return child;
}

template <typename T>
T as(const YAML::Node& node, std::string_view what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(node, "invalid value for " + std::string(what));
  }
}

inline double as_double(const YAML::Node& node, std::string_view what) { return as<double>(node, what); }

inline Eigen::VectorXd as_vector(const YAML::Node& node, std::string_view what, int expected = -1) {
  expect_seq(node, what);
  if (expected >= 0 && static_cast<int>(node.size()) != expected) {
    fail(node, std::string(what) + " needs " + std::to_string(expected) + " entries");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) v(static_cast<Eigen::Index>(i)) = as_double(node[i], what);
  return v;
}

inline Eigen::Vector3d as_vec3(const YAML::Node& node, std::string_view what) {
  return as_vector(node, what, 3);
}

inline void emit_vector(YAML::Emitter& out, const Eigen::VectorXd& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << v(i);
  out << YAML::EndSeq;
}

}  // namespace sotbt::yaml
