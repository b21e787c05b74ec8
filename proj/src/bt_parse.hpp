#pragma once

#include <map>
#include <memory>
#include <string>

#include <yaml-cpp/yaml.h>

#include "sotbt/bt.hpp"

namespace sotbt {

std::unique_ptr<Node> tree_from_node(const YAML::Node& node, const std::map<std::string, TaskSpec>& tasks);
std::vector<Effect> effects_from_node(const YAML::Node& node);

}  // namespace sotbt
