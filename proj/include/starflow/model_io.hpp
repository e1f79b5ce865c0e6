#pragma once

#include <string>
#include <vector>

#include "starflow/star_model.hpp"

namespace starflow {

inline constexpr int kModelFormatVersion = 1;

/// A star model together with its archetypes (columns of `archetypes`, possibly empty).
struct ModelBundle {
  std::shared_ptr<const StarModel> model;
  Mat archetypes;
  std::vector<int> archetype_labels;
};

/// Writes `path` as JSON. A coupling-flow base is stored as a checkpoint named
/// `flow_file`, resolved relative to the JSON file's directory.
void save_model(const std::string& path, const ModelBundle& bundle, const std::string& flow_file = "flow.sfaa");

ModelBundle load_model(const std::string& path, const NormalizerOptions& opts = {});

}  // namespace starflow
