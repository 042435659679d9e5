#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "isphar/models.hpp"

namespace isphar {

// A trained model together with its class names, as kept on disk between
// `train` and `pack`.
struct StoredModel {
  Model model;
  std::vector<std::string> classes;
};

std::string model_to_json(const StoredModel& m);
StoredModel model_from_json(std::string_view text);
void save_model(const StoredModel& m, const std::filesystem::path& path);
StoredModel load_model(const std::filesystem::path& path);

// One class name per line.
void save_labels(std::span<const std::string> classes, const std::filesystem::path& path);
std::vector<std::string> load_labels(const std::filesystem::path& path);

}  // namespace isphar
