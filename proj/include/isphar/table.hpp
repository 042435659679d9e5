#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isphar/features.hpp"

namespace isphar {

// Row-major labeled feature rows. y[i] indexes into `classes`.
struct LabeledFeatures {
  std::size_t dims = 0;
  std::vector<double> x;
  std::vector<int> y;
  std::vector<std::string> classes;
  std::vector<std::string> columns;  // feature names, one per dim

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * dims, dims}; }
  std::size_t class_count() const { return classes.size(); }

  void add(std::span<const double> values, int label);
  LabeledFeatures subset(std::span<const std::size_t> rows) const;
  // Projects every row onto the mask; requires full 78-wide rows.
  LabeledFeatures masked(const FeatureMask& mask) const;
  std::vector<std::string> label_names() const;  // per row
  std::size_t distinct_labels() const;
};

// Featurizes windows; labels are mapped through `classes` (UnknownLabel when absent).
LabeledFeatures featurize(std::span<const Window> windows, std::span<const std::string> classes,
                          std::size_t ma_width = kDefaultMaWidth);

// CSV: header `label,<feature names...>`, one row per window.
std::string format_feature_table(const LabeledFeatures& t);
LabeledFeatures parse_feature_table(std::string_view text, std::span<const std::string> classes = {});
void save_feature_table(const LabeledFeatures& t, const std::filesystem::path& path);
LabeledFeatures load_feature_table(const std::filesystem::path& path, std::span<const std::string> classes = {});

}  // namespace isphar
