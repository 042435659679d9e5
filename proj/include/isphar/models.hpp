#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "isphar/forest.hpp"
#include "isphar/mlp.hpp"
#include "isphar/table.hpp"

namespace isphar {

using Model = std::variant<MlpModel, Forest>;

enum class ModelKind : std::uint8_t { Mlp = 1, Forest = 2 };

ModelKind kind_of(const Model& m);
const FeatureMask& mask_of(const Model& m);
std::size_t n_inputs(const Model& m);
std::size_t n_classes(const Model& m);
std::size_t ma_width_of(const Model& m);
std::uint16_t manifest_version_of(const Model& m);

std::vector<float> predict_scores(const Model& m, std::span<const float> masked_fv);
std::size_t predict_class(const Model& m, std::span<const float> masked_fv);
// Rounds the masked features to float, the model's input precision.
std::size_t predict_class(const Model& m, std::span<const double> masked_fv);

struct ConfusionMatrix {
  std::size_t n = 0;
  std::vector<std::uint64_t> counts;  // row = true class, col = predicted
  std::vector<std::string> classes;

  explicit ConfusionMatrix(std::size_t n_classes = 0, std::vector<std::string> names = {});

  std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * n + predicted]; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * n + predicted]; }
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t total() const;
  double rate(std::size_t truth, std::size_t predicted) const;  // row-normalized
  double accuracy() const;
  std::size_t index_of(std::string_view cls) const;  // UnknownClass when absent

  bool operator==(const ConfusionMatrix&) const = default;
};

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

// Rows may be full 78-wide (masked here) or already match the model's inputs.
Evaluation evaluate(const Model& m, const LabeledFeatures& data);

}  // namespace isphar
