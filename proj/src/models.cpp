#include "isphar/models.hpp"

#include <algorithm>

#include "isphar/error.hpp"

namespace isphar {

ModelKind kind_of(const Model& m) { return std::holds_alternative<MlpModel>(m) ? ModelKind::Mlp : ModelKind::Forest; }

const FeatureMask& mask_of(const Model& m) {
  return std::visit([](const auto& x) -> const FeatureMask& { return x.mask; }, m);
}

std::size_t n_inputs(const Model& m) {
  return std::visit([](const auto& x) { return x.n_inputs(); }, m);
}

std::size_t n_classes(const Model& m) {
  if (const auto* mlp = std::get_if<MlpModel>(&m)) return mlp->n_classes();
  return std::get<Forest>(m).n_classes;
}

std::size_t ma_width_of(const Model& m) {
  return std::visit([](const auto& x) { return x.ma_width; }, m);
}

std::uint16_t manifest_version_of(const Model& m) {
  return std::visit([](const auto& x) { return x.manifest_version; }, m);
}

std::vector<float> predict_scores(const Model& m, std::span<const float> fv) {
  if (const auto* mlp = std::get_if<MlpModel>(&m)) return mlp_forward<float, float>(*mlp, fv);
  return gbdt_predict(std::get<Forest>(m), fv);
}

std::size_t predict_class(const Model& m, std::span<const float> fv) {
  const auto scores = predict_scores(m, fv);
  return argmax<float>(scores);
}

std::size_t predict_class(const Model& m, std::span<const double> fv) {
  std::vector<float> f(fv.begin(), fv.end());
  return predict_class(m, std::span<const float>(f));
}

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes, std::vector<std::string> names)
    : n(n_classes), counts(n_classes * n_classes, 0), classes(std::move(names)) {
  if (!classes.empty() && classes.size() != n)
    throw Error(ErrorCode::InvalidArgument, "confusion matrix names differ from class count");
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < n; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

double ConfusionMatrix::rate(std::size_t truth, std::size_t predicted) const {
  const auto rs = row_sum(truth);
  return rs == 0 ? 0.0 : static_cast<double>(at(truth, predicted)) / static_cast<double>(rs);
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  if (t == 0) return 0.0;
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < n; ++i) diag += at(i, i);
  return static_cast<double>(diag) / static_cast<double>(t);
}

std::size_t ConfusionMatrix::index_of(std::string_view cls) const {
  auto it = std::find(classes.begin(), classes.end(), cls);
  if (it == classes.end()) throw Error(ErrorCode::UnknownClass, "class '" + std::string(cls) + "' not in matrix");
  return static_cast<std::size_t>(it - classes.begin());
}

Evaluation evaluate(const Model& m, const LabeledFeatures& data) {
  if (data.empty()) throw Error(ErrorCode::InvalidArgument, "evaluation data is empty");
  const std::size_t k = n_classes(m);
  const FeatureMask& mask = mask_of(m);
  const bool needs_mask = data.dims != n_inputs(m);
  if (needs_mask && data.dims != kNumFeatures)
    throw Error(ErrorCode::DimMismatch, "data rows are neither full width nor the model's input width");

  std::vector<std::string> names = data.classes;
  names.resize(k);
  Evaluation ev{0.0, ConfusionMatrix(k, names)};
  std::vector<float> fv(n_inputs(m));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.y[i] < 0 || static_cast<std::size_t>(data.y[i]) >= k)
      throw Error(ErrorCode::UnknownLabel, "label index " + std::to_string(data.y[i]) + " outside the model's classes");
    const auto row = data.row(i);
    if (needs_mask) {
      const auto idx = mask.indices();
      for (std::size_t j = 0; j < idx.size(); ++j) fv[j] = static_cast<float>(row[idx[j]]);
    } else {
      for (std::size_t j = 0; j < fv.size(); ++j) fv[j] = static_cast<float>(row[j]);
    }
    ++ev.confusion.at(static_cast<std::size_t>(data.y[i]), predict_class(m, std::span<const float>(fv)));
  }
  ev.accuracy = ev.confusion.accuracy();
  return ev;
}

}  // namespace isphar
