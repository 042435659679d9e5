#include "isphar/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "isphar/error.hpp"

namespace isphar {

void LabeledFeatures::add(std::span<const double> values, int label) {
  if (values.size() != dims) throw Error(ErrorCode::DimMismatch, "row width differs from table dims");
  x.insert(x.end(), values.begin(), values.end());
  y.push_back(label);
}

LabeledFeatures LabeledFeatures::subset(std::span<const std::size_t> rows) const {
  LabeledFeatures out;
  out.dims = dims;
  out.classes = classes;
  out.columns = columns;
  out.x.reserve(rows.size() * dims);
  for (std::size_t r : rows) out.add(row(r), y[r]);
  return out;
}

LabeledFeatures LabeledFeatures::masked(const FeatureMask& mask) const {
  if (dims != kNumFeatures) throw Error(ErrorCode::DimMismatch, "masking needs full-width feature rows");
  LabeledFeatures out;
  out.dims = mask.size();
  out.classes = classes;
  out.columns = mask.names();
  out.x.reserve(size() * out.dims);
  for (std::size_t i = 0; i < size(); ++i) out.add(apply_mask(row(i), mask), y[i]);
  return out;
}

std::vector<std::string> LabeledFeatures::label_names() const {
  std::vector<std::string> out;
  out.reserve(y.size());
  for (int l : y) out.push_back(classes.at(static_cast<std::size_t>(l)));
  return out;
}

std::size_t LabeledFeatures::distinct_labels() const { return std::set<int>(y.begin(), y.end()).size(); }

LabeledFeatures featurize(std::span<const Window> windows, std::span<const std::string> classes, std::size_t ma_width) {
  LabeledFeatures t;
  t.dims = kNumFeatures;
  t.classes.assign(classes.begin(), classes.end());
  t.columns.assign(feature_names().begin(), feature_names().end());
  t.x.reserve(windows.size() * kNumFeatures);
  for (const Window& w : windows) {
    const std::string label = w.label().value_or("");
    auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) throw Error(ErrorCode::UnknownLabel, "window label '" + label + "' not in class list");
    const FeatureVector fv = extract_features(w, ma_width);
    t.add(fv, static_cast<int>(it - classes.begin()));
  }
  return t;
}

std::string format_feature_table(const LabeledFeatures& t) {
  std::string out = "label";
  for (const auto& c : t.columns) out += "," + c;
  out += "\n";
  char buf[40];
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += t.classes.at(static_cast<std::size_t>(t.y[i]));
    for (double v : t.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

LabeledFeatures parse_feature_table(std::string_view text, std::span<const std::string> classes) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "feature table is empty");
  LabeledFeatures t;
  {
    std::stringstream hs(line);
    std::string cell;
    std::getline(hs, cell, ',');
    if (cell != "label") throw Error(ErrorCode::ParseError, "feature table must start with a 'label' column");
    while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
  }
  t.dims = t.columns.size();
  t.classes.assign(classes.begin(), classes.end());
  const bool fixed_classes = !classes.empty();
  std::size_t line_no = 1;
  std::vector<double> row(t.dims);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream rs(line);
    std::string cell;
    std::getline(rs, cell, ',');
    auto it = std::find(t.classes.begin(), t.classes.end(), cell);
    int label;
    if (it != t.classes.end()) {
      label = static_cast<int>(it - t.classes.begin());
    } else if (fixed_classes) {
      throw Error(ErrorCode::UnknownLabel, "line " + std::to_string(line_no) + ": label '" + cell + "'");
    } else {
      t.classes.push_back(cell);
      label = static_cast<int>(t.classes.size() - 1);
    }
    for (std::size_t d = 0; d < t.dims; ++d) {
      if (!std::getline(rs, cell, ','))
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": too few cells");
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || p != cell.data() + cell.size() || !std::isfinite(v))
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad value '" + cell + "'");
      row[d] = v;
    }
    t.add(row, label);
  }
  return t;
}

void save_feature_table(const LabeledFeatures& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << format_feature_table(t);
}

LabeledFeatures load_feature_table(const std::filesystem::path& path, std::span<const std::string> classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_feature_table(ss.str(), classes);
}

}  // namespace isphar
