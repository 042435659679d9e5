#include "isphar/model_io.hpp"

#include <fstream>
#include <sstream>

#include "isphar/error.hpp"
#include "json.hpp"

namespace isphar {

using nlohmann::json;

namespace {

json tree_json(const Tree& t) {
  json nodes = json::array();
  for (const TreeNode& n : t.nodes) {
    if (n.is_leaf) nodes.push_back({{"leaf", n.value}});
    else nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
  }
  return nodes;
}

Tree tree_from(const json& j) {
  Tree t;
  for (const auto& n : j) {
    if (n.contains("leaf")) t.nodes.push_back(TreeNode::leaf(n.at("leaf").get<float>()));
    else
      t.nodes.push_back(TreeNode::split(n.at("f").get<std::uint8_t>(), n.at("t").get<float>(),
                                        n.at("l").get<std::uint16_t>(), n.at("r").get<std::uint16_t>()));
  }
  return t;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string model_to_json(const StoredModel& s) {
  json j;
  j["format"] = "isphar-model";
  j["version"] = 1;
  j["classes"] = s.classes;
  j["features"] = mask_of(s.model).names();
  j["ma_width"] = ma_width_of(s.model);
  j["manifest_version"] = manifest_version_of(s.model);
  if (const auto* m = std::get_if<MlpModel>(&s.model)) {
    j["kind"] = "mlp";
    j["dims"] = m->dims;
    json layers = json::array();
    for (const auto& l : m->layers) layers.push_back({{"weights", l.weights}, {"biases", l.biases}});
    j["layers"] = layers;
  } else {
    const auto& f = std::get<Forest>(s.model);
    j["kind"] = "forest";
    j["n_classes"] = f.n_classes;
    j["rounds"] = f.n_rounds;
    j["shrinkage"] = f.shrinkage;
    j["base_score"] = f.base_score;
    json trees = json::array();
    for (const Tree& t : f.trees) trees.push_back(tree_json(t));
    j["trees"] = trees;
  }
  return j.dump(1) + "\n";
}

StoredModel model_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "isphar-model" || j.at("version") != 1)
      throw Error(ErrorCode::ParseError, "not an isphar model file (version 1)");
    StoredModel s;
    s.classes = j.at("classes").get<std::vector<std::string>>();
    const auto names = j.at("features").get<std::vector<std::string>>();
    const FeatureMask mask = FeatureMask::from_names(names);
    const std::string kind = j.at("kind");
    if (kind == "mlp") {
      MlpModel m;
      m.dims = j.at("dims").get<std::vector<std::size_t>>();
      const auto& layers = j.at("layers");
      if (layers.size() + 1 != m.dims.size()) throw Error(ErrorCode::ParseError, "layer count disagrees with dims");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        DenseLayer<float> d;
        d.in = m.dims[l];
        d.out = m.dims[l + 1];
        d.weights = layers[l].at("weights").get<std::vector<float>>();
        d.biases = layers[l].at("biases").get<std::vector<float>>();
        m.layers.push_back(std::move(d));
      }
      m.mask = mask;
      m.ma_width = j.at("ma_width");
      m.manifest_version = j.at("manifest_version");
      validate_mlp(m);
      s.model = std::move(m);
    } else if (kind == "forest") {
      Forest f;
      f.n_classes = j.at("n_classes");
      f.n_rounds = j.at("rounds");
      f.shrinkage = j.at("shrinkage");
      f.base_score = j.at("base_score");
      for (const auto& t : j.at("trees")) f.trees.push_back(tree_from(t));
      f.mask = mask;
      f.ma_width = j.at("ma_width");
      f.manifest_version = j.at("manifest_version");
      validate_forest(f);
      s.model = std::move(f);
    } else {
      throw Error(ErrorCode::ParseError, "unknown model kind '" + kind + "'");
    }
    if (s.classes.size() != n_classes(s.model))
      throw Error(ErrorCode::ParseError, "class list length differs from the model's outputs");
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const StoredModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << model_to_json(m);
}

StoredModel load_model(const std::filesystem::path& path) { return model_from_json(read_text(path)); }

void save_labels(std::span<const std::string> classes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& c : classes) out << c << '\n';
}

std::vector<std::string> load_labels(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace isphar
