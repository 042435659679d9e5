#include "isphar/modelpack.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "isphar/error.hpp"

namespace isphar {

namespace {

class Writer {
public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xFF));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == b_.size(); }

private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw Error(ErrorCode::StructuralInvariantViolated, "payload ends inside a record");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> b) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, b.data(), static_cast<uInt>(b.size()));
  return static_cast<std::uint32_t>(c);
}

template <typename T>
T checked(std::size_t v, std::size_t max, const char* what) {
  if (v > max) throw Error(ErrorCode::ModelTooLarge, std::string(what) + " = " + std::to_string(v) + " exceeds its field");
  return static_cast<T>(v);
}

std::uint16_t u16_field(std::size_t v, const char* what) { return checked<std::uint16_t>(v, 0xFFFF, what); }
std::uint8_t u8_field(std::size_t v, const char* what) { return checked<std::uint8_t>(v, 0xFF, what); }

void write_mlp(Writer& w, const MlpModel& m) {
  w.u8(u8_field(m.dims.size(), "dims count"));
  for (auto d : m.dims) w.u16(u16_field(d, "layer width"));
  for (const auto& layer : m.layers) {
    for (float x : layer.weights) w.f32(x);
    for (float x : layer.biases) w.f32(x);
  }
}

void write_forest(Writer& w, const Forest& f) {
  w.u16(u16_field(f.n_rounds, "rounds"));
  w.f32(f.shrinkage);
  w.f32(f.base_score);
  for (const Tree& t : f.trees) {
    w.u16(u16_field(t.nodes.size(), "node count"));
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf) {
        w.u8(1);
        w.f32(n.value);
      } else {
        w.u8(0);
        w.u8(n.feature);
        w.f32(n.threshold);
        w.u16(n.left);
        w.u16(n.right);
      }
    }
  }
}

PackHeader parse_header(std::span<const std::uint8_t> bytes) {
  const std::size_t have = std::min(bytes.size(), kPackMagic.size());
  for (std::size_t i = 0; i < have; ++i)
    if (bytes[i] != static_cast<std::uint8_t>(kPackMagic[i])) throw Error(ErrorCode::BadMagic, "not an ISPM pack");
  if (bytes.size() <= kPackMagic.size())
    throw Error(ErrorCode::UnsupportedVersion, "pack truncated before the format version");
  if (bytes[4] != kPackFormatVersion)
    throw Error(ErrorCode::UnsupportedVersion, "pack format version " + std::to_string(bytes[4]) + " is not supported");
  if (bytes.size() < kPackHeaderBytes + kPackChecksumBytes)
    throw Error(ErrorCode::ChecksumMismatch, "pack truncated: " + std::to_string(bytes.size()) + " bytes");
  const std::size_t body = bytes.size() - kPackChecksumBytes;
  Reader tail(bytes.subspan(body));
  if (tail.u32() != crc32_of(bytes.first(body))) throw Error(ErrorCode::ChecksumMismatch, "pack checksum mismatch");

  Reader r(bytes.subspan(5, kPackHeaderBytes - 5));
  PackHeader h;
  const std::uint8_t kind = r.u8();
  if (kind != static_cast<std::uint8_t>(ModelKind::Mlp) && kind != static_cast<std::uint8_t>(ModelKind::Forest))
    throw Error(ErrorCode::StructuralInvariantViolated, "unknown model kind " + std::to_string(kind));
  h.kind = static_cast<ModelKind>(kind);
  h.n_inputs = r.u16();
  h.n_classes = r.u16();
  h.manifest_version = r.u16();
  h.ma_width = r.u8();
  for (auto& b : h.mask) b = r.u8();
  return h;
}

FeatureMask header_mask(const PackHeader& h) {
  // Bits beyond the 78 canonical features must be clear.
  const unsigned spare = static_cast<unsigned>(h.mask.back()) >> (kNumFeatures % 8);
  if (spare != 0) throw Error(ErrorCode::StructuralInvariantViolated, "mask sets bits past the last feature");
  FeatureMask mask = FeatureMask::from_bitset(h.mask);
  if (mask.empty()) throw Error(ErrorCode::StructuralInvariantViolated, "feature mask is empty");
  if (mask.size() != h.n_inputs)
    throw Error(ErrorCode::StructuralInvariantViolated, "n_inputs differs from the mask popcount");
  if (h.n_classes == 0) throw Error(ErrorCode::StructuralInvariantViolated, "pack declares no classes");
  if (h.ma_width % 2 == 0) throw Error(ErrorCode::StructuralInvariantViolated, "ma_width must be odd");
  return mask;
}

MlpModel read_mlp(Reader& r, const PackHeader& h, FeatureMask mask) {
  MlpModel m;
  const std::size_t n_dims = r.u8();
  if (n_dims < 2) throw Error(ErrorCode::StructuralInvariantViolated, "MLP needs at least two widths");
  for (std::size_t i = 0; i < n_dims; ++i) {
    const std::size_t d = r.u16();
    if (d == 0) throw Error(ErrorCode::StructuralInvariantViolated, "zero layer width");
    m.dims.push_back(d);
  }
  if (m.dims.front() != h.n_inputs || m.dims.back() != h.n_classes)
    throw Error(ErrorCode::StructuralInvariantViolated, "MLP dims disagree with the header");
  for (std::size_t l = 0; l + 1 < n_dims; ++l) {
    DenseLayer<float> layer;
    layer.in = m.dims[l];
    layer.out = m.dims[l + 1];
    layer.weights.resize(layer.in * layer.out);
    layer.biases.resize(layer.out);
    for (float& x : layer.weights) x = r.f32();
    for (float& x : layer.biases) x = r.f32();
    m.layers.push_back(std::move(layer));
  }
  m.mask = std::move(mask);
  m.manifest_version = h.manifest_version;
  m.ma_width = h.ma_width;
  try {
    validate_mlp(m);
  } catch (const Error& e) {
    throw Error(ErrorCode::StructuralInvariantViolated, e.what());
  }
  return m;
}

Forest read_forest(Reader& r, const PackHeader& h, FeatureMask mask) {
  Forest f;
  f.n_classes = h.n_classes;
  f.n_rounds = r.u16();
  f.shrinkage = r.f32();
  f.base_score = r.f32();
  f.trees.resize(f.n_rounds * f.n_classes);
  for (Tree& t : f.trees) {
    const std::size_t count = r.u16();
    t.nodes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint8_t flag = r.u8();
      if (flag == 1) {
        t.nodes.push_back(TreeNode::leaf(r.f32()));
      } else if (flag == 0) {
        const std::uint8_t feat = r.u8();
        const float thr = r.f32();
        const std::uint16_t left = r.u16();
        const std::uint16_t right = r.u16();
        t.nodes.push_back(TreeNode::split(feat, thr, left, right));
      } else {
        throw Error(ErrorCode::StructuralInvariantViolated, "unknown node flag " + std::to_string(flag));
      }
    }
  }
  f.mask = std::move(mask);
  f.manifest_version = h.manifest_version;
  f.ma_width = h.ma_width;
  validate_forest(f);
  return f;
}

}  // namespace

std::vector<std::uint8_t> encode(const Model& m) {
  const FeatureMask& mask = mask_of(m);
  if (mask.empty()) throw Error(ErrorCode::StructuralInvariantViolated, "cannot pack a model without a feature mask");
  if (const auto* mlp = std::get_if<MlpModel>(&m)) validate_mlp(*mlp);
  else validate_forest(std::get<Forest>(m));
  if (mask.size() != n_inputs(m)) throw Error(ErrorCode::StructuralInvariantViolated, "mask size differs from inputs");

  Writer w;
  for (char c : kPackMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u8(kPackFormatVersion);
  w.u8(static_cast<std::uint8_t>(kind_of(m)));
  w.u16(u16_field(n_inputs(m), "n_inputs"));
  w.u16(u16_field(n_classes(m), "n_classes"));
  w.u16(manifest_version_of(m));
  w.u8(u8_field(ma_width_of(m), "ma_width"));
  w.bytes(mask.bitset());
  if (const auto* mlp = std::get_if<MlpModel>(&m)) write_mlp(w, *mlp);
  else write_forest(w, std::get<Forest>(m));
  w.u32(crc32_of(w.buffer()));
  return std::move(w.buffer());
}

PackHeader read_header(std::span<const std::uint8_t> bytes) { return parse_header(bytes); }

std::size_t payload_bytes(std::span<const std::uint8_t> pack) {
  parse_header(pack);
  return pack.size() - kPackHeaderBytes - kPackChecksumBytes;
}

Model decode(std::span<const std::uint8_t> bytes) {
  const PackHeader h = parse_header(bytes);
  FeatureMask mask = header_mask(h);
  Reader r(bytes.subspan(kPackHeaderBytes, bytes.size() - kPackHeaderBytes - kPackChecksumBytes));
  Model m = h.kind == ModelKind::Mlp ? Model(read_mlp(r, h, std::move(mask))) : Model(read_forest(r, h, std::move(mask)));
  if (!r.done()) throw Error(ErrorCode::StructuralInvariantViolated, "trailing bytes after the payload");
  return m;
}

void save_pack(std::span<const std::uint8_t> pack, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(pack.data()), static_cast<std::streamsize>(pack.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::vector<std::uint8_t> load_pack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string_view section_name(MemorySection s) {
  switch (s) {
    case MemorySection::Stack: return "stack";
    case MemorySection::Program: return "program";
    case MemorySection::Data: return "data";
  }
  return "?";
}

std::size_t FootprintReport::bytes_of(std::string_view name) const {
  for (const auto& e : breakdown)
    if (e.name == name) return e.bytes;
  return 0;
}

namespace {

FootprintReport account(ModelKind kind, std::size_t inputs, std::size_t classes, std::size_t max_width,
                        std::size_t channels, std::size_t payload, const AccountingModel& a) {
  FootprintReport r;
  r.breakdown.push_back({"feature_buffer", MemorySection::Stack, inputs * 4});
  if (kind == ModelKind::Mlp) {
    r.breakdown.push_back({"activation_ping", MemorySection::Stack, max_width * 4});
    r.breakdown.push_back({"activation_pong", MemorySection::Stack, max_width * 4});
  } else {
    r.breakdown.push_back({"score_accumulator", MemorySection::Stack, classes * 4});
  }
  r.breakdown.push_back({"scratch", MemorySection::Stack, a.scratch_bytes});
  r.breakdown.push_back({"model_payload", MemorySection::Program, payload});
  r.breakdown.push_back({kind == ModelKind::Mlp ? "feedforward_code" : "traversal_code", MemorySection::Program,
                         kind == ModelKind::Mlp ? a.mlp_code_bytes : a.forest_code_bytes});
  r.breakdown.push_back({"window_buffer", MemorySection::Data, a.window_len * channels * 4});
  for (const auto& e : r.breakdown) {
    switch (e.section) {
      case MemorySection::Stack: r.stack_bytes += e.bytes; break;
      case MemorySection::Program: r.program_bytes += e.bytes; break;
      case MemorySection::Data: r.data_bytes += e.bytes; break;
    }
  }
  return r;
}

std::size_t max_width_of(const Model& m) {
  if (const auto* mlp = std::get_if<MlpModel>(&m)) return mlp->max_width();
  return 0;
}

}  // namespace

FootprintReport footprint(const Model& m, const AccountingModel& a) {
  const auto pack = encode(m);
  return account(kind_of(m), n_inputs(m), n_classes(m), max_width_of(m), mask_of(m).channels_used().size(),
                 pack.size() - kPackHeaderBytes - kPackChecksumBytes, a);
}

FootprintReport footprint(std::span<const std::uint8_t> pack, const AccountingModel& a) {
  const Model m = decode(pack);
  return account(kind_of(m), n_inputs(m), n_classes(m), max_width_of(m), mask_of(m).channels_used().size(),
                 pack.size() - kPackHeaderBytes - kPackChecksumBytes, a);
}

void Budget::validate() const {
  if (max_stack == 0 || max_program == 0 || max_data == 0)
    throw Error(ErrorCode::InvalidArgument, "budget limits must be positive");
}

AuditResult audit(const FootprintReport& report, const Budget& budget) {
  AuditResult res;
  auto check = [&](MemorySection s, std::size_t limit, std::size_t actual) {
    if (actual > limit) res.violations.push_back({s, limit, actual});
  };
  check(MemorySection::Stack, budget.max_stack, report.stack_bytes);
  check(MemorySection::Program, budget.max_program, report.program_bytes);
  check(MemorySection::Data, budget.max_data, report.data_bytes);
  res.pass = res.violations.empty();
  return res;
}

std::string AuditResult::to_text() const {
  std::ostringstream os;
  os << "audit: " << (pass ? "PASS" : "FAIL") << '\n';
  for (const auto& v : violations)
    os << "  " << section_name(v.section) << " budget exceeded: " << v.actual << " > " << v.limit << " (over by "
       << v.overage() << " B)\n";
  return os.str();
}

std::string describe(std::span<const std::uint8_t> pack, const AccountingModel& a) {
  const PackHeader h = parse_header(pack);
  const Model m = decode(pack);
  const FootprintReport r = footprint(pack, a);
  std::ostringstream os;
  os << "format_version: " << static_cast<int>(h.version) << '\n'
     << "kind: " << (h.kind == ModelKind::Mlp ? "mlp" : "forest") << '\n'
     << "n_inputs: " << h.n_inputs << '\n'
     << "n_classes: " << h.n_classes << '\n'
     << "manifest_version: " << h.manifest_version << '\n'
     << "ma_width: " << static_cast<int>(h.ma_width) << '\n'
     << "features:";
  for (const auto& name : mask_of(m).names()) os << ' ' << name;
  os << '\n';
  if (const auto* mlp = std::get_if<MlpModel>(&m)) {
    os << "dims:";
    for (auto d : mlp->dims) os << ' ' << d;
    os << "\nparameters: " << mlp->parameter_count() << '\n';
  } else {
    const auto& f = std::get<Forest>(m);
    os << "rounds: " << f.n_rounds << "\ntrees: " << f.trees.size() << "\nnodes: " << f.node_count() << '\n';
  }
  os << "pack_bytes: " << pack.size() << '\n';
  for (const auto& e : r.breakdown) os << section_name(e.section) << '.' << e.name << ": " << e.bytes << '\n';
  os << "stack_bytes: " << r.stack_bytes << "\nprogram_bytes: " << r.program_bytes << "\ndata_bytes: " << r.data_bytes
     << '\n';
  return os.str();
}

}  // namespace isphar
