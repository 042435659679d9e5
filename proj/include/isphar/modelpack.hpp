#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "isphar/models.hpp"

namespace isphar {

inline constexpr std::array<char, 4> kPackMagic{'I', 'S', 'P', 'M'};
inline constexpr std::uint8_t kPackFormatVersion = 1;
// magic 4 + version 1 + kind 1 + n_inputs 2 + n_classes 2 + manifest 2 + ma_width 1 + mask 10
inline constexpr std::size_t kPackHeaderBytes = 23;
inline constexpr std::size_t kPackChecksumBytes = 4;
inline constexpr std::size_t kInternalNodeBytes = 10;  // flag, feature u8, threshold f32, left u16, right u16
inline constexpr std::size_t kLeafNodeBytes = 5;       // flag, value f32

struct PackHeader {
  std::uint8_t version = kPackFormatVersion;
  ModelKind kind = ModelKind::Mlp;
  std::uint16_t n_inputs = 0;
  std::uint16_t n_classes = 0;
  std::uint16_t manifest_version = kFeatureManifestVersion;
  std::uint8_t ma_width = kDefaultMaWidth;
  FeatureMask::Bitset mask{};
};

std::vector<std::uint8_t> encode(const Model& m);
Model decode(std::span<const std::uint8_t> bytes);
// Validates magic, version, and checksum; does not parse the payload.
PackHeader read_header(std::span<const std::uint8_t> bytes);
std::size_t payload_bytes(std::span<const std::uint8_t> pack);

void save_pack(std::span<const std::uint8_t> pack, const std::filesystem::path& path);
std::vector<std::uint8_t> load_pack(const std::filesystem::path& path);

struct AccountingModel {
  std::size_t scratch_bytes = 64;
  std::size_t mlp_code_bytes = 4096;
  std::size_t forest_code_bytes = 4096;
  std::size_t window_len = 39;
};

enum class MemorySection { Stack, Program, Data };
std::string_view section_name(MemorySection s);

struct BufferEntry {
  std::string name;
  MemorySection section = MemorySection::Stack;
  std::size_t bytes = 0;
};

struct FootprintReport {
  std::size_t stack_bytes = 0;
  std::size_t program_bytes = 0;
  std::size_t data_bytes = 0;
  std::vector<BufferEntry> breakdown;

  std::size_t bytes_of(std::string_view name) const;  // 0 when absent
};

FootprintReport footprint(std::span<const std::uint8_t> pack, const AccountingModel& accounting = {});
FootprintReport footprint(const Model& m, const AccountingModel& accounting = {});

struct Budget {
  std::size_t max_stack = 850;
  std::size_t max_program = 32768;
  std::size_t max_data = 8192;

  void validate() const;
};

struct BudgetViolation {
  MemorySection section;
  std::size_t limit = 0;
  std::size_t actual = 0;
  std::size_t overage() const { return actual - limit; }
};

struct AuditResult {
  bool pass = true;
  std::vector<BudgetViolation> violations;
  std::string to_text() const;
};

AuditResult audit(const FootprintReport& report, const Budget& budget = {});

// Human-readable dump of the header fields and the footprint breakdown.
std::string describe(std::span<const std::uint8_t> pack, const AccountingModel& accounting = {});

}  // namespace isphar
