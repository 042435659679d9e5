#pragma once

#include <cstdint>

namespace isphar::testing {

// Number of global operator new calls made by this process so far.
std::uint64_t allocation_count();

// Counts allocations made while alive.
class AllocationScope {
public:
  AllocationScope() : start_(allocation_count()) {}
  std::uint64_t count() const { return allocation_count() - start_; }

private:
  std::uint64_t start_;
};

}  // namespace isphar::testing
