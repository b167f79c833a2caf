#ifndef BLINDSIM_SYSTEM_STATE_H_
#define BLINDSIM_SYSTEM_STATE_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "blindsim/tagged_word.h"

namespace blindsim {

inline constexpr size_t kDefaultRegisterCount = 32;
inline constexpr size_t kDefaultMemoryWords = 65536;
inline constexpr size_t kDefaultCacheLines = 16;

enum class FaultKind : uint8_t {
  kBlindedInstructionFetch,
  kBlindedBranch,
  kBlindedAddress,
  kBlindedStoreToUnblindable,
  kDecodeError,
  kOutOfRange,
};

std::string_view FaultKindName(FaultKind kind);
absl::StatusOr<FaultKind> ParseFaultKind(std::string_view name);

class MachineStatus {
 public:
  enum class Kind : uint8_t { kRunning, kHalted, kFaulted };

  static constexpr MachineStatus Running() { return MachineStatus(); }
  static constexpr MachineStatus Halted() {
    MachineStatus s;
    s.kind_ = Kind::kHalted;
    return s;
  }
  static constexpr MachineStatus Faulted(FaultKind fault) {
    MachineStatus s;
    s.kind_ = Kind::kFaulted;
    s.fault_ = fault;
    return s;
  }

  constexpr Kind kind() const { return kind_; }
  constexpr bool running() const { return kind_ == Kind::kRunning; }
  // Only meaningful when kind() == kFaulted.
  constexpr FaultKind fault() const { return fault_; }

  friend constexpr bool operator==(const MachineStatus&,
                                   const MachineStatus&) = default;

 private:
  constexpr MachineStatus() = default;

  Kind kind_ = Kind::kRunning;
  FaultKind fault_ = FaultKind::kDecodeError;
};

// "running", "halted" or "faulted:<fault kind>".
std::string FormatStatus(const MachineStatus& status);

struct CacheLine {
  bool valid = false;
  uint64_t address = 0;

  friend bool operator==(const CacheLine&, const CacheLine&) = default;
};

// Cache line -> address assignments. Addresses are visible state: they are
// only ever written from clear memory-operation addresses.
using CacheAssignments = std::vector<CacheLine>;

struct SystemState {
  uint64_t pc = 0;
  std::vector<TaggedWord> registers;
  std::vector<TaggedWord> memory;
  CacheAssignments cache;
  MachineStatus status = MachineStatus::Running();
  // Number of steps taken so far; the trace cursor.
  uint64_t cycle = 0;

  // All-clear-zero state of the given geometry.
  static SystemState Make(size_t register_count = kDefaultRegisterCount,
                          size_t memory_words = kDefaultMemoryWords,
                          size_t cache_lines = kDefaultCacheLines);

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

// Observer equivalence: equal pc, status, cycle and cache assignments, and
// ListEquiv registers and memory.
bool StateEquiv(const SystemState& a, const SystemState& b);

// Replaces every blinded payload with zero. The result is the canonical
// member of the input's equivalence class.
SystemState Redact(SystemState s);

// Text snapshot, one record per line: pc, non-clear-zero registers,
// non-clear-zero memory words, valid or nonzero cache lines, status.
std::string FormatSnapshot(const SystemState& s);

}  // namespace blindsim

#endif  // BLINDSIM_SYSTEM_STATE_H_
