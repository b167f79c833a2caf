#ifndef BLINDSIM_MACHINE_H_
#define BLINDSIM_MACHINE_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "blindsim/isa.h"
#include "blindsim/system_state.h"

namespace blindsim {

// Maps a memory operation onto new cache line assignments. A policy only
// ever sees clear addresses.
using CachePolicy = std::function<CacheAssignments(const CacheAssignments&,
                                                   const MemoryOperation&)>;

// Line `address mod L` takes the address.
CacheAssignments DirectMappedPolicy(const CacheAssignments& cache,
                                    const MemoryOperation& op);

// Fully associative LRU kept as a recency-ordered line array: the accessed
// address moves to line 0, evicting the last line on a miss.
CacheAssignments LruPolicy(const CacheAssignments& cache,
                           const MemoryOperation& op);

// Half-open word-address interval [begin, end).
struct AddressRange {
  uint64_t begin = 0;
  uint64_t end = 0;

  bool Contains(uint64_t a) const { return a >= begin && a < end; }
  friend bool operator==(const AddressRange&, const AddressRange&) = default;
};

struct MachineConfig {
  PolicyMode mode = PolicyMode::kHardware;
  bool allow_raw_unblind = false;
  // When false the machine ignores tags entirely (fetch checks, unblindable
  // checks, tag edits) and uses UntrackedSemantics.
  bool enforce_policy = true;
  size_t register_count = kDefaultRegisterCount;
  size_t memory_words = kDefaultMemoryWords;
  size_t cache_lines = kDefaultCacheLines;
  std::vector<AddressRange> unblindable_ranges;
  std::optional<uint64_t> mmio_console;
  SemanticsFn semantics = InstructionSemantics;
  CachePolicy cache_policy = DirectMappedPolicy;

  // Ranges disjoint and in bounds; console inside an unblindable range.
  absl::Status Validate() const;
  bool IsUnblindable(uint64_t address) const;
  SystemState MakeState() const;
};

struct TraceEvent {
  enum class Kind : uint8_t {
    kFetch,        // pc, instruction word
    kMemAccess,    // memory-operation kind, address
    kCacheUpdate,  // line, address
    kFault,        // fault kind, pc
    kMmioWrite,    // value
    kHalt,         // pc
    kRefusal,      // pc; raw unblind refused by configuration
    kImport,       // destination address, word count (engine)
    kExport,       // source address, word count (engine)
  };

  Kind kind = Kind::kFetch;
  uint64_t cycle = 0;
  uint64_t a = 0;
  uint64_t b = 0;
  MemoryOperation::Kind mem_kind = MemoryOperation::Kind::kLoad;
  FaultKind fault = FaultKind::kDecodeError;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

using Trace = std::vector<TraceEvent>;

// One line, e.g. "cycle=3 kind=fetch pc=0x10 word=0x3020104".
std::string FormatTraceEvent(const TraceEvent& e);
// One line per event, each newline terminated.
std::string FormatTrace(std::span<const TraceEvent> trace);

struct StepInfo {
  // The step redirected pc to the fault handler at address 0.
  bool trapped = false;
};

// Executes one fetch-decode-execute step in place, appending trace events.
// A step that faults commits nothing except pc (trap) or status (fault). No-op
// unless s.status is running.
StepInfo StepInPlace(SystemState& s, const MachineConfig& cfg, Trace& trace);

// Value-semantics form of StepInPlace.
std::pair<SystemState, Trace> Step(SystemState s, const MachineConfig& cfg);

enum class RunOutcome : uint8_t { kHalted, kFaulted, kFaultLoop, kStepLimit };

std::string_view RunOutcomeName(RunOutcome outcome);

struct RunResult {
  SystemState state;
  Trace trace;
  RunOutcome outcome = RunOutcome::kStepLimit;
  uint64_t steps = 0;
};

// Steps until halt, fault, a trap loop (two consecutive traps at pc 0 that
// change nothing), or max_steps.
RunResult Run(SystemState s, const MachineConfig& cfg, uint64_t max_steps);

}  // namespace blindsim

#endif  // BLINDSIM_MACHINE_H_
