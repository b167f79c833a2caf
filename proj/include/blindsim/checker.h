#ifndef BLINDSIM_CHECKER_H_
#define BLINDSIM_CHECKER_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "blindsim/machine.h"
#include "blindsim/program_image.h"
#include "blindsim/system_state.h"

namespace blindsim {

// Abstract blindedness tag for a signature entry. Clear and Blinded are
// incomparable; Top is above both.
enum class AbstractTag : uint8_t { kClear, kBlinded, kTop };

AbstractTag JoinTags(AbstractTag a, AbstractTag b);
bool TagLeq(AbstractTag a, AbstractTag b);
char AbstractTagLetter(AbstractTag t);

// Initial tags of the program's inputs. Registers not listed start as the
// machine resets them (Clear 0); memory not listed keeps the image contents
// (or Clear 0 outside the image). Listed entries have unknown payloads.
struct TaintSignature {
  std::vector<std::pair<uint8_t, AbstractTag>> registers;
  std::vector<std::pair<AddressRange, AbstractTag>> memory;

  // "r1=B,r2=C,m0x80..0x88=B,m0x40=T"; the range end is exclusive.
  static absl::StatusOr<TaintSignature> Parse(std::string_view text);
  std::string ToString() const;
};

// A concrete initial state consistent with sig: image loaded, listed
// registers and words given random payloads with the listed tags (Top picks
// a tag at random).
SystemState SampleState(const ProgramImage& image, const TaintSignature& sig,
                        const MachineConfig& cfg, std::mt19937_64& rng);

enum class Verdict : uint8_t { kCompliant, kMayFault, kDefinitelyFaults };
std::string_view VerdictName(Verdict v);

enum class Severity : uint8_t {
  // Replayed to a real fault on the concrete machine.
  kDefinite,
  // Possible on some path; not confirmed.
  kPossible,
  // No fault (a model-mode no-op, or a non-policy machine fault).
  kNote,
};
std::string_view SeverityName(Severity s);

struct Witness {
  uint64_t seed = 0;
  // Step index at which the fault occurs.
  uint64_t step = 0;
  SystemState initial;
};

struct Finding {
  uint64_t pc = 0;
  std::string instruction;
  std::string reason;
  Severity severity = Severity::kPossible;
  std::optional<FaultKind> fault;
  std::optional<Witness> witness;
};

struct ComplianceReport {
  Verdict verdict = Verdict::kCompliant;
  std::vector<Finding> findings;
  // Worklist iterations used, and the bound.
  uint64_t iterations = 0;
  uint64_t iteration_bound = 0;
  bool bound_exceeded = false;
  std::string explanation;

  // Line-oriented text: "verdict=..." then one "finding ..." line each.
  std::string ToString() const;
  // Machine-readable form.
  std::string ToJson() const;
};

struct AnalyzeOptions {
  // Abstract states kept per pc before they are joined.
  size_t states_per_pc = 16;
  // Concrete runs tried when confirming a definite finding.
  uint64_t witness_attempts = 64;
  uint64_t witness_steps = 100000;
  uint64_t seed = 1;
};

// Abstract interpretation of the image under sig over the lattice
// {Clear constant, Clear unknown, Blinded, Top}. Every program point where
// a blinded or possibly blinded value reaches a branch, an address, an
// instruction fetch or an unblindable store becomes a finding.
ComplianceReport Analyze(const ProgramImage& image, const TaintSignature& sig,
                         const MachineConfig& cfg, const AnalyzeOptions& opts = {});

// Policy faults seen in a trace (traps and terminal policy faults, plus
// refusals), as (pc, kind) pairs.
std::vector<std::pair<uint64_t, FaultKind>> PolicyFaults(const Trace& trace);

}  // namespace blindsim

#endif  // BLINDSIM_CHECKER_H_
