#ifndef BLINDSIM_NONINTERFERENCE_H_
#define BLINDSIM_NONINTERFERENCE_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "blindsim/machine.h"
#include "blindsim/program_image.h"
#include "blindsim/system_state.h"

namespace blindsim {

struct PairOptions {
  // Probability that a generated register or memory word is blinded.
  double blinded_fraction = 0.25;
  // Registers: random values and tags instead of all Clear 0.
  bool randomize_registers = true;
  // Memory outside the program: random instructions and data instead of
  // Clear 0. Always on when no program is given.
  bool random_background = true;
  // Share of random background words that are valid instructions.
  double instruction_fraction = 0.6;
  // Random pc and cache contents. Ignored (entry pc, empty cache) when a
  // program is given.
  bool randomize_control = true;
  // Words in these ranges are overwritten with blinded random payloads.
  std::vector<AddressRange> blinded_inputs;
  // Registers given blinded random payloads after the program is loaded.
  std::vector<uint8_t> blinded_registers;
};

// A random instruction word valid for `register_count` registers. Register
// operands are drawn from the first `register_count` indices.
uint64_t RandomInstructionWord(std::mt19937_64& rng, size_t register_count);

// A random state of cfg's geometry; program (if any) is loaded on top.
SystemState RandomState(std::mt19937_64& rng, const MachineConfig& cfg,
                        const ProgramImage* program, const PairOptions& opts);

// Every blinded payload of s replaced by an independent random value.
SystemState RerandomizeBlinded(SystemState s, std::mt19937_64& rng);

// (s1, s2) with s2 = s1 except for independently re-randomized blinded
// payloads, so StateEquiv(s1, s2) holds by construction.
std::pair<SystemState, SystemState> GenerateEquivalentPair(
    uint64_t seed, const MachineConfig& cfg,
    const ProgramImage* program = nullptr, const PairOptions& opts = {});

struct NoninterferenceOptions {
  uint64_t trials = 1000;
  uint64_t steps = 200;
  uint64_t seed = 1;
  PairOptions pair;
  // 0 picks std::thread::hardware_concurrency().
  unsigned threads = 0;
  bool minimize = true;
};

struct Counterexample {
  uint64_t trial = 0;
  uint64_t seed = 0;
  // Step index (0-based) after which the two runs were first told apart.
  uint64_t step = 0;
  std::string reason;
  // Initial states, minimized so that as few blinded payloads as possible
  // differ.
  SystemState s1;
  SystemState s2;
  // Registers ("r<i>") and memory words ("m0x<addr>") whose blinded
  // payloads differ between s1 and s2.
  std::vector<std::string> differing;

  std::string ToString() const;
};

struct NoninterferenceReport {
  bool passed = true;
  uint64_t trials_run = 0;
  uint64_t steps_checked = 0;
  std::optional<Counterexample> counterexample;
};

// Runs each equivalent pair side by side for up to `steps` steps, requiring
// StateEquiv and identical trace events after every step. With no program,
// every trial draws a fresh random program.
NoninterferenceReport CheckNoninterference(const ProgramImage* program,
                                           const MachineConfig& cfg,
                                           const NoninterferenceOptions& opts);

// Lockstep comparison of one pair. Returns the failing step and reason.
std::optional<std::pair<uint64_t, std::string>> FindDivergence(
    SystemState s1, SystemState s2, const MachineConfig& cfg, uint64_t steps,
    uint64_t* steps_checked = nullptr);

}  // namespace blindsim

#endif  // BLINDSIM_NONINTERFERENCE_H_
