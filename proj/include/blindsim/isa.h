#ifndef BLINDSIM_ISA_H_
#define BLINDSIM_ISA_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <span>
#include <string_view>

#include "absl/container/inlined_vector.h"
#include "absl/status/statusor.h"
#include "blindsim/system_state.h"
#include "blindsim/tagged_word.h"

namespace blindsim {

// Instruction word layout (little-endian bytes):
//   byte0   opcode
//   byte1   output register, 0xFF when the output is pc or absent
//   byte2   input register 1, 0xFF when absent
//   byte3   input register 2, 0xFF when absent
//   byte4-7 reserved, zero
enum class Opcode : uint8_t {
  kHalt = 0x00,
  kStore = 0x01,
  kLoad = 0x02,
  kBz = 0x03,
  kAdd = 0x04,
  kSub = 0x05,
  kMul = 0x06,
  kAnd = 0x07,
  kXor = 0x08,
  kBlnd = 0x10,
  kRblnd = 0x11,
};

inline constexpr uint8_t kNoRegister = 0xFF;

std::string_view OpcodeMnemonic(Opcode op);
std::optional<Opcode> OpcodeFromByte(uint8_t byte);
std::optional<Opcode> OpcodeFromMnemonic(std::string_view mnemonic);
bool IsAlu(Opcode op);

// How a blinded address input to a memory instruction is treated.
//   kModel:    the instruction becomes a no-op.
//   kHardware: the instruction traps to the fault handler.
enum class PolicyMode : uint8_t { kModel, kHardware };

std::string_view PolicyModeName(PolicyMode mode);

// An output designator: a general register or the program counter.
struct Operand {
  enum class Kind : uint8_t { kRegister, kPc };
  Kind kind = Kind::kRegister;
  uint8_t index = 0;

  static constexpr Operand Reg(uint8_t i) { return {Kind::kRegister, i}; }
  static constexpr Operand Pc() { return {Kind::kPc, 0}; }

  friend bool operator==(const Operand&, const Operand&) = default;
};

// Operand roles per opcode:
//   HALT        inputs=()               outputs=()
//   STORE       inputs=(addr, src)      outputs=()
//   LOAD        inputs=(addr)           outputs=(dst)
//   BZ          inputs=(cond, target)   outputs=(pc)
//   ALU ops     inputs=(a, b)           outputs=(dst)
//   BLND/RBLND  inputs=(addr)           outputs=()
struct DecodedInstruction {
  Opcode opcode = Opcode::kHalt;
  absl::InlinedVector<uint8_t, 2> inputs;
  absl::InlinedVector<Operand, 1> outputs;

  static DecodedInstruction Halt();
  static DecodedInstruction Store(uint8_t addr, uint8_t src);
  static DecodedInstruction Load(uint8_t dst, uint8_t addr);
  static DecodedInstruction Bz(uint8_t cond, uint8_t target);
  static DecodedInstruction Alu(Opcode op, uint8_t dst, uint8_t a, uint8_t b);
  static DecodedInstruction Blnd(uint8_t addr);
  static DecodedInstruction Rblnd(uint8_t addr);

  friend bool operator==(const DecodedInstruction&,
                         const DecodedInstruction&) = default;
};

// Assembler syntax, e.g. "add r1, r2, r3".
std::string FormatInstruction(const DecodedInstruction& d);

absl::StatusOr<uint64_t> Encode(const DecodedInstruction& d,
                                size_t register_count = kDefaultRegisterCount);

// Depends only on the word; tags are never consulted.
absl::StatusOr<DecodedInstruction> Decode(
    uint64_t word, size_t register_count = kDefaultRegisterCount);

struct MemoryOperation {
  enum class Kind : uint8_t { kLoad, kStore };
  Kind kind = Kind::kLoad;
  uint64_t address = 0;
  uint8_t reg = 0;

  friend bool operator==(const MemoryOperation&,
                         const MemoryOperation&) = default;
};

// BLND sets, RBLND clears, the tag of one memory word.
struct TagEdit {
  uint64_t address = 0;
  bool blind = false;

  friend bool operator==(const TagEdit&, const TagEdit&) = default;
};

struct Control {
  enum class Kind : uint8_t { kNext, kJumpTo, kFaultHandler, kHalt };
  Kind kind = Kind::kNext;
  uint64_t target = 0;                  // kJumpTo only
  FaultKind fault = FaultKind::kDecodeError;  // kFaultHandler only

  static constexpr Control Next() { return {}; }
  static constexpr Control JumpTo(uint64_t a) { return {Kind::kJumpTo, a}; }
  static constexpr Control Trap(FaultKind f) {
    return {Kind::kFaultHandler, 0, f};
  }
  static constexpr Control Halt() { return {Kind::kHalt}; }

  friend bool operator==(const Control&, const Control&) = default;
};

struct SemanticsResult {
  // One value per register output of ALU instructions. LOAD's destination is
  // written by its memory operation; BZ's pc output is expressed by control.
  absl::InlinedVector<TaggedWord, 1> outputs;
  absl::InlinedVector<MemoryOperation, 1> memops;
  std::optional<TagEdit> tag_edit;
  Control control;
};

// The blindedness-propagating semantics. `inputs` holds the register values
// named by d.inputs, in order.
//
// Default rule: a register output is blinded iff any input is blinded.
// Special cases, in priority order:
//   - STORE/LOAD/BLND/RBLND with a blinded address: no-op in model mode,
//     BlindedAddress trap in hardware mode.
//   - SUB/XOR whose two inputs are the same register: Clear 0.
//   - MUL/AND with a Clear 0 input: Clear 0.
//   - BZ with a blinded condition or target: BlindedBranch trap.
// Arithmetic wraps modulo 2^64.
SemanticsResult InstructionSemantics(const DecodedInstruction& d,
                                     std::span<const TaggedWord> inputs,
                                     PolicyMode mode);

// Tag-oblivious semantics: every value is treated as clear, nothing traps.
// The reference for checking that taint-free code behaves identically.
SemanticsResult UntrackedSemantics(const DecodedInstruction& d,
                                   std::span<const TaggedWord> inputs,
                                   PolicyMode mode);

using SemanticsFn = std::function<SemanticsResult(
    const DecodedInstruction&, std::span<const TaggedWord>, PolicyMode)>;

}  // namespace blindsim

#endif  // BLINDSIM_ISA_H_
