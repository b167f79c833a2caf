#include "blindsim/isa.h"

#include <array>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "fmt/format.h"

namespace blindsim {

namespace {

constexpr std::array<std::pair<Opcode, std::string_view>, 11> kMnemonics = {{
    {Opcode::kHalt, "halt"},
    {Opcode::kStore, "store"},
    {Opcode::kLoad, "load"},
    {Opcode::kBz, "bz"},
    {Opcode::kAdd, "add"},
    {Opcode::kSub, "sub"},
    {Opcode::kMul, "mul"},
    {Opcode::kAnd, "and"},
    {Opcode::kXor, "xor"},
    {Opcode::kBlnd, "blnd"},
    {Opcode::kRblnd, "rblnd"},
}};

// Byte slots (output, input1, input2) used by each opcode.
struct Layout {
  bool has_output;
  int input_count;
};

Layout LayoutOf(Opcode op) {
  switch (op) {
    case Opcode::kHalt:
      return {false, 0};
    case Opcode::kStore:
    case Opcode::kBz:
      return {false, 2};
    case Opcode::kLoad:
      return {true, 1};
    case Opcode::kBlnd:
    case Opcode::kRblnd:
      return {false, 1};
    default:
      return {true, 2};
  }
}

uint64_t ApplyAlu(Opcode op, uint64_t a, uint64_t b) {
  switch (op) {
    case Opcode::kAdd:
      return a + b;
    case Opcode::kSub:
      return a - b;
    case Opcode::kMul:
      return a * b;
    case Opcode::kAnd:
      return a & b;
    case Opcode::kXor:
      return a ^ b;
    default:
      return 0;
  }
}

bool IsMemoryAccess(Opcode op) {
  return op == Opcode::kStore || op == Opcode::kLoad || op == Opcode::kBlnd ||
         op == Opcode::kRblnd;
}

// Builds the memory effect of a memory instruction whose address is clear.
void EmitMemoryEffect(const DecodedInstruction& d, uint64_t address,
                      SemanticsResult& r) {
  switch (d.opcode) {
    case Opcode::kStore:
      r.memops.push_back(
          {MemoryOperation::Kind::kStore, address, d.inputs[1]});
      break;
    case Opcode::kLoad:
      r.memops.push_back(
          {MemoryOperation::Kind::kLoad, address, d.outputs[0].index});
      break;
    case Opcode::kBlnd:
      r.tag_edit = TagEdit{address, true};
      break;
    case Opcode::kRblnd:
      r.tag_edit = TagEdit{address, false};
      break;
    default:
      break;
  }
}

}  // namespace

std::string_view OpcodeMnemonic(Opcode op) {
  for (const auto& [o, m] : kMnemonics) {
    if (o == op) return m;
  }
  return "?";
}

std::optional<Opcode> OpcodeFromByte(uint8_t byte) {
  for (const auto& [o, m] : kMnemonics) {
    if (static_cast<uint8_t>(o) == byte) return o;
  }
  return std::nullopt;
}

std::optional<Opcode> OpcodeFromMnemonic(std::string_view mnemonic) {
  for (const auto& [o, m] : kMnemonics) {
    if (m == mnemonic) return o;
  }
  return std::nullopt;
}

std::string FormatInstruction(const DecodedInstruction& d) {
  std::string out(OpcodeMnemonic(d.opcode));
  std::vector<std::string> regs;
  auto r = [](uint8_t i) { return fmt::format("r{}", i); };
  switch (d.opcode) {
    case Opcode::kHalt:
      break;
    case Opcode::kLoad:
      regs = {r(d.outputs[0].index), r(d.inputs[0])};
      break;
    case Opcode::kStore:
    case Opcode::kBz:
      regs = {r(d.inputs[0]), r(d.inputs[1])};
      break;
    case Opcode::kBlnd:
    case Opcode::kRblnd:
      regs = {r(d.inputs[0])};
      break;
    default:
      regs = {r(d.outputs[0].index), r(d.inputs[0]), r(d.inputs[1])};
      break;
  }
  if (!regs.empty()) out += fmt::format(" {}", fmt::join(regs, ", "));
  return out;
}

bool IsAlu(Opcode op) {
  return op == Opcode::kAdd || op == Opcode::kSub || op == Opcode::kMul ||
         op == Opcode::kAnd || op == Opcode::kXor;
}

std::string_view PolicyModeName(PolicyMode mode) {
  return mode == PolicyMode::kModel ? "model" : "hardware";
}

DecodedInstruction DecodedInstruction::Halt() { return {Opcode::kHalt, {}, {}}; }

DecodedInstruction DecodedInstruction::Store(uint8_t addr, uint8_t src) {
  return {Opcode::kStore, {addr, src}, {}};
}

DecodedInstruction DecodedInstruction::Load(uint8_t dst, uint8_t addr) {
  return {Opcode::kLoad, {addr}, {Operand::Reg(dst)}};
}

DecodedInstruction DecodedInstruction::Bz(uint8_t cond, uint8_t target) {
  return {Opcode::kBz, {cond, target}, {Operand::Pc()}};
}

DecodedInstruction DecodedInstruction::Alu(Opcode op, uint8_t dst, uint8_t a,
                                           uint8_t b) {
  return {op, {a, b}, {Operand::Reg(dst)}};
}

DecodedInstruction DecodedInstruction::Blnd(uint8_t addr) {
  return {Opcode::kBlnd, {addr}, {}};
}

DecodedInstruction DecodedInstruction::Rblnd(uint8_t addr) {
  return {Opcode::kRblnd, {addr}, {}};
}

absl::StatusOr<uint64_t> Encode(const DecodedInstruction& d,
                                size_t register_count) {
  const Layout layout = LayoutOf(d.opcode);
  const size_t expected_outputs =
      (layout.has_output || d.opcode == Opcode::kBz) ? 1 : 0;
  if (d.inputs.size() != static_cast<size_t>(layout.input_count) ||
      d.outputs.size() != expected_outputs) {
    return absl::InvalidArgumentError(fmt::format("malformed operands for {}", OpcodeMnemonic(d.opcode)));
  }
  auto check_reg = [&](uint8_t r) -> absl::Status {
    if (r >= register_count || r == kNoRegister) {
      return absl::InvalidArgumentError(
          fmt::format("register index out of range: {}", r));
    }
    return absl::OkStatus();
  };

  uint8_t out = kNoRegister;
  if (d.opcode == Opcode::kBz) {
    if (d.outputs[0].kind != Operand::Kind::kPc) {
      return absl::InvalidArgumentError("bz output must be pc");
    }
  } else if (layout.has_output) {
    if (d.outputs[0].kind != Operand::Kind::kRegister) {
      return absl::InvalidArgumentError("output must be a register");
    }
    out = d.outputs[0].index;
    if (auto s = check_reg(out); !s.ok()) return s;
  }
  std::array<uint8_t, 2> in = {kNoRegister, kNoRegister};
  for (size_t i = 0; i < d.inputs.size(); ++i) {
    if (auto s = check_reg(d.inputs[i]); !s.ok()) return s;
    in[i] = d.inputs[i];
  }
  return static_cast<uint64_t>(d.opcode) | (static_cast<uint64_t>(out) << 8) |
         (static_cast<uint64_t>(in[0]) << 16) |
         (static_cast<uint64_t>(in[1]) << 24);
}

absl::StatusOr<DecodedInstruction> Decode(uint64_t word,
                                          size_t register_count) {
  const auto op = OpcodeFromByte(static_cast<uint8_t>(word & 0xFF));
  if (!op) {
    return absl::InvalidArgumentError(
        fmt::format("unknown opcode 0x{:x}", word & 0xFF));
  }
  if ((word >> 32) != 0) {
    return absl::InvalidArgumentError("nonzero reserved bytes");
  }
  const uint8_t out = (word >> 8) & 0xFF;
  const std::array<uint8_t, 2> in = {static_cast<uint8_t>((word >> 16) & 0xFF),
                                     static_cast<uint8_t>((word >> 24) & 0xFF)};
  const Layout layout = LayoutOf(*op);

  auto valid_reg = [&](uint8_t r) { return r < register_count && r != kNoRegister; };

  DecodedInstruction d;
  d.opcode = *op;
  if (layout.has_output) {
    if (!valid_reg(out)) return absl::InvalidArgumentError("bad output register");
    d.outputs.push_back(Operand::Reg(out));
  } else if (out != kNoRegister) {
    return absl::InvalidArgumentError("unused output slot must be 0xff");
  }
  if (*op == Opcode::kBz) d.outputs.push_back(Operand::Pc());
  for (int i = 0; i < 2; ++i) {
    if (i < layout.input_count) {
      if (!valid_reg(in[i])) {
        return absl::InvalidArgumentError("bad input register");
      }
      d.inputs.push_back(in[i]);
    } else if (in[i] != kNoRegister) {
      return absl::InvalidArgumentError("unused input slot must be 0xff");
    }
  }
  return d;
}

SemanticsResult InstructionSemantics(const DecodedInstruction& d,
                                     std::span<const TaggedWord> inputs,
                                     PolicyMode mode) {
  SemanticsResult r;
  const Opcode op = d.opcode;

  if (op == Opcode::kHalt) {
    r.control = Control::Halt();
    return r;
  }

  if (IsMemoryAccess(op)) {
    const TaggedWord& address = inputs[0];
    if (address.blinded) {
      if (mode == PolicyMode::kHardware) {
        r.control = Control::Trap(FaultKind::kBlindedAddress);
      }
      return r;
    }
    EmitMemoryEffect(d, address.value, r);
    return r;
  }

  if (op == Opcode::kBz) {
    const TaggedWord& cond = inputs[0];
    const TaggedWord& target = inputs[1];
    if (cond.blinded || target.blinded) {
      r.control = Control::Trap(FaultKind::kBlindedBranch);
    } else if (cond.value == 0) {
      r.control = Control::JumpTo(target.value);
    }
    return r;
  }

  // ALU.
  const TaggedWord& a = inputs[0];
  const TaggedWord& b = inputs[1];
  if ((op == Opcode::kSub || op == Opcode::kXor) && d.inputs[0] == d.inputs[1]) {
    r.outputs.push_back(TaggedWord::Clear(0));
    return r;
  }
  if ((op == Opcode::kMul || op == Opcode::kAnd) &&
      (a.IsClearZero() || b.IsClearZero())) {
    r.outputs.push_back(TaggedWord::Clear(0));
    return r;
  }
  r.outputs.push_back(
      TaggedWord{ApplyAlu(op, a.value, b.value), a.blinded || b.blinded});
  return r;
}

SemanticsResult UntrackedSemantics(const DecodedInstruction& d,
                                   std::span<const TaggedWord> inputs,
                                   PolicyMode /*mode*/) {
  SemanticsResult r;
  const Opcode op = d.opcode;
  if (op == Opcode::kHalt) {
    r.control = Control::Halt();
  } else if (IsMemoryAccess(op)) {
    EmitMemoryEffect(d, inputs[0].value, r);
  } else if (op == Opcode::kBz) {
    if (inputs[0].value == 0) r.control = Control::JumpTo(inputs[1].value);
  } else {
    r.outputs.push_back(
        TaggedWord::Clear(ApplyAlu(op, inputs[0].value, inputs[1].value)));
  }
  return r;
}

}  // namespace blindsim
