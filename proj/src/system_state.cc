#include "blindsim/system_state.h"

#include <algorithm>
#include <array>
#include <utility>

#include "absl/status/status.h"
#include "fmt/format.h"
#include "blindsim/tagged_word.h"

namespace blindsim {

namespace {

constexpr std::array<std::pair<FaultKind, std::string_view>, 6> kFaultNames = {{
    {FaultKind::kBlindedInstructionFetch, "blinded_instruction_fetch"},
    {FaultKind::kBlindedBranch, "blinded_branch"},
    {FaultKind::kBlindedAddress, "blinded_address"},
    {FaultKind::kBlindedStoreToUnblindable, "blinded_store_to_unblindable"},
    {FaultKind::kDecodeError, "decode_error"},
    {FaultKind::kOutOfRange, "out_of_range"},
}};

std::string Hex(uint64_t v) { return fmt::format("{:#x}", v); }

}  // namespace

bool ListEquiv(std::span<const TaggedWord> xs, std::span<const TaggedWord> ys) {
  return std::equal(xs.begin(), xs.end(), ys.begin(), ys.end(), ValueEquiv);
}

std::string FormatTaggedWord(const TaggedWord& w) {
  return fmt::format("{}:{:#x}", w.blinded ? "B" : "C", w.value);
}

std::string_view FaultKindName(FaultKind kind) {
  for (const auto& [k, name] : kFaultNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

absl::StatusOr<FaultKind> ParseFaultKind(std::string_view name) {
  for (const auto& [k, n] : kFaultNames) {
    if (n == name) return k;
  }
  return absl::InvalidArgumentError(fmt::format("unknown fault kind: {}", name));
}

std::string FormatStatus(const MachineStatus& status) {
  switch (status.kind()) {
    case MachineStatus::Kind::kRunning:
      return "running";
    case MachineStatus::Kind::kHalted:
      return "halted";
    case MachineStatus::Kind::kFaulted:
      return fmt::format("faulted:{}", FaultKindName(status.fault()));
  }
  return "unknown";
}

SystemState SystemState::Make(size_t register_count, size_t memory_words,
                              size_t cache_lines) {
  SystemState s;
  s.registers.assign(register_count, TaggedWord{});
  s.memory.assign(memory_words, TaggedWord{});
  s.cache.assign(cache_lines, CacheLine{});
  return s;
}

bool StateEquiv(const SystemState& a, const SystemState& b) {
  return a.pc == b.pc && a.status == b.status && a.cycle == b.cycle &&
         a.cache == b.cache && ListEquiv(a.registers, b.registers) &&
         ListEquiv(a.memory, b.memory);
}

SystemState Redact(SystemState s) {
  auto scrub = [](std::vector<TaggedWord>& words) {
    for (TaggedWord& w : words) {
      if (w.blinded) w.value = 0;
    }
  };
  scrub(s.registers);
  scrub(s.memory);
  return s;
}

std::string FormatSnapshot(const SystemState& s) {
  std::string out = fmt::format("pc={}\n", Hex(s.pc));
  for (size_t i = 0; i < s.registers.size(); ++i) {
    if (s.registers[i].IsClearZero()) continue;
    out += fmt::format("r{}={}\n", i, FormatTaggedWord(s.registers[i]));
  }
  for (size_t a = 0; a < s.memory.size(); ++a) {
    if (s.memory[a].IsClearZero()) continue;
    out += fmt::format("m{}={}\n", Hex(a), FormatTaggedWord(s.memory[a]));
  }
  for (size_t i = 0; i < s.cache.size(); ++i) {
    const CacheLine& line = s.cache[i];
    if (!line.valid && line.address == 0) continue;
    out += fmt::format("cache{}={}:{}\n", i, line.valid ? 1 : 0, Hex(line.address));
  }
  out += fmt::format("status={}\n", FormatStatus(s.status));
  return out;
}

}  // namespace blindsim
