#include "blindsim/machine.h"

#include <algorithm>

#include "absl/container/inlined_vector.h"
#include "fmt/format.h"

namespace blindsim {

namespace {

std::string Hex(uint64_t v) { return fmt::format("0x{:x}", v); }

std::string_view MemKindName(MemoryOperation::Kind k) {
  return k == MemoryOperation::Kind::kLoad ? "load" : "store";
}

TraceEvent MakeEvent(TraceEvent::Kind kind, uint64_t cycle, uint64_t a = 0,
                     uint64_t b = 0) {
  TraceEvent e;
  e.kind = kind;
  e.cycle = cycle;
  e.a = a;
  e.b = b;
  return e;
}

TraceEvent FaultEvent(uint64_t cycle, FaultKind fault, uint64_t pc) {
  TraceEvent e = MakeEvent(TraceEvent::Kind::kFault, cycle, pc);
  e.fault = fault;
  return e;
}

}  // namespace

CacheAssignments DirectMappedPolicy(const CacheAssignments& cache,
                                    const MemoryOperation& op) {
  CacheAssignments next = cache;
  if (next.empty()) return next;
  next[op.address % next.size()] = CacheLine{true, op.address};
  return next;
}

CacheAssignments LruPolicy(const CacheAssignments& cache,
                           const MemoryOperation& op) {
  CacheAssignments next = cache;
  if (next.empty()) return next;
  auto hit = std::find(next.begin(), next.end(), CacheLine{true, op.address});
  auto last = hit == next.end() ? std::prev(next.end()) : hit;
  std::rotate(next.begin(), last, std::next(last));
  next.front() = CacheLine{true, op.address};
  return next;
}

absl::Status MachineConfig::Validate() const {
  if (register_count == 0 || register_count >= kNoRegister) {
    return absl::InvalidArgumentError("register count must be in [1, 254]");
  }
  if (memory_words == 0) {
    return absl::InvalidArgumentError("memory must hold at least one word");
  }
  if (cache_lines == 0) {
    return absl::InvalidArgumentError("cache needs at least one line");
  }
  std::vector<AddressRange> sorted = unblindable_ranges;
  std::sort(sorted.begin(), sorted.end(),
            [](const AddressRange& x, const AddressRange& y) {
              return x.begin < y.begin;
            });
  for (size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].begin >= sorted[i].end || sorted[i].end > memory_words) {
      return absl::InvalidArgumentError(
          fmt::format("unblindable range {}..{} is empty or out of bounds", Hex(sorted[i].begin), Hex(sorted[i].end)));
    }
    if (i > 0 && sorted[i].begin < sorted[i - 1].end) {
      return absl::InvalidArgumentError("unblindable ranges overlap");
    }
  }
  if (mmio_console && !IsUnblindable(*mmio_console)) {
    return absl::InvalidArgumentError(
        "mmio console must lie in an unblindable range");
  }
  return absl::OkStatus();
}

bool MachineConfig::IsUnblindable(uint64_t address) const {
  return std::any_of(unblindable_ranges.begin(), unblindable_ranges.end(),
                     [&](const AddressRange& r) { return r.Contains(address); });
}

SystemState MachineConfig::MakeState() const {
  return SystemState::Make(register_count, memory_words, cache_lines);
}

std::string FormatTraceEvent(const TraceEvent& e) {
  std::string out = fmt::format("cycle={} kind=", e.cycle);
  switch (e.kind) {
    case TraceEvent::Kind::kFetch:
      out += fmt::format("fetch pc={} word={}", Hex(e.a), Hex(e.b));
      break;
    case TraceEvent::Kind::kMemAccess:
      out += fmt::format("mem op={} addr={}", MemKindName(e.mem_kind), Hex(e.a));
      break;
    case TraceEvent::Kind::kCacheUpdate:
      out += fmt::format("cache line={} addr={}", Hex(e.a), Hex(e.b));
      break;
    case TraceEvent::Kind::kFault:
      out += fmt::format("fault fault={} pc={}", FaultKindName(e.fault), Hex(e.a));
      break;
    case TraceEvent::Kind::kMmioWrite:
      out += fmt::format("mmio value={}", Hex(e.a));
      break;
    case TraceEvent::Kind::kHalt:
      out += fmt::format("halt pc={}", Hex(e.a));
      break;
    case TraceEvent::Kind::kRefusal:
      out += fmt::format("refusal pc={} op=rblnd", Hex(e.a));
      break;
    case TraceEvent::Kind::kImport:
      out += fmt::format("import dst={} words={}", Hex(e.a), Hex(e.b));
      break;
    case TraceEvent::Kind::kExport:
      out += fmt::format("export src={} words={}", Hex(e.a), Hex(e.b));
      break;
  }
  return out;
}

std::string FormatTrace(std::span<const TraceEvent> trace) {
  std::string out;
  for (const TraceEvent& e : trace) {
    out += fmt::format("{}\n", FormatTraceEvent(e));
  }
  return out;
}

StepInfo StepInPlace(SystemState& s, const MachineConfig& cfg, Trace& trace) {
  StepInfo info;
  if (!s.status.running()) return info;

  const uint64_t cycle = s.cycle++;
  const uint64_t pc = s.pc;
  const bool enforce = cfg.enforce_policy;
  const uint64_t memory_words = s.memory.size();

  auto fault = [&](FaultKind kind) {
    s.status = MachineStatus::Faulted(kind);
    trace.push_back(FaultEvent(cycle, kind, pc));
  };

  if (pc >= memory_words) {
    fault(FaultKind::kOutOfRange);
    return info;
  }

  const TaggedWord fetched = s.memory[pc];
  if (enforce && fetched.blinded) {
    trace.push_back(FaultEvent(cycle, FaultKind::kBlindedInstructionFetch, pc));
    s.pc = 0;
    info.trapped = true;
    return info;
  }
  trace.push_back(MakeEvent(TraceEvent::Kind::kFetch, cycle, pc, fetched.value));

  const auto decoded = Decode(fetched.value, s.registers.size());
  if (!decoded.ok()) {
    fault(FaultKind::kDecodeError);
    return info;
  }
  const DecodedInstruction& d = *decoded;

  if (enforce && d.opcode == Opcode::kRblnd && !cfg.allow_raw_unblind) {
    s.status = MachineStatus::Faulted(FaultKind::kDecodeError);
    trace.push_back(MakeEvent(TraceEvent::Kind::kRefusal, cycle, pc));
    return info;
  }

  absl::InlinedVector<TaggedWord, 2> inputs;
  for (uint8_t r : d.inputs) inputs.push_back(s.registers[r]);

  const SemanticsResult res =
      enforce ? cfg.semantics(d, inputs, cfg.mode)
              : UntrackedSemantics(d, inputs, cfg.mode);

  uint64_t next_pc = pc + 1;
  switch (res.control.kind) {
    case Control::Kind::kFaultHandler:
      trace.push_back(FaultEvent(cycle, res.control.fault, pc));
      s.pc = 0;
      info.trapped = true;
      return info;
    case Control::Kind::kHalt:
      s.status = MachineStatus::Halted();
      trace.push_back(MakeEvent(TraceEvent::Kind::kHalt, cycle, pc));
      return info;
    case Control::Kind::kJumpTo:
      next_pc = res.control.target;
      break;
    case Control::Kind::kNext:
      break;
  }
  if (next_pc >= memory_words) {
    fault(FaultKind::kOutOfRange);
    return info;
  }

  // Register values as they will be after this step's register writes.
  auto register_after = [&](uint8_t reg) {
    for (size_t i = 0; i < res.outputs.size() && i < d.outputs.size(); ++i) {
      if (d.outputs[i].kind == Operand::Kind::kRegister &&
          d.outputs[i].index == reg) {
        return res.outputs[i];
      }
    }
    return s.registers[reg];
  };

  // Validate every effect before committing any of them.
  for (const MemoryOperation& op : res.memops) {
    if (op.address >= memory_words || op.reg >= s.registers.size()) {
      fault(FaultKind::kOutOfRange);
      return info;
    }
    if (enforce && op.kind == MemoryOperation::Kind::kStore &&
        register_after(op.reg).blinded && cfg.IsUnblindable(op.address)) {
      fault(FaultKind::kBlindedStoreToUnblindable);
      return info;
    }
  }
  if (res.tag_edit) {
    if (res.tag_edit->address >= memory_words) {
      fault(FaultKind::kOutOfRange);
      return info;
    }
    if (enforce && res.tag_edit->blind &&
        cfg.IsUnblindable(res.tag_edit->address)) {
      fault(FaultKind::kBlindedStoreToUnblindable);
      return info;
    }
  }

  for (size_t i = 0; i < res.outputs.size() && i < d.outputs.size(); ++i) {
    if (d.outputs[i].kind == Operand::Kind::kRegister) {
      s.registers[d.outputs[i].index] = res.outputs[i];
    }
  }
  for (const MemoryOperation& op : res.memops) {
    if (op.kind == MemoryOperation::Kind::kLoad) {
      s.registers[op.reg] = s.memory[op.address];
    } else {
      s.memory[op.address] = s.registers[op.reg];
    }
    TraceEvent access = MakeEvent(TraceEvent::Kind::kMemAccess, cycle, op.address);
    access.mem_kind = op.kind;
    trace.push_back(access);

    CacheAssignments next = cfg.cache_policy(s.cache, op);
    for (size_t line = 0; line < next.size() && line < s.cache.size(); ++line) {
      if (next[line] != s.cache[line]) {
        trace.push_back(MakeEvent(TraceEvent::Kind::kCacheUpdate, cycle, line,
                                  next[line].address));
      }
    }
    s.cache = std::move(next);

    if (op.kind == MemoryOperation::Kind::kStore && cfg.mmio_console &&
        op.address == *cfg.mmio_console) {
      trace.push_back(MakeEvent(TraceEvent::Kind::kMmioWrite, cycle,
                                s.memory[op.address].value));
    }
  }
  if (enforce && res.tag_edit) {
    s.memory[res.tag_edit->address].blinded = res.tag_edit->blind;
  }
  s.pc = next_pc;
  return info;
}

std::pair<SystemState, Trace> Step(SystemState s, const MachineConfig& cfg) {
  Trace trace;
  StepInPlace(s, cfg, trace);
  return {std::move(s), std::move(trace)};
}

std::string_view RunOutcomeName(RunOutcome outcome) {
  switch (outcome) {
    case RunOutcome::kHalted:
      return "halted";
    case RunOutcome::kFaulted:
      return "faulted";
    case RunOutcome::kFaultLoop:
      return "fault_loop";
    case RunOutcome::kStepLimit:
      return "step_limit";
  }
  return "unknown";
}

RunResult Run(SystemState s, const MachineConfig& cfg, uint64_t max_steps) {
  RunResult result;
  int idle_traps = 0;
  while (s.status.running() && result.steps < max_steps) {
    const uint64_t pc_before = s.pc;
    const StepInfo info = StepInPlace(s, cfg, result.trace);
    ++result.steps;
    // A trap taken at pc 0 changes nothing but the cycle count.
    idle_traps = (info.trapped && pc_before == 0) ? idle_traps + 1 : 0;
    if (idle_traps >= 2) {
      result.outcome = RunOutcome::kFaultLoop;
      result.state = std::move(s);
      return result;
    }
  }
  switch (s.status.kind()) {
    case MachineStatus::Kind::kHalted:
      result.outcome = RunOutcome::kHalted;
      break;
    case MachineStatus::Kind::kFaulted:
      result.outcome = RunOutcome::kFaulted;
      break;
    case MachineStatus::Kind::kRunning:
      result.outcome = RunOutcome::kStepLimit;
      break;
  }
  result.state = std::move(s);
  return result;
}

}  // namespace blindsim
