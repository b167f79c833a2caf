#include "blindsim/noninterference.h"

#include <algorithm>
#include <mutex>
#include <thread>

#include "absl/status/status.h"
#include "fmt/format.h"
#include "blindsim/isa.h"

namespace blindsim {

namespace {

constexpr std::array<Opcode, 11> kAllOpcodes = {
    Opcode::kHalt, Opcode::kStore, Opcode::kLoad, Opcode::kBz,
    Opcode::kAdd,  Opcode::kSub,   Opcode::kMul,  Opcode::kAnd,
    Opcode::kXor,  Opcode::kBlnd,  Opcode::kRblnd};

uint64_t Below(std::mt19937_64& rng, uint64_t n) {
  return n == 0 ? 0 : std::uniform_int_distribution<uint64_t>(0, n - 1)(rng);
}

bool Chance(std::mt19937_64& rng, double p) {
  return std::bernoulli_distribution(p)(rng);
}

// Values biased towards valid addresses and the special-case constants.
uint64_t RandomValue(std::mt19937_64& rng, const MachineConfig& cfg) {
  switch (Below(rng, 10)) {
    case 0: case 1: case 2: case 3: case 4: case 5:
      return Below(rng, cfg.memory_words);
    case 6:
      return 0;
    case 7:
      return 1;
    case 8:
      return RandomInstructionWord(rng, cfg.register_count);
    default:
      return rng();
  }
}

TaggedWord RandomWord(std::mt19937_64& rng, const MachineConfig& cfg,
                      double blinded_fraction, double instruction_fraction) {
  const uint64_t v = Chance(rng, instruction_fraction)
                         ? RandomInstructionWord(rng, cfg.register_count)
                         : RandomValue(rng, cfg);
  return TaggedWord{v, Chance(rng, blinded_fraction)};
}

std::string FirstDifference(const SystemState& a, const SystemState& b) {
  if (a.pc != b.pc) return fmt::format("pc 0x{:x} vs 0x{:x}", a.pc, b.pc);
  if (a.status != b.status) {
    return fmt::format("status {} vs {}", FormatStatus(a.status),
                       FormatStatus(b.status));
  }
  if (a.cycle != b.cycle) return "cycle counters differ";
  for (size_t i = 0; i < a.cache.size() && i < b.cache.size(); ++i) {
    if (a.cache[i] != b.cache[i]) {
      return fmt::format("cache line {}: 0x{:x} vs 0x{:x}", i,
                         a.cache[i].address, b.cache[i].address);
    }
  }
  for (size_t i = 0; i < a.registers.size() && i < b.registers.size(); ++i) {
    if (!ValueEquiv(a.registers[i], b.registers[i])) {
      return fmt::format("r{}: {} vs {}", i, FormatTaggedWord(a.registers[i]),
                         FormatTaggedWord(b.registers[i]));
    }
  }
  for (size_t i = 0; i < a.memory.size() && i < b.memory.size(); ++i) {
    if (!ValueEquiv(a.memory[i], b.memory[i])) {
      return fmt::format("m0x{:x}: {} vs {}", i, FormatTaggedWord(a.memory[i]),
                         FormatTaggedWord(b.memory[i]));
    }
  }
  return "geometry differs";
}

// A blinded word whose payload differs between the two initial states.
struct Delta {
  bool is_register;
  size_t index;
};

std::vector<Delta> Deltas(const SystemState& s1, const SystemState& s2) {
  std::vector<Delta> out;
  for (size_t i = 0; i < s1.registers.size(); ++i) {
    if (s1.registers[i].value != s2.registers[i].value) out.push_back({true, i});
  }
  for (size_t i = 0; i < s1.memory.size(); ++i) {
    if (s1.memory[i].value != s2.memory[i].value) out.push_back({false, i});
  }
  return out;
}

TaggedWord& At(SystemState& s, const Delta& d) {
  return d.is_register ? s.registers[d.index] : s.memory[d.index];
}

// Greedily drops payload deltas, then shrinks each survivor to a single bit.
void Minimize(Counterexample& cx, const MachineConfig& cfg, uint64_t steps) {
  auto fails = [&](const SystemState& s2) {
    return FindDivergence(cx.s1, s2, cfg, steps).has_value();
  };
  for (const Delta& d : Deltas(cx.s1, cx.s2)) {
    SystemState trial = cx.s2;
    At(trial, d).value = At(cx.s1, d).value;
    if (fails(trial)) cx.s2 = std::move(trial);
  }
  for (const Delta& d : Deltas(cx.s1, cx.s2)) {
    const uint64_t base = At(cx.s1, d).value;
    const uint64_t diff = base ^ At(cx.s2, d).value;
    for (int bit = 0; bit < 64; ++bit) {
      if (!((diff >> bit) & 1)) continue;
      SystemState trial = cx.s2;
      At(trial, d).value = base ^ (uint64_t{1} << bit);
      if (fails(trial)) {
        cx.s2 = std::move(trial);
        break;
      }
    }
  }
  if (auto div = FindDivergence(cx.s1, cx.s2, cfg, steps)) {
    cx.step = div->first;
    cx.reason = div->second;
  }
  cx.differing.clear();
  for (const Delta& d : Deltas(cx.s1, cx.s2)) {
    cx.differing.push_back(d.is_register ? fmt::format("r{}", d.index)
                                         : fmt::format("m0x{:x}", d.index));
  }
}

}  // namespace

uint64_t RandomInstructionWord(std::mt19937_64& rng, size_t register_count) {
  const Opcode op = kAllOpcodes[Below(rng, kAllOpcodes.size())];
  auto reg = [&] { return static_cast<uint8_t>(Below(rng, register_count)); };
  DecodedInstruction d;
  switch (op) {
    case Opcode::kHalt:
      d = DecodedInstruction::Halt();
      break;
    case Opcode::kStore:
      d = DecodedInstruction::Store(reg(), reg());
      break;
    case Opcode::kLoad:
      d = DecodedInstruction::Load(reg(), reg());
      break;
    case Opcode::kBz:
      d = DecodedInstruction::Bz(reg(), reg());
      break;
    case Opcode::kBlnd:
      d = DecodedInstruction::Blnd(reg());
      break;
    case Opcode::kRblnd:
      d = DecodedInstruction::Rblnd(reg());
      break;
    default: {
      // Same-register operands are common enough to exercise SUB/XOR zeroing.
      const uint8_t a = reg();
      const uint8_t b = Chance(rng, 0.25) ? a : reg();
      d = DecodedInstruction::Alu(op, reg(), a, b);
      break;
    }
  }
  return *Encode(d, register_count);
}

SystemState RandomState(std::mt19937_64& rng, const MachineConfig& cfg,
                        const ProgramImage* program, const PairOptions& opts) {
  SystemState s = cfg.MakeState();
  const double p = opts.blinded_fraction;
  if (opts.randomize_registers) {
    for (TaggedWord& r : s.registers) r = RandomWord(rng, cfg, p, 0.0);
  }
  if (program == nullptr || opts.random_background) {
    for (TaggedWord& w : s.memory) w = RandomWord(rng, cfg, p, opts.instruction_fraction);
  }
  if (program == nullptr && opts.randomize_control) {
    s.pc = Below(rng, cfg.memory_words);
    for (CacheLine& line : s.cache) {
      if (Chance(rng, 0.5)) line = CacheLine{true, Below(rng, cfg.memory_words)};
    }
  }
  if (program != nullptr) {
    LoadImage(*program, s).IgnoreError();
  }
  for (const AddressRange& r : opts.blinded_inputs) {
    for (uint64_t a = r.begin; a < r.end && a < s.memory.size(); ++a) {
      s.memory[a] = TaggedWord::Blinded(RandomValue(rng, cfg));
    }
  }
  for (uint8_t r : opts.blinded_registers) {
    if (r < s.registers.size()) s.registers[r] = TaggedWord::Blinded(RandomValue(rng, cfg));
  }
  return s;
}

SystemState RerandomizeBlinded(SystemState s, std::mt19937_64& rng) {
  auto redraw = [&](std::vector<TaggedWord>& words) {
    for (TaggedWord& w : words) {
      if (!w.blinded) continue;
      // Half the time a small value, so special cases such as zero and
      // valid addresses show up on the blinded side as well.
      w.value = Chance(rng, 0.5) ? Below(rng, 4) : rng();
    }
  };
  redraw(s.registers);
  redraw(s.memory);
  return s;
}

std::pair<SystemState, SystemState> GenerateEquivalentPair(
    uint64_t seed, const MachineConfig& cfg, const ProgramImage* program,
    const PairOptions& opts) {
  std::mt19937_64 rng(seed);
  SystemState s1 = RandomState(rng, cfg, program, opts);
  SystemState s2 = RerandomizeBlinded(s1, rng);
  return {std::move(s1), std::move(s2)};
}

std::optional<std::pair<uint64_t, std::string>> FindDivergence(
    SystemState s1, SystemState s2, const MachineConfig& cfg, uint64_t steps,
    uint64_t* steps_checked) {
  if (!StateEquiv(s1, s2)) {
    return std::make_pair(uint64_t{0},
                          "initial states not equivalent: " + FirstDifference(s1, s2));
  }
  Trace t1, t2;
  for (uint64_t step = 0; step < steps; ++step) {
    if (!s1.status.running() && !s2.status.running()) break;
    t1.clear();
    t2.clear();
    StepInPlace(s1, cfg, t1);
    StepInPlace(s2, cfg, t2);
    if (steps_checked != nullptr) ++*steps_checked;
    if (t1 != t2) {
      const std::string a = t1.empty() ? "(none)" : FormatTrace(t1);
      const std::string b = t2.empty() ? "(none)" : FormatTrace(t2);
      return std::make_pair(step, fmt::format("trace events differ:\n{}vs\n{}", a, b));
    }
    if (!StateEquiv(s1, s2)) {
      return std::make_pair(step, "states not equivalent: " + FirstDifference(s1, s2));
    }
  }
  return std::nullopt;
}

std::string Counterexample::ToString() const {
  std::string out = fmt::format(
      "non-interference violated in trial {} (seed {}) at step {}\n{}\n",
      trial, seed, step, reason);
  out += fmt::format("differing blinded payloads: {}\n",
                     differing.empty() ? std::string("(none)")
                                       : fmt::format("{}", fmt::join(differing, ", ")));
  out += "initial state 1:\n" + FormatSnapshot(s1);
  out += "initial state 2:\n" + FormatSnapshot(s2);
  return out;
}

NoninterferenceReport CheckNoninterference(const ProgramImage* program,
                                           const MachineConfig& cfg,
                                           const NoninterferenceOptions& opts) {
  unsigned threads = opts.threads != 0 ? opts.threads
                                       : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<uint64_t>(threads, std::max<uint64_t>(1, opts.trials)));

  std::mutex mu;
  NoninterferenceReport report;
  std::optional<Counterexample> first;

  auto worker = [&](unsigned id) {
    uint64_t trials = 0;
    uint64_t steps = 0;
    std::optional<Counterexample> local;
    for (uint64_t t = id; t < opts.trials; t += threads) {
      {
        std::lock_guard<std::mutex> lock(mu);
        if (first && first->trial < t) break;
      }
      const uint64_t seed = opts.seed + t;
      auto [s1, s2] = GenerateEquivalentPair(seed, cfg, program, opts.pair);
      ++trials;
      if (auto div = FindDivergence(s1, s2, cfg, opts.steps, &steps)) {
        Counterexample cx;
        cx.trial = t;
        cx.seed = seed;
        cx.step = div->first;
        cx.reason = div->second;
        cx.s1 = std::move(s1);
        cx.s2 = std::move(s2);
        local = std::move(cx);
        break;
      }
    }
    std::lock_guard<std::mutex> lock(mu);
    report.trials_run += trials;
    report.steps_checked += steps;
    if (local && (!first || local->trial < first->trial)) first = std::move(local);
  };

  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker, i);
    for (std::thread& t : pool) t.join();
  }

  if (first) {
    if (opts.minimize) Minimize(*first, cfg, opts.steps);
    report.passed = false;
    report.counterexample = std::move(first);
  }
  return report;
}

}  // namespace blindsim
