// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "blindsim/checker.h"
#include "blindsim/crypto.h"
#include "blindsim/engine.h"
#include "blindsim/isa.h"
#include "blindsim/machine.h"
#include "blindsim/noninterference.h"
#include "blindsim/protocol.h"
#include "blindsim/session.h"
#include "corpus_util.h"
#include "fmt/format.h"

namespace blindsim {
namespace {

using testing::CorpusBlindedInputs;
using testing::CorpusConfig;
using testing::CorpusImage;
using testing::CorpusNames;
using testing::CorpusSignature;

constexpr PolicyMode kModes[] = {PolicyMode::kModel, PolicyMode::kHardware};
constexpr uint64_t kNiTrials = 10'000;
constexpr uint64_t kNiSteps = 200;

struct Outcome {
  bool pass = true;
  std::string detail;

  void Fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

MachineConfig SmallConfig(PolicyMode mode) {
  MachineConfig cfg;
  cfg.mode = mode;
  cfg.register_count = 8;
  cfg.memory_words = 64;
  cfg.cache_lines = 4;
  cfg.unblindable_ranges = {{56, 64}};
  cfg.mmio_console = 63;
  return cfg;
}

std::string ModeName(PolicyMode mode) { return std::string(PolicyModeName(mode)); }

// ---------------------------------------------------------------------------
// A1

struct NiFamily {
  std::string name;
  std::function<NoninterferenceReport(const MachineConfig& base, PolicyMode mode,
                                      uint64_t trials)> run;
};

std::vector<NiFamily> NiFamilies() {
  std::vector<NiFamily> out;
  for (double frac : {0.6, 0.95}) {
    out.push_back({fmt::format("random(insn={})", frac),
                   [frac](const MachineConfig& base, PolicyMode mode, uint64_t trials) {
                     MachineConfig cfg = SmallConfig(mode);
                     cfg.semantics = base.semantics;
                     NoninterferenceOptions o;
                     o.trials = trials;
                     o.steps = kNiSteps;
                     o.seed = frac < 0.9 ? 11 : 12;
                     o.minimize = false;
                     o.pair.instruction_fraction = frac;
                     return CheckNoninterference(nullptr, cfg, o);
                   }});
  }
  for (const std::string& name : CorpusNames()) {
    out.push_back({name, [name](const MachineConfig& base, PolicyMode mode, uint64_t trials) {
                     const ProgramImage image = CorpusImage(name);
                     MachineConfig cfg = CorpusConfig(mode);
                     cfg.semantics = base.semantics;
                     NoninterferenceOptions o;
                     o.trials = trials;
                     o.steps = kNiSteps;
                     o.seed = 21;
                     o.minimize = false;
                     o.pair.randomize_registers = false;
                     o.pair.random_background = false;
                     o.pair.blinded_inputs = CorpusBlindedInputs(name, image);
                     return CheckNoninterference(&image, cfg, o);
                   }});
  }
  return out;
}

// Runs every family in both modes; returns the first failure, if any.
std::optional<std::string> NiCheck(const MachineConfig& base, uint64_t trials,
                                   uint64_t* total_trials = nullptr,
                                   uint64_t* total_steps = nullptr) {
  for (const NiFamily& fam : NiFamilies()) {
    for (PolicyMode mode : kModes) {
      const NoninterferenceReport r = fam.run(base, mode, trials);
      if (total_trials) *total_trials += r.trials_run;
      if (total_steps) *total_steps += r.steps_checked;
      if (!r.passed) {
        return fmt::format("{} {}: {}", fam.name, ModeName(mode),
                           r.counterexample ? r.counterexample->reason : "failed");
      }
    }
  }
  return std::nullopt;
}

Outcome A1() {
  Outcome o;
  uint64_t trials = 0, steps = 0;
  if (auto bad = NiCheck(MachineConfig{}, kNiTrials, &trials, &steps)) {
    o.Fail(*bad);
    return o;
  }
  o.detail = fmt::format("{} families x 2 modes, {} trials, {} lockstep steps",
                         NiFamilies().size(), trials, steps);
  return o;
}

// ---------------------------------------------------------------------------
// A2

struct Probe {
  SystemState before;
  SystemState after;
  Trace trace;
};

Probe StepOne(const DecodedInstruction& d, PolicyMode mode,
              std::vector<std::pair<uint8_t, TaggedWord>> regs) {
  const MachineConfig cfg = SmallConfig(mode);
  SystemState s = cfg.MakeState();
  s.pc = 4;
  s.memory[4] = TaggedWord::Clear(*Encode(d, cfg.register_count));
  for (uint64_t a = 16; a < 32; ++a) s.memory[a] = TaggedWord::Clear(a * 3);
  for (auto& [r, w] : regs) s.registers[r] = w;
  Probe p;
  p.before = s;
  StepInPlace(s, cfg, p.trace);
  p.after = std::move(s);
  return p;
}

bool HasFault(const Trace& t, FaultKind k) {
  for (const TraceEvent& e : t) {
    if (e.kind == TraceEvent::Kind::kFault && e.fault == k) return true;
  }
  return false;
}

bool HasMemAccess(const Trace& t) {
  for (const TraceEvent& e : t) {
    if (e.kind == TraceEvent::Kind::kMemAccess) return true;
  }
  return false;
}

// Registers, memory and cache untouched; pc is 0 after a trap.
bool Untouched(const Probe& p) {
  return p.before.registers == p.after.registers && p.before.memory == p.after.memory &&
         p.before.cache == p.after.cache;
}

Outcome A2() {
  Outcome o;
  std::mt19937_64 rng(2);
  int checks = 0;
  auto expect = [&](bool ok, const std::string& what) {
    ++checks;
    if (!ok) o.Fail(what);
  };
  for (int round = 0; round < 200; ++round) {
    const TaggedWord secret = TaggedWord::Blinded(rng());
    const TaggedWord clear = TaggedWord::Clear(rng() | 1);
    for (PolicyMode mode : kModes) {
      const std::string m = ModeName(mode);
      for (Opcode op : {Opcode::kXor, Opcode::kSub}) {
        Probe p = StepOne(DecodedInstruction::Alu(op, 1, 2, 2), mode, {{2, secret}});
        expect(p.after.registers[1] == TaggedWord::Clear(0) && p.after.pc == 5,
               fmt::format("{} r,x,x not Clear 0 ({})", OpcodeMnemonic(op), m));
      }
      for (Opcode op : {Opcode::kMul, Opcode::kAnd}) {
        Probe a = StepOne(DecodedInstruction::Alu(op, 1, 2, 3), mode,
                          {{2, TaggedWord::Clear(0)}, {3, secret}});
        Probe b = StepOne(DecodedInstruction::Alu(op, 1, 3, 2), mode,
                          {{2, TaggedWord::Clear(0)}, {3, secret}});
        expect(a.after.registers[1] == TaggedWord::Clear(0) &&
                   b.after.registers[1] == TaggedWord::Clear(0),
               fmt::format("{} with Clear 0 not Clear 0 ({})", OpcodeMnemonic(op), m));
        Probe c = StepOne(DecodedInstruction::Alu(op, 1, 2, 3), mode, {{2, clear}, {3, secret}});
        expect(c.after.registers[1].blinded,
               fmt::format("{} with nonzero clear lost taint ({})", OpcodeMnemonic(op), m));
      }
      {
        Probe p = StepOne(DecodedInstruction::Alu(Opcode::kXor, 1, 2, 3), mode,
                          {{2, secret}, {3, clear}});
        expect(p.after.registers[1].blinded, "xor of distinct registers lost taint");
      }
      const TaggedWord secret_addr = TaggedWord::Blinded(16 + rng() % 16);
      for (const DecodedInstruction& d :
           {DecodedInstruction::Load(1, 2), DecodedInstruction::Store(2, 3)}) {
        Probe p = StepOne(d, mode, {{2, secret_addr}, {3, clear}});
        const std::string what = FormatInstruction(d);
        if (mode == PolicyMode::kModel) {
          expect(Untouched(p) && p.after.pc == 5 && !HasMemAccess(p.trace) &&
                     !HasFault(p.trace, FaultKind::kBlindedAddress),
                 what + " with blinded address is not a no-op in model mode");
        } else {
          expect(Untouched(p) && p.after.pc == 0 && p.after.status.running() &&
                     !HasMemAccess(p.trace) && HasFault(p.trace, FaultKind::kBlindedAddress),
                 what + " with blinded address does not trap in hardware mode");
        }
      }
      for (auto [cond, target] :
           {std::pair{secret, TaggedWord::Clear(20)},
            std::pair{TaggedWord::Blinded(0), TaggedWord::Clear(20)},
            std::pair{TaggedWord::Clear(0), TaggedWord::Blinded(20)},
            std::pair{clear, TaggedWord::Blinded(20)}}) {
        Probe p = StepOne(DecodedInstruction::Bz(1, 2), mode, {{1, cond}, {2, target}});
        expect(Untouched(p) && p.after.pc == 0 && HasFault(p.trace, FaultKind::kBlindedBranch),
               "bz with blinded operand does not trap (" + m + ")");
      }
    }
  }
  if (o.pass) o.detail = fmt::format("{} exact-outcome checks", checks);
  return o;
}

// ---------------------------------------------------------------------------
// A3

Outcome A3() {
  Outcome o;
  struct Case {
    std::string name;
    PolicyMode mode;
    FaultKind kind;
  };
  const std::vector<Case> cases = {
      {"fault_branch", PolicyMode::kModel, FaultKind::kBlindedBranch},
      {"fault_branch", PolicyMode::kHardware, FaultKind::kBlindedBranch},
      {"fault_load", PolicyMode::kHardware, FaultKind::kBlindedAddress},
      {"fault_mmio", PolicyMode::kModel, FaultKind::kBlindedStoreToUnblindable},
      {"fault_mmio", PolicyMode::kHardware, FaultKind::kBlindedStoreToUnblindable},
  };
  std::mt19937_64 rng(3);
  int runs = 0;
  for (const Case& c : cases) {
    const ProgramImage image = CorpusImage(c.name);
    const MachineConfig cfg = CorpusConfig(c.mode);
    for (int trial = 0; trial < 100; ++trial, ++runs) {
      SystemState s = SampleState(image, CorpusSignature(c.name, image), cfg, rng);
      Trace trace;
      bool seen = false;
      for (int step = 0; step < 10'000 && s.status.running() && !seen; ++step) {
        const SystemState before = s;
        const size_t mark = trace.size();
        const StepInfo info = StepInPlace(s, cfg, trace);
        Trace events(trace.begin() + static_cast<std::ptrdiff_t>(mark), trace.end());
        if (!HasFault(events, c.kind)) continue;
        seen = true;
        const bool same = before.registers == s.registers && before.memory == s.memory &&
                          before.cache == s.cache;
        const bool transferred = info.trapped ? s.pc == 0 && s.status.running()
                                              : s.status.kind() == MachineStatus::Kind::kFaulted;
        if (!same || !transferred) {
          o.Fail(fmt::format("{} ({}): faulting step changed state", c.name, ModeName(c.mode)));
        }
      }
      if (!seen) {
        o.Fail(fmt::format("{} ({}): no {} fault", c.name, ModeName(c.mode),
                           FaultKindName(c.kind)));
      }
      const RunResult r = Run(SampleState(image, {}, cfg, rng), cfg, 10'000);
      if (r.outcome == RunOutcome::kStepLimit) {
        o.Fail(c.name + ": did not terminate after the fault");
      }
    }
  }
  {
    const ProgramImage image = CorpusImage("fault_load");
    const RunResult r = Run(SampleState(image, {}, CorpusConfig(PolicyMode::kModel), rng),
                            CorpusConfig(PolicyMode::kModel), 10'000);
    if (r.outcome != RunOutcome::kHalted || !PolicyFaults(r.trace).empty()) {
      o.Fail("fault_load in model mode should run as a no-op load");
    }
  }
  if (o.pass) {
    o.detail = fmt::format("{} runs; each fault class raised with state unchanged", runs);
  }
  return o;
}

// ---------------------------------------------------------------------------
// A4

std::vector<uint64_t> RandomWords(std::mt19937_64& rng, size_t n) {
  std::vector<uint64_t> v(n);
  for (uint64_t& w : v) w = rng();
  return v;
}

Outcome A4() {
  Outcome o;
  std::mt19937_64 rng(4);
  const Transport transports[] = {Transport::kMemory, Transport::kSocket, Transport::kTcp};
  for (int i = 0; i < 20; ++i) {
    DemoOptions opts;
    opts.program = CorpusImage("add_one");
    opts.plaintext = RandomWords(rng, 1 + rng() % 8);
    opts.seed = 100 + i;
    opts.transport = transports[i % 3];
    std::vector<uint64_t> second = RandomWords(rng, opts.plaintext.size());
    auto dual = RunDualDemo(opts, second);
    if (!dual.ok()) {
      o.Fail(std::string(dual.status().message()));
      return o;
    }
    std::vector<uint64_t> want1 = opts.plaintext, want2 = second;
    for (uint64_t& w : want1) ++w;
    for (uint64_t& w : want2) ++w;
    if (dual->first.output != want1 || dual->second.output != want2) {
      o.Fail(fmt::format("pair {}: wrong output", i));
    }
    if (dual->first.output == dual->second.output) o.Fail(fmt::format("pair {}: outputs equal", i));
    if (FormatTrace(dual->first.server_trace) != FormatTrace(dual->second.server_trace) ||
        !dual->traces_identical) {
      o.Fail(fmt::format("pair {}: server traces differ", i));
    }
  }
  if (o.pass) o.detail = "20 plaintext pairs over 3 transports, traces byte-identical";
  return o;
}

// ---------------------------------------------------------------------------
// A5

ServerConfig SmallServer(uint64_t seed) {
  ServerConfig cfg;
  cfg.machine = CorpusConfig(PolicyMode::kHardware);
  cfg.seed = seed;
  cfg.root_key[0] = 0x5a;
  return cfg;
}

Outcome A5() {
  Outcome o;
  int agreed = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    HsmServer server(SmallServer(seed));
    ClientHandshake client(DeviceKey::FromSeed(0).public_key(), seed + 7'000);
    const Message reply = server.Handle(client.hello());
    const auto* hello = std::get_if<HsmHello>(&reply);
    if (!hello) {
      o.Fail(fmt::format("seed {}: no HsmHello", seed));
      continue;
    }
    auto key = client.Finish(*hello);
    if (!key.ok() || !server.engine().key_id() || key->key_id() != *server.engine().key_id()) {
      o.Fail(fmt::format("seed {}: key ids disagree", seed));
      continue;
    }
    ++agreed;
  }

  std::mt19937_64 rng(5);
  KeyBytes root{}, kb{};
  for (uint8_t& b : kb) b = static_cast<uint8_t>(rng());
  const SessionKey key(kb);
  Engine engine(root);
  engine.InstallKey(key);
  const MachineConfig cfg = CorpusConfig(PolicyMode::kHardware);
  SystemState s = cfg.MakeState();
  int round_trips = 0;
  for (uint64_t i = 0; i < 1000; ++i) {
    const std::vector<uint64_t> pt = RandomWords(rng, 1 + rng() % 64);
    const uint64_t dst = rng() % (0xf0 - pt.size() + 1);
    auto env = AeadSeal(kb, MakeNonce('C', key.key_id(), i), kDataLabel, WordsToBytes(pt));
    if (!env.ok() || !engine.Import(s, cfg, dst, *env, nullptr).ok()) {
      o.Fail("import rejected a valid envelope");
      break;
    }
    auto out = engine.Export(s, dst, pt.size(), nullptr);
    auto opened = out.ok() ? AeadOpen(kb, kDataLabel, *out) : out.status();
    auto words = opened.ok() ? BytesToWords(*opened) : opened.status();
    if (!words.ok() || *words != pt) {
      o.Fail("export(import(x)) != x");
      break;
    }
    ++round_trips;
  }

  int tampered = 0, aborted = 0;
  for (uint64_t i = 0; i < 1000; ++i) {
    const uint64_t seed = 20'000 + i;
    const DeviceKey device = DeviceKey::FromSeed(0);
    ClientHandshake client(device.public_key(), seed);
    std::string ch = EncodeFrame(client.hello());
    const bool flip_client = i % 2 == 0;
    if (flip_client) ch[rng() % ch.size()] ^= static_cast<char>(1 << (rng() % 8));
    ++tampered;
    auto parsed_hello = ParseFrame(ch);
    if (!parsed_hello.ok() || !std::holds_alternative<ClientHello>(*parsed_hello)) {
      ++aborted;
      continue;
    }
    auto hsm = HsmHandshake(device, Claims{}, seed, std::get<ClientHello>(*parsed_hello));
    if (!hsm.ok()) {
      ++aborted;
      continue;
    }
    std::string hh = EncodeFrame(hsm->hello);
    if (!flip_client) hh[rng() % hh.size()] ^= static_cast<char>(1 << (rng() % 8));
    auto parsed_reply = ParseFrame(hh);
    if (!parsed_reply.ok() || !std::holds_alternative<HsmHello>(*parsed_reply)) {
      ++aborted;
      continue;
    }
    if (!client.Finish(std::get<HsmHello>(*parsed_reply)).ok()) ++aborted;
  }
  if (aborted != tampered) {
    o.Fail(fmt::format("{} of {} tampered handshakes completed", tampered - aborted, tampered));
  }
  if (o.pass) {
    o.detail = fmt::format(
        "{} handshakes agree on key id, {} import/export round trips, {}/{} tampered "
        "handshakes aborted",
        agreed, round_trips, aborted, tampered);
  }
  return o;
}

// ---------------------------------------------------------------------------
// A6

// Renderings of the key an observer could spot: hex of the key and of each
// 8-byte chunk, and each chunk as a little- or big-endian word.
bool KeyExposed(const DemoResult& r) {
  const KeyBytes& key = r.client_key->bytes();
  const std::string raw(AsBytes(key));
  std::vector<std::string> needles = {HexBytes(raw)};
  std::vector<uint64_t> chunks;
  for (size_t i = 0; i < key.size(); i += 8) {
    uint64_t le = 0, be = 0;
    for (size_t j = 0; j < 8; ++j) {
      le |= static_cast<uint64_t>(key[i + j]) << (8 * j);
      be = (be << 8) | key[i + j];
    }
    chunks.push_back(le);
    chunks.push_back(be);
    needles.push_back(HexBytes(raw.substr(i, 8)));
  }
  for (uint64_t c : chunks) {
    needles.push_back(fmt::format("0x{:x}", c));
    needles.push_back(fmt::format("{}", c));
  }
  const std::string text = FormatTrace(r.server_trace) + FormatSnapshot(r.server_state);
  for (const std::string& n : needles) {
    if (text.find(n) != std::string::npos) return true;
  }
  for (const TraceEvent& e : r.server_trace) {
    for (uint64_t c : chunks) {
      if (e.a == c || e.b == c) return true;
    }
  }
  for (const TaggedWord& w : r.server_state.memory) {
    for (uint64_t c : chunks) {
      if (w.value == c) return true;
    }
  }
  for (const std::string& ct : r.exported) {
    if (ct.find(raw) != std::string::npos) return true;
    for (size_t i = 0; i < raw.size(); i += 8) {
      if (ct.find(raw.substr(i, 8)) != std::string::npos) return true;
    }
  }
  return false;
}

DemoOptions AddOneDemo(uint64_t seed, std::mt19937_64& rng, EngineFactory factory) {
  DemoOptions opts;
  opts.program = CorpusImage("add_one");
  opts.plaintext = RandomWords(rng, 4);
  opts.seed = seed;
  opts.engine_factory = std::move(factory);
  return opts;
}

// Key secrecy over 10 demos.
bool KeySecrecyHolds(EngineFactory factory) {
  std::mt19937_64 rng(61);
  for (uint64_t i = 0; i < 10; ++i) {
    auto r = RunDemo(AddOneDemo(300 + i, rng, factory));
    if (!r.ok() || !r->client_key || KeyExposed(*r)) return false;
  }
  return true;
}

// Dual runs with identical traces and redacted snapshots, and the imported
// region still blinded after compute.
bool DualIsolationHolds(EngineFactory factory) {
  std::mt19937_64 rng(62);
  for (uint64_t i = 0; i < 10; ++i) {
    DemoOptions opts = AddOneDemo(400 + i, rng, factory);
    auto dual = RunDualDemo(opts, RandomWords(rng, opts.plaintext.size()));
    if (!dual.ok() || !dual->traces_identical || !dual->snapshots_identical) return false;
    for (uint64_t a = 0; a < opts.plaintext.size(); ++a) {
      if (!dual->first.server_state.memory[opts.base + a].blinded) return false;
    }
  }
  return true;
}

class LeakyExportEngine : public Engine {
 public:
  using Engine::Engine;
  absl::StatusOr<std::string> Export(const SystemState& s, uint64_t src, uint64_t n,
                                     Trace* trace) override {
    auto out = Engine::Export(s, src, n, trace);
    if (out.ok() && trace && current_key()) {
      uint64_t chunk = 0;
      for (size_t j = 0; j < 8; ++j) {
        chunk |= static_cast<uint64_t>(current_key()->bytes()[j]) << (8 * j);
      }
      trace->back().b = chunk;
    }
    return out;
  }
};

class ClearImportEngine : public Engine {
 public:
  using Engine::Engine;
  absl::Status Import(SystemState& s, const MachineConfig& cfg, uint64_t dst,
                      std::string_view envelope, Trace* trace) override {
    absl::Status st = Engine::Import(s, cfg, dst, envelope, trace);
    if (st.ok()) {
      const uint64_t n = (envelope.size() - kEnvelopeOverhead) / 8;
      for (uint64_t i = 0; i < n; ++i) s.memory[dst + i].blinded = false;
    }
    return st;
  }
};

SemanticsResult AddDropsTaint(const DecodedInstruction& d, std::span<const TaggedWord> in,
                              PolicyMode mode) {
  SemanticsResult r = InstructionSemantics(d, in, mode);
  if (d.opcode == Opcode::kAdd) {
    for (TaggedWord& w : r.outputs) w.blinded = false;
  }
  return r;
}

SemanticsResult BzIgnoresBlindedCondition(const DecodedInstruction& d,
                                          std::span<const TaggedWord> in, PolicyMode mode) {
  if (d.opcode == Opcode::kBz && in[0].blinded) {
    std::vector<TaggedWord> copy(in.begin(), in.end());
    copy[0].blinded = false;
    return InstructionSemantics(d, copy, mode);
  }
  return InstructionSemantics(d, in, mode);
}

SemanticsResult BlindedAddressStillAccessesMemory(const DecodedInstruction& d,
                                                  std::span<const TaggedWord> in,
                                                  PolicyMode mode) {
  if ((d.opcode == Opcode::kLoad || d.opcode == Opcode::kStore) && in[0].blinded) {
    std::vector<TaggedWord> copy(in.begin(), in.end());
    copy[0].blinded = false;
    SemanticsResult r = InstructionSemantics(d, copy, mode);
    if (mode == PolicyMode::kModel) return r;
  }
  return InstructionSemantics(d, in, mode);
}

Outcome A6() {
  Outcome o;
  const uint64_t trials = 2'000;
  if (auto bad = NiCheck(MachineConfig{}, trials)) o.Fail("baseline non-interference: " + *bad);
  if (!KeySecrecyHolds(nullptr)) o.Fail("baseline key secrecy check fails");
  if (!DualIsolationHolds(nullptr)) o.Fail("baseline dual isolation check fails");
  if (!o.pass) return o;

  std::vector<std::string> caught;
  auto semantic = [&](const std::string& name, SemanticsFn fn) {
    MachineConfig base;
    base.semantics = std::move(fn);
    if (auto found = NiCheck(base, trials)) {
      caught.push_back(name + " by non-interference");
    } else {
      o.Fail(name + " survived");
    }
  };
  semantic("add-drops-taint", AddDropsTaint);
  semantic("bz-ignores-blinded-condition", BzIgnoresBlindedCondition);
  semantic("blinded-address-reaches-cache", BlindedAddressStillAccessesMemory);

  auto leaky = [](const KeyBytes& root) { return std::make_unique<LeakyExportEngine>(root); };
  if (!KeySecrecyHolds(leaky)) {
    caught.push_back("export-leaks-key by key secrecy");
  } else {
    o.Fail("export-leaks-key survived");
  }
  auto clear = [](const KeyBytes& root) { return std::make_unique<ClearImportEngine>(root); };
  if (!DualIsolationHolds(clear)) {
    caught.push_back("import-writes-clear by dual isolation");
  } else {
    o.Fail("import-writes-clear survived");
  }
  if (o.pass) {
    std::string list;
    for (const std::string& c : caught) list += (list.empty() ? "" : ", ") + c;
    o.detail = fmt::format("{}/5 mutants caught ({})", caught.size(), list);
  }
  return o;
}

// ---------------------------------------------------------------------------
// A7

Outcome A7() {
  Outcome o;
  int compliant = 0, definite = 0, sampled = 0;
  std::mt19937_64 rng(7);
  for (const std::string& name : CorpusNames()) {
    const ProgramImage image = CorpusImage(name);
    const TaintSignature sig = CorpusSignature(name, image);
    for (PolicyMode mode : kModes) {
      const MachineConfig cfg = CorpusConfig(mode);
      const ComplianceReport report = Analyze(image, sig, cfg);
      if (report.verdict == Verdict::kCompliant) {
        ++compliant;
        for (int i = 0; i < 1000; ++i, ++sampled) {
          const RunResult r = Run(SampleState(image, sig, cfg, rng), cfg, 100'000);
          if (!PolicyFaults(r.trace).empty()) {
            o.Fail(fmt::format("{} ({}) judged compliant but faults", name, ModeName(mode)));
            break;
          }
        }
      }
      for (const Finding& f : report.findings) {
        if (f.severity != Severity::kDefinite) continue;
        ++definite;
        bool replayed = false;
        if (f.witness && f.fault) {
          const RunResult r = Run(f.witness->initial, cfg, 100'000);
          for (const auto& [pc, kind] : PolicyFaults(r.trace)) {
            replayed |= pc == f.pc && kind == *f.fault;
          }
        }
        if (!replayed) {
          o.Fail(fmt::format("{} ({}) definite finding at 0x{:x} does not replay", name,
                             ModeName(mode), f.pc));
        }
      }
    }
  }
  if (o.pass) {
    o.detail = fmt::format(
        "{} compliant verdicts confirmed by {} concrete runs, {} definite findings replayed",
        compliant, sampled, definite);
  }
  return o;
}

// ---------------------------------------------------------------------------
// A8

ProgramImage StripTags(ProgramImage image) {
  for (Segment& seg : image.segments) {
    for (TaggedWord& w : seg.words) w.blinded = false;
  }
  return image;
}

// Legacy code never uses the blinding instructions; any BLND/RBLND word
// drawn at random is replaced by another instruction.
void DropBlindingInstructions(SystemState& s, std::mt19937_64& rng) {
  for (TaggedWord& w : s.memory) {
    for (;;) {
      auto d = Decode(w.value, s.registers.size());
      if (!d.ok() || (d->opcode != Opcode::kBlnd && d->opcode != Opcode::kRblnd)) break;
      w.value = RandomInstructionWord(rng, s.registers.size());
    }
  }
}

bool SameRun(const SystemState& s, MachineConfig cfg, uint64_t steps) {
  cfg.enforce_policy = true;
  const RunResult on = Run(s, cfg, steps);
  cfg.enforce_policy = false;
  const RunResult off = Run(s, cfg, steps);
  return FormatTrace(on.trace) == FormatTrace(off.trace) && on.state == off.state &&
         on.outcome == off.outcome;
}

Outcome A8() {
  Outcome o;
  int runs = 0;
  std::mt19937_64 rng(8);
  for (const std::string& name : CorpusNames()) {
    const ProgramImage image = StripTags(CorpusImage(name));
    for (PolicyMode mode : kModes) {
      const MachineConfig cfg = CorpusConfig(mode);
      for (int i = 0; i < 50; ++i, ++runs) {
        const SystemState s = SampleState(image, {}, cfg, rng);
        if (!SameRun(s, cfg, 10'000)) {
          o.Fail(fmt::format("{} ({}) differs with tracking disabled", name, ModeName(mode)));
          break;
        }
      }
    }
  }
  PairOptions clear;
  clear.blinded_fraction = 0;
  for (PolicyMode mode : kModes) {
    const MachineConfig cfg = SmallConfig(mode);
    for (int i = 0; i < 2000; ++i, ++runs) {
      SystemState s = RandomState(rng, cfg, nullptr, clear);
      DropBlindingInstructions(s, rng);
      if (!SameRun(s, cfg, kNiSteps)) {
        o.Fail(fmt::format("random taint-free state differs ({})", ModeName(mode)));
        break;
      }
    }
  }
  if (o.pass) {
    o.detail = fmt::format("{} taint-free runs identical with and without tracking", runs);
  }
  return o;
}

}  // namespace
}  // namespace blindsim

int main() {
  using Criterion = std::pair<const char*, std::function<blindsim::Outcome()>>;
  const std::vector<Criterion> criteria = {
      {"A1 non-interference", blindsim::A1},
      {"A2 special-case rules", blindsim::A2},
      {"A3 violation classes", blindsim::A3},
      {"A4 trace independence", blindsim::A4},
      {"A5 protocol round trip", blindsim::A5},
      {"A6 mutation detection", blindsim::A6},
      {"A7 checker soundness", blindsim::A7},
      {"A8 compatibility", blindsim::A8},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    blindsim::Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.Fail(e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
