#include "blindsim/checker.h"

#include <algorithm>
#include <deque>
#include <map>

#include "absl/status/status.h"
#include "blindsim/isa.h"
#include "fmt/format.h"
#include "json.hpp"

namespace blindsim {

namespace {

// Bottom < Const(v) < Clear < Top, Bottom < Blinded < Top.
struct AbsVal {
  enum class K : uint8_t { kBottom, kConst, kClear, kBlinded, kTop };
  K k = K::kBottom;
  uint64_t v = 0;

  static AbsVal Const(uint64_t x) { return {K::kConst, x}; }
  static AbsVal Clear() { return {K::kClear, 0}; }
  static AbsVal Blinded() { return {K::kBlinded, 0}; }
  static AbsVal Top() { return {K::kTop, 0}; }

  bool MayBeBlinded() const { return k == K::kBlinded || k == K::kTop; }
  bool IsConst(uint64_t x) const { return k == K::kConst && v == x; }

  friend bool operator==(const AbsVal&, const AbsVal&) = default;
};

constexpr int kLatticeHeight = 4;

AbsVal Join(AbsVal a, AbsVal b) {
  using K = AbsVal::K;
  if (a.k == K::kBottom) return b;
  if (b.k == K::kBottom) return a;
  if (a == b) return a;
  if (a.k == K::kTop || b.k == K::kTop) return AbsVal::Top();
  const bool a_clear = a.k == K::kConst || a.k == K::kClear;
  const bool b_clear = b.k == K::kConst || b.k == K::kClear;
  if (a_clear && b_clear) return AbsVal::Clear();
  return AbsVal::Top();
}

bool Leq(AbsVal a, AbsVal b) { return Join(a, b) == b; }

// One concrete shape an abstract value may take.
struct Case {
  bool blinded = false;
  std::optional<uint64_t> value;  // clear and known
};

std::vector<Case> CasesOf(AbsVal a) {
  switch (a.k) {
    case AbsVal::K::kBottom:
      return {};
    case AbsVal::K::kConst:
      return {{false, a.v}};
    case AbsVal::K::kClear:
      return {{false, std::nullopt}};
    case AbsVal::K::kBlinded:
      return {{true, std::nullopt}};
    case AbsVal::K::kTop:
      return {{false, std::nullopt}, {true, std::nullopt}};
  }
  return {};
}

AbsVal FromTag(AbstractTag t) {
  switch (t) {
    case AbstractTag::kClear:
      return AbsVal::Clear();
    case AbstractTag::kBlinded:
      return AbsVal::Blinded();
    case AbstractTag::kTop:
      return AbsVal::Top();
  }
  return AbsVal::Top();
}

uint64_t Alu(Opcode op, uint64_t a, uint64_t b) {
  switch (op) {
    case Opcode::kAdd: return a + b;
    case Opcode::kSub: return a - b;
    case Opcode::kMul: return a * b;
    case Opcode::kAnd: return a & b;
    case Opcode::kXor: return a ^ b;
    default: return 0;
  }
}

AbsVal AluAbs(Opcode op, bool same_register, AbsVal a, AbsVal b) {
  if (same_register && (op == Opcode::kSub || op == Opcode::kXor)) {
    return AbsVal::Const(0);
  }
  const bool annihilates = op == Opcode::kMul || op == Opcode::kAnd;
  AbsVal out;
  for (const Case& x : CasesOf(a)) {
    for (const Case& y : CasesOf(b)) {
      const bool x_zero = !x.blinded && x.value == 0u;
      const bool y_zero = !y.blinded && y.value == 0u;
      AbsVal r;
      if (annihilates && (x_zero || y_zero)) {
        r = AbsVal::Const(0);
      } else if (x.blinded || y.blinded) {
        // An unknown clear operand of MUL/AND may be zero.
        const bool maybe_zero = (!x.blinded && !x.value) || (!y.blinded && !y.value);
        r = annihilates && maybe_zero ? AbsVal::Top() : AbsVal::Blinded();
      } else if (x.value && y.value) {
        r = AbsVal::Const(Alu(op, *x.value, *y.value));
      } else {
        r = AbsVal::Clear();
      }
      out = Join(out, r);
    }
  }
  return out;
}

AbsVal Blind(AbsVal a) {
  return a.k == AbsVal::K::kBottom ? a : AbsVal::Blinded();
}

AbsVal Unblind(AbsVal a) {
  if (a.k == AbsVal::K::kBlinded || a.k == AbsVal::K::kTop) return AbsVal::Clear();
  return a;
}

class AbsMemory {
 public:
  AbsVal Get(uint64_t a) const {
    auto it = words_.find(a);
    return it == words_.end() ? rest_ : it->second;
  }
  void Set(uint64_t a, AbsVal v) {
    if (v == rest_) {
      words_.erase(a);
    } else {
      words_[a] = v;
    }
  }
  template <typename F>
  void ForAll(F f) {
    for (auto it = words_.begin(); it != words_.end();) {
      it->second = f(it->second);
      it = it->second == rest_ ? words_.erase(it) : std::next(it);
    }
    const AbsVal old_rest = rest_;
    rest_ = f(rest_);
    if (rest_ != old_rest) Normalize();
  }
  AbsVal JoinAll() const {
    AbsVal v = rest_;
    for (const auto& [a, w] : words_) v = Join(v, w);
    return v;
  }
  static AbsMemory JoinOf(const AbsMemory& x, const AbsMemory& y) {
    AbsMemory out;
    out.rest_ = Join(x.rest_, y.rest_);
    for (const auto& [a, w] : x.words_) out.Set(a, Join(w, y.Get(a)));
    for (const auto& [a, w] : y.words_) {
      if (!x.words_.count(a)) out.Set(a, Join(x.rest_, w));
    }
    return out;
  }
  bool LeqThan(const AbsMemory& other) const {
    if (!Leq(rest_, other.rest_)) return false;
    for (const auto& [a, w] : words_) {
      if (!Leq(w, other.Get(a))) return false;
    }
    for (const auto& [a, w] : other.words_) {
      if (!words_.count(a) && !Leq(rest_, w)) return false;
    }
    return true;
  }
  friend bool operator==(const AbsMemory&, const AbsMemory&) = default;

 private:
  void Normalize() {
    for (auto it = words_.begin(); it != words_.end();) {
      it = it->second == rest_ ? words_.erase(it) : std::next(it);
    }
  }

  std::map<uint64_t, AbsVal> words_;
  AbsVal rest_ = AbsVal::Const(0);
};

struct AbsState {
  std::vector<AbsVal> regs;
  AbsMemory mem;

  bool LeqThan(const AbsState& o) const {
    for (size_t i = 0; i < regs.size(); ++i) {
      if (!Leq(regs[i], o.regs[i])) return false;
    }
    return mem.LeqThan(o.mem);
  }
  static AbsState JoinOf(const AbsState& x, const AbsState& y) {
    AbsState out;
    out.regs.resize(x.regs.size());
    for (size_t i = 0; i < x.regs.size(); ++i) out.regs[i] = Join(x.regs[i], y.regs[i]);
    out.mem = AbsMemory::JoinOf(x.mem, y.mem);
    return out;
  }
};

struct FindingKey {
  uint64_t pc;
  std::string reason;
  friend bool operator<(const FindingKey& a, const FindingKey& b) {
    return std::tie(a.pc, a.reason) < std::tie(b.pc, b.reason);
  }
};

bool IsPolicyFault(FaultKind k) {
  return k == FaultKind::kBlindedInstructionFetch || k == FaultKind::kBlindedBranch ||
         k == FaultKind::kBlindedAddress || k == FaultKind::kBlindedStoreToUnblindable;
}

class Analyzer {
 public:
  Analyzer(const ProgramImage& image, const TaintSignature& sig,
           const MachineConfig& cfg, const AnalyzeOptions& opts)
      : image_(image), sig_(sig), cfg_(cfg), opts_(opts) {}

  ComplianceReport Run() {
    report_.iteration_bound =
        std::max<uint64_t>(1, image_.WordCount()) * kLatticeHeight * 4;
    if (auto st = image_.Validate(cfg_.memory_words); !st.ok()) {
      report_.verdict = Verdict::kMayFault;
      report_.explanation = fmt::format("image does not fit: {}", std::string(st.message()));
      return report_;
    }
    Insert(image_.entry_pc, InitialState());
    while (!worklist_.empty()) {
      if (report_.iterations >= report_.iteration_bound) {
        report_.bound_exceeded = true;
        report_.explanation = fmt::format(
            "fixpoint not reached within {} iterations; unexplored paths may fault",
            report_.iteration_bound);
        break;
      }
      ++report_.iterations;
      auto [pc, state] = std::move(worklist_.front());
      worklist_.pop_front();
      Transfer(pc, state);
    }
    Confirm();
    Finish();
    return report_;
  }

 private:
  AbsState InitialState() const {
    AbsState s;
    s.regs.assign(cfg_.register_count, AbsVal::Const(0));
    for (const auto& [r, tag] : sig_.registers) {
      if (r < s.regs.size()) s.regs[r] = FromTag(tag);
    }
    for (const Segment& seg : image_.segments) {
      for (size_t i = 0; i < seg.words.size(); ++i) {
        const TaggedWord& w = seg.words[i];
        s.mem.Set(seg.base + i, w.blinded ? AbsVal::Blinded() : AbsVal::Const(w.value));
      }
    }
    for (const auto& [range, tag] : sig_.memory) {
      for (uint64_t a = range.begin; a < range.end && a < cfg_.memory_words; ++a) {
        s.mem.Set(a, FromTag(tag));
      }
    }
    return s;
  }

  void Insert(uint64_t pc, AbsState s) {
    if (pc >= cfg_.memory_words) {
      Note(pc, "", "pc leaves memory", FaultKind::kOutOfRange);
      return;
    }
    std::vector<AbsState>& states = states_[pc];
    for (const AbsState& old : states) {
      if (s.LeqThan(old)) return;
    }
    if (states.size() < opts_.states_per_pc) {
      states.push_back(s);
      worklist_.emplace_back(pc, std::move(s));
      return;
    }
    AbsState joined = std::move(s);
    for (const AbsState& old : states) joined = AbsState::JoinOf(joined, old);
    states.assign(1, joined);
    worklist_.emplace_back(pc, std::move(joined));
  }

  void Add(uint64_t pc, const std::string& insn, const std::string& reason,
           Severity severity, std::optional<FaultKind> fault) {
    auto [it, fresh] = findings_.try_emplace(FindingKey{pc, reason});
    Finding& f = it->second;
    if (fresh) {
      f.pc = pc;
      f.instruction = insn;
      f.reason = reason;
      f.severity = severity;
      f.fault = fault;
      return;
    }
    // A candidate seen with a weaker abstract value on another path is
    // still worth confirming, so the strongest claim wins.
    if (static_cast<int>(severity) < static_cast<int>(f.severity)) f.severity = severity;
  }

  // A fault the abstract state says must happen on this path; replayed
  // before it is reported as definite.
  void Candidate(uint64_t pc, const std::string& insn, const std::string& reason,
                 FaultKind fault) {
    Add(pc, insn, reason, Severity::kDefinite, fault);
  }
  void Possible(uint64_t pc, const std::string& insn, const std::string& reason,
                std::optional<FaultKind> fault) {
    Add(pc, insn, reason, Severity::kPossible, fault);
  }
  void Note(uint64_t pc, const std::string& insn, const std::string& reason,
            std::optional<FaultKind> fault = std::nullopt) {
    Add(pc, insn, reason, Severity::kNote, fault);
  }

  void Transfer(uint64_t pc, const AbsState& s) {
    const AbsVal word = s.mem.Get(pc);
    for (const Case& c : CasesOf(word)) {
      if (c.blinded) {
        const std::string reason = "instruction word is blinded";
        if (word.k == AbsVal::K::kBlinded) {
          Candidate(pc, "", reason, FaultKind::kBlindedInstructionFetch);
        } else {
          Possible(pc, "", "instruction word may be blinded",
                   FaultKind::kBlindedInstructionFetch);
        }
        Insert(0, s);
      } else if (!c.value) {
        Possible(pc, "", "instruction word is not a known constant", std::nullopt);
      } else {
        Execute(pc, *c.value, s);
      }
    }
  }

  void Execute(uint64_t pc, uint64_t word, const AbsState& s) {
    auto decoded = Decode(word, cfg_.register_count);
    if (!decoded.ok()) {
      Note(pc, fmt::format(".word 0x{:x}", word), "undecodable instruction",
           FaultKind::kDecodeError);
      return;
    }
    const DecodedInstruction& d = *decoded;
    const std::string insn = FormatInstruction(d);
    const uint64_t next = pc + 1;

    if (d.opcode == Opcode::kHalt) return;
    if (d.opcode == Opcode::kRblnd && !cfg_.allow_raw_unblind) {
      Candidate(pc, insn, "raw unblind refused by configuration",
                FaultKind::kDecodeError);
      return;
    }

    if (IsAlu(d.opcode)) {
      AbsState out = s;
      out.regs[d.outputs[0].index] =
          AluAbs(d.opcode, d.inputs[0] == d.inputs[1], s.regs[d.inputs[0]],
                 s.regs[d.inputs[1]]);
      Insert(next, std::move(out));
      return;
    }

    if (d.opcode == Opcode::kBz) {
      Branch(pc, insn, d, s);
      return;
    }

    // STORE, LOAD, BLND, RBLND.
    const AbsVal address = s.regs[d.inputs[0]];
    for (const Case& c : CasesOf(address)) {
      if (c.blinded) {
        if (cfg_.mode == PolicyMode::kHardware) {
          if (address.k == AbsVal::K::kBlinded) {
            Candidate(pc, insn, "blinded memory address", FaultKind::kBlindedAddress);
          } else {
            Possible(pc, insn, "memory address may be blinded", FaultKind::kBlindedAddress);
          }
          Insert(0, s);
        } else {
          Note(pc, insn, "blinded memory address (no-op in model mode)");
          Insert(next, s);
        }
      } else if (c.value) {
        if (*c.value >= cfg_.memory_words) {
          Note(pc, insn, "memory address out of range", FaultKind::kOutOfRange);
          continue;
        }
        MemoryStrong(pc, insn, d, *c.value, s);
      } else {
        MemoryWeak(pc, insn, d, s);
      }
    }
  }

  void MemoryStrong(uint64_t pc, const std::string& insn,
                    const DecodedInstruction& d, uint64_t a, const AbsState& s) {
    AbsState out = s;
    const bool unblindable = cfg_.enforce_policy && cfg_.IsUnblindable(a);
    switch (d.opcode) {
      case Opcode::kStore: {
        AbsVal v = s.regs[d.inputs[1]];
        if (unblindable && v.k == AbsVal::K::kBlinded) {
          Candidate(pc, insn, "blinded store to unblindable memory",
                    FaultKind::kBlindedStoreToUnblindable);
          return;
        }
        if (unblindable && v.MayBeBlinded()) {
          Possible(pc, insn, "store to unblindable memory may be blinded",
                   FaultKind::kBlindedStoreToUnblindable);
          v = Unblind(v);
        }
        out.mem.Set(a, v);
        break;
      }
      case Opcode::kLoad:
        out.regs[d.outputs[0].index] = s.mem.Get(a);
        break;
      case Opcode::kBlnd:
        if (unblindable) {
          Candidate(pc, insn, "blnd of unblindable memory",
                    FaultKind::kBlindedStoreToUnblindable);
          return;
        }
        out.mem.Set(a, Blind(s.mem.Get(a)));
        break;
      case Opcode::kRblnd:
        out.mem.Set(a, Unblind(s.mem.Get(a)));
        break;
      default:
        break;
    }
    Insert(pc + 1, std::move(out));
  }

  void MemoryWeak(uint64_t pc, const std::string& insn,
                  const DecodedInstruction& d, const AbsState& s) {
    AbsState out = s;
    const bool has_unblindable = cfg_.enforce_policy && !cfg_.unblindable_ranges.empty();
    switch (d.opcode) {
      case Opcode::kStore: {
        const AbsVal v = s.regs[d.inputs[1]];
        if (has_unblindable && v.MayBeBlinded()) {
          Possible(pc, insn, "blinded store to an unknown address may hit unblindable memory",
                   FaultKind::kBlindedStoreToUnblindable);
        }
        out.mem.ForAll([&](AbsVal w) { return Join(w, v); });
        break;
      }
      case Opcode::kLoad:
        out.regs[d.outputs[0].index] = s.mem.JoinAll();
        break;
      case Opcode::kBlnd:
        if (has_unblindable) {
          Possible(pc, insn, "blnd of an unknown address may hit unblindable memory",
                   FaultKind::kBlindedStoreToUnblindable);
        }
        out.mem.ForAll([](AbsVal w) { return Join(w, Blind(w)); });
        break;
      case Opcode::kRblnd:
        out.mem.ForAll([](AbsVal w) { return Join(w, Unblind(w)); });
        break;
      default:
        break;
    }
    Insert(pc + 1, std::move(out));
  }

  void Branch(uint64_t pc, const std::string& insn, const DecodedInstruction& d,
              const AbsState& s) {
    const AbsVal cond = s.regs[d.inputs[0]];
    const AbsVal target = s.regs[d.inputs[1]];
    if (cond.MayBeBlinded() || target.MayBeBlinded()) {
      const bool certain =
          cond.k == AbsVal::K::kBlinded || target.k == AbsVal::K::kBlinded;
      const std::string what = cond.MayBeBlinded() ? "condition" : "target";
      if (certain) {
        Candidate(pc, insn, fmt::format("blinded branch {}",
                                        cond.k == AbsVal::K::kBlinded ? "condition" : "target"),
                  FaultKind::kBlindedBranch);
      } else {
        Possible(pc, insn, fmt::format("branch {} may be blinded", what),
                 FaultKind::kBlindedBranch);
      }
      Insert(0, s);
      if (certain) return;
    }
    bool may_take = false;
    bool may_fall = false;
    for (const Case& c : CasesOf(cond)) {
      if (c.blinded) continue;
      if (!c.value) {
        may_take = may_fall = true;
      } else if (*c.value == 0) {
        may_take = true;
      } else {
        may_fall = true;
      }
    }
    if (may_fall) Insert(pc + 1, s);
    if (!may_take) return;
    for (const Case& t : CasesOf(target)) {
      if (t.blinded) continue;
      if (!t.value) {
        Possible(pc, insn, "branch target is not a known constant", std::nullopt);
      } else {
        Insert(*t.value, s);
      }
    }
  }

  // Replays concrete runs consistent with the signature; candidates that
  // never fault concretely are downgraded.
  void Confirm() {
    std::vector<Finding*> pending;
    for (auto& [key, f] : findings_) {
      if (f.severity == Severity::kDefinite) pending.push_back(&f);
    }
    for (uint64_t attempt = 0; attempt < opts_.witness_attempts && !pending.empty();
         ++attempt) {
      const uint64_t seed = opts_.seed + attempt;
      std::mt19937_64 rng(seed);
      const SystemState initial = SampleState(image_, sig_, cfg_, rng);
      SystemState s = initial;
      Trace trace;
      int idle_traps = 0;
      for (uint64_t step = 0; step < opts_.witness_steps && s.status.running(); ++step) {
        trace.clear();
        const uint64_t pc_before = s.pc;
        const StepInfo info = StepInPlace(s, cfg_, trace);
        for (const auto& [pc, kind] : PolicyFaults(trace)) {
          for (auto it = pending.begin(); it != pending.end();) {
            Finding* f = *it;
            if (f->pc == pc && f->fault == kind) {
              f->witness = Witness{seed, step, initial};
              it = pending.erase(it);
            } else {
              ++it;
            }
          }
        }
        idle_traps = (info.trapped && pc_before == 0) ? idle_traps + 1 : 0;
        if (idle_traps >= 2) break;
      }
    }
    for (Finding* f : pending) {
      f->severity = Severity::kPossible;
      f->reason += " (no concrete witness found)";
    }
  }

  void Finish() {
    bool definite = false;
    bool possible = report_.bound_exceeded;
    for (auto& [key, f] : findings_) {
      definite |= f.severity == Severity::kDefinite;
      possible |= f.severity == Severity::kPossible;
      report_.findings.push_back(std::move(f));
    }
    report_.verdict = definite   ? Verdict::kDefinitelyFaults
                      : possible ? Verdict::kMayFault
                                 : Verdict::kCompliant;
  }

  const ProgramImage& image_;
  const TaintSignature& sig_;
  const MachineConfig& cfg_;
  const AnalyzeOptions& opts_;
  std::map<uint64_t, std::vector<AbsState>> states_;
  std::deque<std::pair<uint64_t, AbsState>> worklist_;
  std::map<FindingKey, Finding> findings_;
  ComplianceReport report_;
};

std::optional<AbstractTag> TagFromLetter(std::string_view s) {
  if (s == "C" || s == "c") return AbstractTag::kClear;
  if (s == "B" || s == "b") return AbstractTag::kBlinded;
  if (s == "T" || s == "t") return AbstractTag::kTop;
  return std::nullopt;
}

std::optional<uint64_t> ParseU64(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  uint64_t v = 0;
  for (char ch : s) {
    int digit;
    if (ch >= '0' && ch <= '9') {
      digit = ch - '0';
    } else if (base == 16 && ch >= 'a' && ch <= 'f') {
      digit = ch - 'a' + 10;
    } else if (base == 16 && ch >= 'A' && ch <= 'F') {
      digit = ch - 'A' + 10;
    } else {
      return std::nullopt;
    }
    if (digit >= base) return std::nullopt;
    if (v > (~uint64_t{0} - digit) / base) return std::nullopt;
    v = v * base + digit;
  }
  return v;
}

uint64_t SampleValue(std::mt19937_64& rng, const MachineConfig& cfg) {
  switch (rng() % 4) {
    case 0:
      return rng() % 4;
    case 1:
      return rng() % cfg.memory_words;
    default:
      return rng();
  }
}

TaggedWord SampleWord(AbstractTag tag, std::mt19937_64& rng, const MachineConfig& cfg) {
  const uint64_t v = SampleValue(rng, cfg);
  switch (tag) {
    case AbstractTag::kClear:
      return TaggedWord::Clear(v);
    case AbstractTag::kBlinded:
      return TaggedWord::Blinded(v);
    case AbstractTag::kTop:
      return TaggedWord{v, (rng() & 1) != 0};
  }
  return TaggedWord::Clear(v);
}

}  // namespace

AbstractTag JoinTags(AbstractTag a, AbstractTag b) {
  return a == b ? a : AbstractTag::kTop;
}

bool TagLeq(AbstractTag a, AbstractTag b) { return JoinTags(a, b) == b; }

char AbstractTagLetter(AbstractTag t) {
  switch (t) {
    case AbstractTag::kClear:
      return 'C';
    case AbstractTag::kBlinded:
      return 'B';
    case AbstractTag::kTop:
      return 'T';
  }
  return '?';
}

absl::StatusOr<TaintSignature> TaintSignature::Parse(std::string_view text) {
  TaintSignature sig;
  while (!text.empty()) {
    const size_t comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view() : text.substr(comma + 1);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) continue;
    const size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      return absl::InvalidArgumentError(fmt::format("signature entry '{}' lacks '='", item));
    }
    const std::string_view lhs = item.substr(0, eq);
    const auto tag = TagFromLetter(item.substr(eq + 1));
    if (!tag) {
      return absl::InvalidArgumentError(
          fmt::format("signature entry '{}': tag must be C, B or T", item));
    }
    if (lhs.size() > 1 && lhs[0] == 'r') {
      const auto r = ParseU64(lhs.substr(1));
      if (!r || *r >= 255) {
        return absl::InvalidArgumentError(fmt::format("bad register in '{}'", item));
      }
      sig.registers.emplace_back(static_cast<uint8_t>(*r), *tag);
    } else if (lhs.size() > 1 && lhs[0] == 'm') {
      const std::string_view spec = lhs.substr(1);
      const size_t dots = spec.find("..");
      AddressRange range;
      if (dots == std::string_view::npos) {
        const auto a = ParseU64(spec);
        if (!a || *a == ~uint64_t{0}) {
          return absl::InvalidArgumentError(fmt::format("bad address in '{}'", item));
        }
        range = {*a, *a + 1};
      } else {
        const auto a = ParseU64(spec.substr(0, dots));
        const auto b = ParseU64(spec.substr(dots + 2));
        if (!a || !b || *a >= *b) {
          return absl::InvalidArgumentError(fmt::format("bad range in '{}'", item));
        }
        range = {*a, *b};
      }
      sig.memory.emplace_back(range, *tag);
    } else {
      return absl::InvalidArgumentError(
          fmt::format("signature entry '{}' must name rN or mADDR", item));
    }
  }
  return sig;
}

std::string TaintSignature::ToString() const {
  std::vector<std::string> parts;
  for (const auto& [r, t] : registers) parts.push_back(fmt::format("r{}={}", r, AbstractTagLetter(t)));
  for (const auto& [range, t] : memory) {
    if (range.end == range.begin + 1) {
      parts.push_back(fmt::format("m0x{:x}={}", range.begin, AbstractTagLetter(t)));
    } else {
      parts.push_back(fmt::format("m0x{:x}..0x{:x}={}", range.begin, range.end,
                                  AbstractTagLetter(t)));
    }
  }
  return fmt::format("{}", fmt::join(parts, ","));
}

SystemState SampleState(const ProgramImage& image, const TaintSignature& sig,
                        const MachineConfig& cfg, std::mt19937_64& rng) {
  SystemState s = cfg.MakeState();
  LoadImage(image, s).IgnoreError();
  for (TaggedWord& w : s.memory) {
    if (w.blinded) w.value = SampleValue(rng, cfg);
  }
  for (const auto& [r, tag] : sig.registers) {
    if (r < s.registers.size()) s.registers[r] = SampleWord(tag, rng, cfg);
  }
  for (const auto& [range, tag] : sig.memory) {
    for (uint64_t a = range.begin; a < range.end && a < s.memory.size(); ++a) {
      TaggedWord w = SampleWord(tag, rng, cfg);
      if (cfg.IsUnblindable(a)) w.blinded = false;
      s.memory[a] = w;
    }
  }
  return s;
}

std::string_view VerdictName(Verdict v) {
  switch (v) {
    case Verdict::kCompliant:
      return "compliant";
    case Verdict::kMayFault:
      return "may_fault";
    case Verdict::kDefinitelyFaults:
      return "definitely_faults";
  }
  return "unknown";
}

std::string_view SeverityName(Severity s) {
  switch (s) {
    case Severity::kDefinite:
      return "definite";
    case Severity::kPossible:
      return "possible";
    case Severity::kNote:
      return "note";
  }
  return "unknown";
}

std::string ComplianceReport::ToString() const {
  std::string out = fmt::format("verdict={}\n", VerdictName(verdict));
  for (const Finding& f : findings) {
    out += fmt::format("finding pc=0x{:x} severity={}", f.pc, SeverityName(f.severity));
    if (f.fault) out += fmt::format(" fault={}", FaultKindName(*f.fault));
    if (!f.instruction.empty()) out += fmt::format(" insn=\"{}\"", f.instruction);
    out += fmt::format(" reason=\"{}\"", f.reason);
    if (f.witness) {
      out += fmt::format(" witness_seed={} witness_step={}", f.witness->seed, f.witness->step);
    }
    out += "\n";
  }
  if (!explanation.empty()) out += fmt::format("explanation={}\n", explanation);
  return out;
}

std::string ComplianceReport::ToJson() const {
  nlohmann::json j;
  j["verdict"] = VerdictName(verdict);
  j["iterations"] = iterations;
  j["iteration_bound"] = iteration_bound;
  j["bound_exceeded"] = bound_exceeded;
  j["explanation"] = explanation;
  j["findings"] = nlohmann::json::array();
  for (const Finding& f : findings) {
    nlohmann::json jf;
    jf["pc"] = f.pc;
    jf["instruction"] = f.instruction;
    jf["reason"] = f.reason;
    jf["severity"] = SeverityName(f.severity);
    jf["fault"] = f.fault ? nlohmann::json(FaultKindName(*f.fault)) : nlohmann::json();
    if (f.witness) {
      jf["witness"] = {{"seed", f.witness->seed}, {"step", f.witness->step}};
    }
    j["findings"].push_back(jf);
  }
  return j.dump(2);
}

ComplianceReport Analyze(const ProgramImage& image, const TaintSignature& sig,
                         const MachineConfig& cfg, const AnalyzeOptions& opts) {
  return Analyzer(image, sig, cfg, opts).Run();
}

std::vector<std::pair<uint64_t, FaultKind>> PolicyFaults(const Trace& trace) {
  std::vector<std::pair<uint64_t, FaultKind>> out;
  for (const TraceEvent& e : trace) {
    if (e.kind == TraceEvent::Kind::kFault && IsPolicyFault(e.fault)) {
      out.emplace_back(e.a, e.fault);
    } else if (e.kind == TraceEvent::Kind::kRefusal) {
      out.emplace_back(e.a, FaultKind::kDecodeError);
    }
  }
  return out;
}

}  // namespace blindsim
