#include "blindsim/checker.h"

#include <random>

#include "blindsim/assembler.h"
#include "blindsim/noninterference.h"
#include "corpus_util.h"
#include "gtest/gtest.h"
#include "json.hpp"

namespace blindsim {
namespace {

using ::blindsim::testing::CorpusConfig;
using ::blindsim::testing::CorpusImage;
using ::blindsim::testing::CorpusSignature;
using ::blindsim::testing::PoolEntry;

ProgramImage MustAssemble(std::string_view src) {
  AssemblyResult r = Assemble(src, 32, 256);
  EXPECT_TRUE(r.ok()) << (r.ok() ? "" : r.diagnostics[0].ToString());
  return r.image;
}

const Finding* FindAt(const ComplianceReport& r, uint64_t pc, Severity sev) {
  for (const Finding& f : r.findings) {
    if (f.pc == pc && f.severity == sev) return &f;
  }
  return nullptr;
}

uint64_t ConcreteFaultCount(const ProgramImage& image, const TaintSignature& sig,
                            const MachineConfig& cfg, uint64_t runs) {
  uint64_t faults = 0;
  for (uint64_t seed = 0; seed < runs; ++seed) {
    std::mt19937_64 rng(seed);
    RunResult r = blindsim::Run(SampleState(image, sig, cfg, rng), cfg, 10000);
    faults += !PolicyFaults(r.trace).empty();
  }
  return faults;
}

TEST(TagLatticeTest, JoinIsLeastUpperBound) {
  const AbstractTag all[] = {AbstractTag::kClear, AbstractTag::kBlinded, AbstractTag::kTop};
  for (AbstractTag a : all) {
    EXPECT_EQ(JoinTags(a, a), a);
    for (AbstractTag b : all) {
      EXPECT_EQ(JoinTags(a, b), JoinTags(b, a));
      EXPECT_TRUE(TagLeq(a, JoinTags(a, b)));
      EXPECT_TRUE(TagLeq(b, JoinTags(a, b)));
      for (AbstractTag c : all) {
        EXPECT_EQ(JoinTags(JoinTags(a, b), c), JoinTags(a, JoinTags(b, c)));
      }
    }
  }
  EXPECT_FALSE(TagLeq(AbstractTag::kClear, AbstractTag::kBlinded));
  EXPECT_FALSE(TagLeq(AbstractTag::kBlinded, AbstractTag::kClear));
}

TEST(TaintSignatureTest, ParsesAndPrints) {
  auto sig = TaintSignature::Parse("r1=B, r2=C,m0x80..0x88=B,m64=T");
  ASSERT_TRUE(sig.ok()) << sig.status();
  ASSERT_EQ(sig->registers.size(), 2u);
  EXPECT_EQ(sig->registers[0].first, 1);
  EXPECT_EQ(sig->registers[0].second, AbstractTag::kBlinded);
  ASSERT_EQ(sig->memory.size(), 2u);
  EXPECT_EQ(sig->memory[0].first.begin, 0x80u);
  EXPECT_EQ(sig->memory[0].first.end, 0x88u);
  EXPECT_EQ(sig->memory[1].first.begin, 64u);
  EXPECT_EQ(sig->memory[1].first.end, 65u);
  EXPECT_EQ(sig->ToString(), "r1=B,r2=C,m0x80..0x88=B,m0x40=T");
  auto again = TaintSignature::Parse(sig->ToString());
  ASSERT_TRUE(again.ok());
  EXPECT_EQ(again->ToString(), sig->ToString());
  EXPECT_TRUE(TaintSignature::Parse("")->registers.empty());
}

TEST(TaintSignatureTest, RejectsMalformedEntries) {
  for (const char* bad : {"r1", "r1=X", "q1=B", "m0x10..0x10=B", "m0x20..0x10=C",
                          "r=B", "m=B", "rz=B", "r999=B"}) {
    EXPECT_FALSE(TaintSignature::Parse(bad).ok()) << bad;
  }
}

TEST(SampleStateTest, FollowsSignature) {
  const ProgramImage image = CorpusImage("select");
  const MachineConfig cfg = CorpusConfig(PolicyMode::kHardware);
  auto sig = TaintSignature::Parse("r3=B,r4=C,m0xf0..0xf4=B,m0x90..0x94=C");
  ASSERT_TRUE(sig.ok());
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    SystemState s = SampleState(image, *sig, cfg, rng);
    EXPECT_TRUE(s.registers[3].blinded);
    EXPECT_FALSE(s.registers[4].blinded);
    // Unblindable words stay clear whatever the signature says.
    for (uint64_t a = 0xf0; a < 0xf4; ++a) EXPECT_FALSE(s.memory[a].blinded);
    for (uint64_t a = 0x90; a < 0x94; ++a) EXPECT_FALSE(s.memory[a].blinded);
    EXPECT_EQ(s.pc, image.entry_pc);
    EXPECT_EQ(s.memory[0x10], *image.WordAt(0x10));
  }
}

TEST(CheckerCorpusTest, CompliantProgramsInBothModes) {
  for (PolicyMode mode : {PolicyMode::kHardware, PolicyMode::kModel}) {
    const MachineConfig cfg = CorpusConfig(mode);
    for (const char* name : {"add_one", "select", "ct_compare"}) {
      const ProgramImage image = CorpusImage(name);
      const TaintSignature sig = CorpusSignature(name, image);
      const ComplianceReport r = Analyze(image, sig, cfg);
      EXPECT_EQ(r.verdict, Verdict::kCompliant) << name << "\n" << r.ToString();
      EXPECT_FALSE(r.bound_exceeded);
      EXPECT_EQ(ConcreteFaultCount(image, sig, cfg, 200), 0u) << name;
    }
  }
}

TEST(CheckerCorpusTest, SelectExhaustiveOverSmallInputs) {
  const ProgramImage image = CorpusImage("select");
  const uint64_t a = PoolEntry(image, 1), b = PoolEntry(image, 2), c = PoolEntry(image, 3),
                 out = PoolEntry(image, 4);
  for (PolicyMode mode : {PolicyMode::kHardware, PolicyMode::kModel}) {
    const MachineConfig cfg = CorpusConfig(mode);
    ASSERT_EQ(Analyze(image, CorpusSignature("select", image), cfg).verdict,
              Verdict::kCompliant);
    for (uint64_t x = 0; x < 16; ++x) {
      for (uint64_t y = 0; y < 16; ++y) {
        for (uint64_t cond = 0; cond < 2; ++cond) {
          SystemState s = cfg.MakeState();
          ASSERT_TRUE(LoadImage(image, s).ok());
          s.memory[a] = TaggedWord::Blinded(x);
          s.memory[b] = TaggedWord::Blinded(y);
          s.memory[c] = TaggedWord::Clear(cond);
          const RunResult r = blindsim::Run(s, cfg, 1000);
          ASSERT_EQ(r.outcome, RunOutcome::kHalted);
          EXPECT_TRUE(PolicyFaults(r.trace).empty());
          EXPECT_EQ(r.state.memory[out].value, cond ? x : y);
          EXPECT_TRUE(r.state.memory[out].blinded);
        }
      }
    }
  }
}

TEST(CheckerCorpusTest, BlindedBranchDefinitelyFaults) {
  const ProgramImage image = CorpusImage("fault_branch");
  for (PolicyMode mode : {PolicyMode::kHardware, PolicyMode::kModel}) {
    const MachineConfig cfg = CorpusConfig(mode);
    const ComplianceReport r = Analyze(image, {}, cfg);
    EXPECT_EQ(r.verdict, Verdict::kDefinitelyFaults) << r.ToString();
    const Finding* f = FindAt(r, 0x18, Severity::kDefinite);
    ASSERT_NE(f, nullptr) << r.ToString();
    EXPECT_EQ(f->fault, FaultKind::kBlindedBranch);
    EXPECT_EQ(f->instruction, "bz r6, r7");
    ASSERT_TRUE(f->witness.has_value());
    const RunResult run = blindsim::Run(f->witness->initial, cfg, 1000);
    const auto faults = PolicyFaults(run.trace);
    ASSERT_FALSE(faults.empty());
    EXPECT_EQ(faults[0].first, 0x18u);
  }
}

TEST(CheckerCorpusTest, BlindedAddressDependsOnMode) {
  const ProgramImage image = CorpusImage("fault_load");
  const ComplianceReport hw = Analyze(image, {}, CorpusConfig(PolicyMode::kHardware));
  EXPECT_EQ(hw.verdict, Verdict::kDefinitelyFaults) << hw.ToString();
  const Finding* f = FindAt(hw, 0x16, Severity::kDefinite);
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->fault, FaultKind::kBlindedAddress);

  const ComplianceReport model = Analyze(image, {}, CorpusConfig(PolicyMode::kModel));
  EXPECT_EQ(model.verdict, Verdict::kCompliant) << model.ToString();
  EXPECT_NE(FindAt(model, 0x16, Severity::kNote), nullptr);
}

TEST(CheckerCorpusTest, BlindedStoreToConsoleDefinitelyFaults) {
  const ProgramImage image = CorpusImage("fault_mmio");
  const ComplianceReport r = Analyze(image, {}, CorpusConfig(PolicyMode::kHardware));
  EXPECT_EQ(r.verdict, Verdict::kDefinitelyFaults);
  const Finding* f = FindAt(r, 0x1c, Severity::kDefinite);
  ASSERT_NE(f, nullptr) << r.ToString();
  EXPECT_EQ(f->fault, FaultKind::kBlindedStoreToUnblindable);
  // The clear store before it is not flagged.
  EXPECT_EQ(r.findings.size(), 1u) << r.ToString();
}

TEST(CheckerTest, TaintFreeProgramIsCompliant) {
  const ProgramImage image = MustAssemble(R"(
.org 0
        xor r0, r0, r0
        halt
.org 8
        .word pool
.org 0x10
start:  load r1, r0
        load r2, r1
        load r3, r2
        add r4, r3, r3
        bz r4, r3
        halt
pool:   .word 0x15
.entry start
)");
  const ComplianceReport r = Analyze(image, {}, CorpusConfig(PolicyMode::kHardware));
  EXPECT_EQ(r.verdict, Verdict::kCompliant) << r.ToString();
  EXPECT_TRUE(r.findings.empty());
}

TEST(CheckerTest, MayFaultWhenTagUnknown) {
  const ProgramImage image = MustAssemble(R"(
.org 0
        xor r0, r0, r0
        halt
.org 0x10
start:  bz r1, r2
        halt
.entry start
)");
  auto sig = TaintSignature::Parse("r1=T,r2=C");
  ASSERT_TRUE(sig.ok());
  const ComplianceReport r = Analyze(image, *sig, CorpusConfig(PolicyMode::kHardware));
  EXPECT_EQ(r.verdict, Verdict::kMayFault) << r.ToString();
  ASSERT_NE(FindAt(r, 0x10, Severity::kPossible), nullptr);
}

TEST(CheckerTest, ZeroingIdiomsClearTaint) {
  // xor r, r, r and and-with-zero give Clear 0 even from blinded inputs, so
  // branching on the result is fine.
  const ProgramImage image = MustAssemble(R"(
.org 0
        xor r0, r0, r0
        halt
.org 0x10
start:  xor r3, r1, r1
        and r4, r1, r5
        add r6, r3, r4
        bz r6, r7
        halt
.entry start
)");
  auto sig = TaintSignature::Parse("r1=B,r7=C");
  ASSERT_TRUE(sig.ok());
  const ComplianceReport r = Analyze(image, *sig, CorpusConfig(PolicyMode::kHardware));
  EXPECT_EQ(r.verdict, Verdict::kMayFault) << r.ToString();
  // Only the unknown target is a concern, never a blinded branch.
  for (const Finding& f : r.findings) EXPECT_FALSE(f.fault.has_value()) << r.ToString();
}

TEST(CheckerTest, RefusedRawUnblindIsDefinite) {
  const ProgramImage image = MustAssemble(R"(
.org 0
        xor r0, r0, r0
        halt
.org 0x10
start:  rblnd r1
        halt
.entry start
)");
  MachineConfig cfg = CorpusConfig(PolicyMode::kHardware);
  ComplianceReport r = Analyze(image, {}, cfg);
  EXPECT_EQ(r.verdict, Verdict::kDefinitelyFaults) << r.ToString();
  cfg.allow_raw_unblind = true;
  r = Analyze(image, {}, cfg);
  EXPECT_EQ(r.verdict, Verdict::kCompliant) << r.ToString();
}

TEST(CheckerTest, UnconfirmedCandidateIsDowngraded) {
  // The blinded branch sits behind a clear branch that is never taken
  // concretely but is taken on the abstract path because r2 is unknown.
  const ProgramImage image = MustAssemble(R"(
.org 0
        xor r0, r0, r0
        halt
.org 0x10
start:  bz r2, r3
        halt
        bz r1, r0
.entry start
)");
  auto sig = TaintSignature::Parse("r1=B,r2=C,r3=C");
  ASSERT_TRUE(sig.ok());
  AnalyzeOptions opts;
  opts.witness_attempts = 4;
  const ComplianceReport r = Analyze(image, *sig, CorpusConfig(PolicyMode::kHardware), opts);
  // Either confirmed (a sampled r2 of 0 with r3 = 0x12) or downgraded; never
  // reported as definite without a witness.
  for (const Finding& f : r.findings) {
    if (f.severity == Severity::kDefinite) EXPECT_TRUE(f.witness.has_value());
  }
  EXPECT_NE(r.verdict, Verdict::kCompliant);
}

TEST(CheckerTest, IterationBoundGivesMayFault) {
  // A counter with known value each trip keeps the disjunctive states apart.
  const ProgramImage image = MustAssemble(R"(
.org 0
        xor r0, r0, r0
        halt
.org 8
        .word pool
.org 0x10
start:  load r1, r0
        load r2, r1
        load r3, r2             # 1
        add r4, r2, r3
        load r5, r4             # loop
        add r4, r4, r3
        load r6, r4             # done
        add r4, r4, r3
        load r7, r4             # count
loop:   bz r7, r6
        sub r7, r7, r3
        bz r0, r5
done:   halt
pool:   .word 1
        .word loop
        .word done
        .word 500
.entry start
)");
  AnalyzeOptions opts;
  opts.states_per_pc = 100000;
  const ComplianceReport r = Analyze(image, {}, CorpusConfig(PolicyMode::kHardware), opts);
  EXPECT_TRUE(r.bound_exceeded);
  EXPECT_EQ(r.verdict, Verdict::kMayFault);
  EXPECT_FALSE(r.explanation.empty());
  EXPECT_EQ(r.iterations, r.iteration_bound);

  // With the default disjunction limit the loop counter widens and the
  // fixpoint is reached.
  const ComplianceReport d = Analyze(image, {}, CorpusConfig(PolicyMode::kHardware));
  EXPECT_FALSE(d.bound_exceeded) << d.ToString();
  EXPECT_EQ(d.verdict, Verdict::kCompliant) << d.ToString();
}

// Soundness on random programs: whenever the checker says Compliant, no
// sampled concrete run hits a policy fault, and every definite finding
// carries a witness that reproduces it.
TEST(CheckerPropertyTest, RandomProgramsAreSound) {
  MachineConfig cfg;
  cfg.register_count = 8;
  cfg.memory_words = 64;
  cfg.cache_lines = 4;
  cfg.unblindable_ranges = {{56, 64}};
  cfg.mmio_console = 63;
  int compliant = 0, definite = 0;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    std::mt19937_64 rng(seed);
    ProgramImage image;
    Segment seg;
    seg.base = 0;
    seg.words.push_back(TaggedWord::Clear(RandomInstructionWord(rng, 8)));
    seg.words.push_back(TaggedWord::Clear(0xFFFFFF00));
    for (int i = 0; i < 30; ++i) {
      seg.words.push_back(TaggedWord{rng() % 3 == 0 ? rng() % 64
                                                    : RandomInstructionWord(rng, 8),
                                     rng() % 8 == 0});
    }
    image.segments.push_back(seg);
    image.entry_pc = 2;
    auto sig = TaintSignature::Parse(seed % 2 ? "r1=B,r2=C" : "r1=C,m0x30..0x34=B");
    ASSERT_TRUE(sig.ok());
    for (PolicyMode mode : {PolicyMode::kHardware, PolicyMode::kModel}) {
      cfg.mode = mode;
      const ComplianceReport r = Analyze(image, *sig, cfg);
      if (r.verdict == Verdict::kCompliant) {
        ++compliant;
        EXPECT_EQ(ConcreteFaultCount(image, *sig, cfg, 50), 0u) << seed << "\n" << r.ToString();
      }
      for (const Finding& f : r.findings) {
        if (f.severity != Severity::kDefinite) continue;
        ++definite;
        ASSERT_TRUE(f.witness.has_value());
        const RunResult run = blindsim::Run(f.witness->initial, cfg, 100000);
        bool found = false;
        for (const auto& [pc, kind] : PolicyFaults(run.trace)) {
          found |= pc == f.pc && kind == f.fault;
        }
        EXPECT_TRUE(found) << seed << " pc " << f.pc;
      }
    }
  }
  EXPECT_GT(compliant, 20);
  EXPECT_GT(definite, 20);
}

TEST(ComplianceReportTest, TextAndJson) {
  const ProgramImage image = CorpusImage("fault_branch");
  const ComplianceReport r = Analyze(image, {}, CorpusConfig(PolicyMode::kHardware));
  const std::string text = r.ToString();
  EXPECT_EQ(text.rfind("verdict=definitely_faults\n", 0), 0u) << text;
  EXPECT_NE(text.find("finding pc=0x18 severity=definite fault=blinded_branch"),
            std::string::npos)
      << text;
  const auto j = nlohmann::json::parse(r.ToJson());
  EXPECT_EQ(j["verdict"], "definitely_faults");
  ASSERT_FALSE(j["findings"].empty());
  EXPECT_EQ(j["findings"][0]["pc"], 0x18);
  EXPECT_TRUE(j["findings"][0].contains("witness"));
}

}  // namespace
}  // namespace blindsim
