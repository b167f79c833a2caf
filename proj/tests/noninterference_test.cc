#include "blindsim/noninterference.h"

#include "gtest/gtest.h"

namespace blindsim {
namespace {

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

SemanticsResult AddDropsTaint(const DecodedInstruction& d,
                              std::span<const TaggedWord> in, PolicyMode mode) {
  SemanticsResult r = InstructionSemantics(d, in, mode);
  if (d.opcode == Opcode::kAdd && !r.outputs.empty()) r.outputs[0].blinded = false;
  return r;
}

TEST(GeneratorTest, PairsAreEquivalentByConstruction) {
  const MachineConfig cfg = SmallConfig(PolicyMode::kHardware);
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    auto [a, b] = GenerateEquivalentPair(seed, cfg);
    ASSERT_TRUE(StateEquiv(a, b)) << seed;
  }
}

TEST(GeneratorTest, NoBlindedWordsGivesIdenticalStates) {
  const MachineConfig cfg = SmallConfig(PolicyMode::kHardware);
  PairOptions opts;
  opts.blinded_fraction = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto [a, b] = GenerateEquivalentPair(seed, cfg, nullptr, opts);
    ASSERT_EQ(a, b);
  }
}

TEST(GeneratorTest, PairsWithBlindedWordsUsuallyDiffer) {
  const MachineConfig cfg = SmallConfig(PolicyMode::kHardware);
  int with_blinded = 0;
  int differing = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    auto [a, b] = GenerateEquivalentPair(seed, cfg);
    if (Redact(a) == a) continue;
    ++with_blinded;
    if (a != b) ++differing;
  }
  ASSERT_GT(with_blinded, 0);
  EXPECT_GE(differing * 100, with_blinded * 99);
}

TEST(GeneratorTest, DeterministicPerSeed) {
  const MachineConfig cfg = SmallConfig(PolicyMode::kModel);
  EXPECT_EQ(GenerateEquivalentPair(42, cfg), GenerateEquivalentPair(42, cfg));
}

TEST(NoninterferenceTest, RandomProgramsBothModes) {
  for (PolicyMode mode : {PolicyMode::kModel, PolicyMode::kHardware}) {
    NoninterferenceOptions opts;
    opts.trials = 2000;
    opts.steps = 200;
    opts.threads = 1;
    auto report = CheckNoninterference(nullptr, SmallConfig(mode), opts);
    EXPECT_TRUE(report.passed)
        << PolicyModeName(mode) << "\n" << report.counterexample->ToString();
    EXPECT_EQ(report.trials_run, opts.trials);
  }
}

TEST(NoninterferenceTest, ImmediateHaltPassesTrivially) {
  ProgramImage image;
  image.segments.push_back(
      {0, {TaggedWord::Clear(*Encode(DecodedInstruction::Halt()))}});
  MachineConfig cfg = SmallConfig(PolicyMode::kHardware);
  NoninterferenceOptions opts;
  opts.trials = 50;
  auto report = CheckNoninterference(&image, cfg, opts);
  EXPECT_TRUE(report.passed);
}

TEST(NoninterferenceTest, TaintDroppingAddIsCaughtAndMinimized) {
  MachineConfig cfg = SmallConfig(PolicyMode::kHardware);
  cfg.semantics = AddDropsTaint;
  NoninterferenceOptions opts;
  opts.trials = 2000;
  opts.threads = 1;
  auto report = CheckNoninterference(nullptr, cfg, opts);
  ASSERT_FALSE(report.passed);
  const Counterexample& cx = *report.counterexample;
  EXPECT_TRUE(StateEquiv(cx.s1, cx.s2));
  EXPECT_FALSE(cx.differing.empty());
  EXPECT_LE(cx.differing.size(), 2u);
  // The minimized pair still fails.
  EXPECT_TRUE(FindDivergence(cx.s1, cx.s2, cfg, opts.steps).has_value());
  EXPECT_NE(cx.ToString().find("differing blinded payloads"), std::string::npos);
}

TEST(NoninterferenceTest, ThreadedRunReportsSameFirstFailure) {
  MachineConfig cfg = SmallConfig(PolicyMode::kHardware);
  cfg.semantics = AddDropsTaint;
  NoninterferenceOptions opts;
  opts.trials = 500;
  opts.minimize = false;
  opts.threads = 1;
  auto serial = CheckNoninterference(nullptr, cfg, opts);
  opts.threads = 4;
  auto parallel = CheckNoninterference(nullptr, cfg, opts);
  ASSERT_FALSE(serial.passed);
  ASSERT_FALSE(parallel.passed);
  EXPECT_EQ(serial.counterexample->trial, parallel.counterexample->trial);
}

TEST(NoninterferenceTest, UntrackedMachineLeaks) {
  MachineConfig cfg = SmallConfig(PolicyMode::kHardware);
  cfg.enforce_policy = false;
  NoninterferenceOptions opts;
  opts.trials = 500;
  opts.threads = 1;
  EXPECT_FALSE(CheckNoninterference(nullptr, cfg, opts).passed);
}

}  // namespace
}  // namespace blindsim
