#include "cli.h"

#include <charconv>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "blindsim/assembler.h"
#include "blindsim/checker.h"
#include "blindsim/machine.h"
#include "blindsim/noninterference.h"
#include "blindsim/program_image.h"
#include "blindsim/session.h"
#include "fmt/format.h"
#include "json.hpp"

namespace blindsim {

namespace {

// Raised for bad flags or unreadable inputs; maps to kExitUsage.
struct UsageError {
  std::string message;
};

std::string Message(const absl::Status& st) { return std::string(st.message()); }

uint64_t ParseNumber(std::string_view text, std::string_view what) {
  std::string_view digits = text;
  int base = 10;
  if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
    base = 16;
    digits.remove_prefix(2);
  }
  uint64_t v = 0;
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v, base);
  if (digits.empty() || ec != std::errc() || end != digits.data() + digits.size()) {
    throw UsageError{fmt::format("bad {} '{}'", what, text)};
  }
  return v;
}

AddressRange ParseRange(std::string_view text) {
  const size_t dots = text.find("..");
  if (dots == std::string_view::npos) {
    throw UsageError{fmt::format("bad range '{}', expected A..B", text)};
  }
  return {ParseNumber(text.substr(0, dots), "range start"),
          ParseNumber(text.substr(dots + 2), "range end")};
}

std::string ReadFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError{fmt::format("cannot open {}", path)};
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void WriteFile(const std::string& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw UsageError{fmt::format("cannot write {}", path)};
}

// Whitespace- or comma-separated decimal / 0x-hex words.
std::vector<uint64_t> ParseWords(const std::string& text, const std::string& path) {
  std::vector<uint64_t> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) out.push_back(ParseNumber(token, "word in " + path));
    token.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  return out;
}

struct MachineFlags {
  std::string mode = "hardware";
  bool allow_raw_unblind = false;
  size_t registers = kDefaultRegisterCount;
  size_t mem_words = kDefaultMemoryWords;
  size_t cache_lines = kDefaultCacheLines;
  std::string cache_policy = "direct";
  std::vector<std::string> unblindable;
  std::string mmio_console;
  uint64_t max_steps = 1'000'000;

  void Register(CLI::App* app) {
    app->add_option("--mode", mode, "Policy mode")
        ->check(CLI::IsMember({"model", "hardware"}))
        ->capture_default_str();
    app->add_flag("--allow-raw-unblind", allow_raw_unblind, "Permit rblnd");
    app->add_option("--registers", registers, "Register count")->capture_default_str();
    app->add_option("--mem-words", mem_words, "Memory size in words")->capture_default_str();
    app->add_option("--cache-lines", cache_lines, "Cache lines")->capture_default_str();
    app->add_option("--cache-policy", cache_policy, "Cache policy")
        ->check(CLI::IsMember({"direct", "lru"}))
        ->capture_default_str();
    app->add_option("--unblindable", unblindable, "Unblindable range A..B (repeatable)")
        ->take_all();
    app->add_option("--mmio-console", mmio_console, "Console MMIO address");
    app->add_option("--max-steps", max_steps, "Step limit")->capture_default_str();
  }

  MachineConfig Build() const {
    MachineConfig cfg;
    cfg.mode = mode == "model" ? PolicyMode::kModel : PolicyMode::kHardware;
    cfg.allow_raw_unblind = allow_raw_unblind;
    cfg.register_count = registers;
    cfg.memory_words = mem_words;
    cfg.cache_lines = cache_lines;
    cfg.cache_policy = cache_policy == "lru" ? LruPolicy : DirectMappedPolicy;
    for (const std::string& r : unblindable) cfg.unblindable_ranges.push_back(ParseRange(r));
    if (!mmio_console.empty()) cfg.mmio_console = ParseNumber(mmio_console, "address");
    if (auto st = cfg.Validate(); !st.ok()) throw UsageError{Message(st)};
    return cfg;
  }
};

// A BLIM file, or assembly source for anything else.
ProgramImage LoadProgram(const std::string& path, const MachineConfig& cfg) {
  const std::string bytes = ReadFile(path);
  if (bytes.rfind("BLIM", 0) == 0) {
    auto image = ParseImage(bytes);
    if (!image.ok()) throw UsageError{fmt::format("{}: {}", path, Message(image.status()))};
    return *image;
  }
  AssemblyResult r = Assemble(bytes, cfg.register_count, cfg.memory_words);
  if (!r.ok()) {
    std::string msg;
    for (const Diagnostic& d : r.diagnostics) msg += fmt::format("{}:{}\n", path, d.ToString());
    msg.pop_back();
    throw UsageError{msg};
  }
  return r.image;
}

std::string JoinWords(const std::vector<uint64_t>& words) {
  return fmt::format("{}", fmt::join(words, " "));
}

int CmdAsm(const std::string& in, const std::string& out_path, const MachineFlags& mf,
           std::ostream& out) {
  const MachineConfig cfg = mf.Build();
  AssemblyResult r = Assemble(ReadFile(in), cfg.register_count, cfg.memory_words);
  if (!r.ok()) {
    std::string msg;
    for (const Diagnostic& d : r.diagnostics) msg += fmt::format("{}:{}\n", in, d.ToString());
    msg.pop_back();
    throw UsageError{msg};
  }
  WriteFile(out_path, SerializeImage(r.image));
  out << fmt::format("wrote {} words in {} segments to {}\n", r.image.WordCount(),
                     r.image.segments.size(), out_path);
  return kExitOk;
}

int CmdDisasm(const std::string& in, const std::string& out_path, const MachineFlags& mf,
              std::ostream& out) {
  const MachineConfig cfg = mf.Build();
  auto image = ParseImage(ReadFile(in));
  if (!image.ok()) throw UsageError{fmt::format("{}: {}", in, Message(image.status()))};
  const std::string text = Disassemble(*image, cfg.register_count);
  if (out_path.empty()) {
    out << text;
  } else {
    WriteFile(out_path, text);
  }
  return kExitOk;
}

int CmdRun(const std::string& image_path, const MachineFlags& mf,
           const std::vector<std::string>& blind_words, const std::string& trace_path,
           std::ostream& out) {
  const MachineConfig cfg = mf.Build();
  const ProgramImage image = LoadProgram(image_path, cfg);
  SystemState s = cfg.MakeState();
  if (auto st = LoadImage(image, s); !st.ok()) throw UsageError{Message(st)};
  for (const std::string& bw : blind_words) {
    const size_t eq = bw.find('=');
    if (eq == std::string::npos) throw UsageError{fmt::format("bad --blind-word '{}'", bw)};
    const uint64_t addr = ParseNumber(bw.substr(0, eq), "address");
    if (addr >= s.memory.size()) throw UsageError{fmt::format("address {} out of range", addr)};
    s.memory[addr] = TaggedWord::Blinded(ParseNumber(bw.substr(eq + 1), "value"));
  }
  const RunResult r = Run(std::move(s), cfg, mf.max_steps);
  if (!trace_path.empty()) WriteFile(trace_path, FormatTrace(r.trace));
  out << fmt::format("outcome={} steps={}\n", RunOutcomeName(r.outcome), r.steps);
  out << FormatSnapshot(r.state);
  const auto faults = PolicyFaults(r.trace);
  for (const auto& [pc, kind] : faults) {
    out << fmt::format("policy_fault pc=0x{:x} fault={}\n", pc, FaultKindName(kind));
  }
  return r.outcome == RunOutcome::kHalted && faults.empty() ? kExitOk : kExitFailure;
}

int CmdCheck(const std::string& image_path, const MachineFlags& mf, const std::string& sig_text,
             uint64_t trials, uint64_t steps, uint64_t seed, const std::string& report_path,
             std::ostream& out) {
  const MachineConfig cfg = mf.Build();
  const ProgramImage image = LoadProgram(image_path, cfg);
  auto sig = TaintSignature::Parse(sig_text);
  if (!sig.ok()) throw UsageError{Message(sig.status())};
  for (const auto& [r, tag] : sig->registers) {
    if (r >= cfg.register_count) throw UsageError{fmt::format("signature register r{} out of range", r)};
  }

  AnalyzeOptions ao;
  ao.seed = seed;
  const ComplianceReport report = Analyze(image, *sig, cfg, ao);
  out << report.ToString();

  NoninterferenceReport ni;
  if (trials > 0) {
    NoninterferenceOptions no;
    no.trials = trials;
    no.steps = steps;
    no.seed = seed;
    no.pair.randomize_registers = false;
    no.pair.random_background = false;
    for (const auto& [range, tag] : sig->memory) {
      if (tag == AbstractTag::kBlinded) no.pair.blinded_inputs.push_back(range);
    }
    for (const auto& [r, tag] : sig->registers) {
      if (tag == AbstractTag::kBlinded) no.pair.blinded_registers.push_back(r);
    }
    ni = CheckNoninterference(&image, cfg, no);
    out << fmt::format("noninterference={} trials={} steps_checked={}\n",
                       ni.passed ? "pass" : "fail", ni.trials_run, ni.steps_checked);
    if (ni.counterexample) out << ni.counterexample->ToString();
  }

  if (!report_path.empty()) {
    nlohmann::json j = nlohmann::json::parse(report.ToJson());
    j["signature"] = sig->ToString();
    if (trials > 0) {
      j["noninterference"] = {{"passed", ni.passed},
                              {"trials", ni.trials_run},
                              {"steps_checked", ni.steps_checked}};
      if (ni.counterexample) {
        j["noninterference"]["counterexample"] = ni.counterexample->ToString();
      }
    }
    WriteFile(report_path, j.dump(2) + "\n");
  }
  return report.verdict == Verdict::kCompliant && ni.passed ? kExitOk : kExitFailure;
}

struct DemoFlags {
  std::string program;
  std::string plaintext;
  std::string dual;
  std::string trace;
  std::string dual_trace;
  std::string transport = "memory";
  std::string base = "0x400";
  uint64_t seed = 1;
  bool tamper = false;
};

int CmdDemo(const DemoFlags& df, const MachineFlags& mf, std::ostream& out,
            std::ostream& err) {
  DemoOptions opts;
  opts.machine = mf.Build();
  opts.max_steps = mf.max_steps;
  opts.program = LoadProgram(df.program, opts.machine);
  opts.plaintext = ParseWords(ReadFile(df.plaintext), df.plaintext);
  opts.base = ParseNumber(df.base, "base address");
  opts.seed = df.seed;
  opts.tamper_ciphertext = df.tamper;
  opts.transport = df.transport == "tcp"      ? Transport::kTcp
                   : df.transport == "socket" ? Transport::kSocket
                                              : Transport::kMemory;
  if (df.dual.empty()) {
    auto r = RunDemo(opts);
    if (!r.ok()) {
      err << "demo failed: " << Message(r.status()) << "\n";
      return kExitFailure;
    }
    if (!df.trace.empty()) WriteFile(df.trace, FormatTrace(r->server_trace));
    out << fmt::format("key_id={}\n", HexBytes(AsBytes(r->client_key->key_id())));
    out << fmt::format("outcome={} steps={}\n", RunOutcomeName(r->compute.outcome),
                       r->compute.steps);
    out << fmt::format("output={}\n", JoinWords(r->output));
    return kExitOk;
  }
  const std::vector<uint64_t> second = ParseWords(ReadFile(df.dual), df.dual);
  if (second.size() != opts.plaintext.size()) {
    throw UsageError{"--dual plaintext must have the same length as --plaintext"};
  }
  auto r = RunDualDemo(opts, second);
  if (!r.ok()) {
    err << "demo failed: " << Message(r.status()) << "\n";
    return kExitFailure;
  }
  if (!df.trace.empty()) WriteFile(df.trace, FormatTrace(r->first.server_trace));
  if (!df.dual_trace.empty()) WriteFile(df.dual_trace, FormatTrace(r->second.server_trace));
  out << fmt::format("output={}\n", JoinWords(r->first.output));
  out << fmt::format("output2={}\n", JoinWords(r->second.output));
  out << fmt::format("traces_identical={}\n", r->traces_identical ? "yes" : "no");
  out << fmt::format("snapshots_identical={}\n", r->snapshots_identical ? "yes" : "no");
  return r->traces_identical && r->snapshots_identical ? kExitOk : kExitFailure;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulator, assembler, checker and protocol demo for a blinded-data machine",
               "blindsim"};
  app.require_subcommand(1);

  std::string in_path, out_path, trace_path, report_path, sig_text;
  std::vector<std::string> blind_words;
  uint64_t trials = 0, steps = 200, seed = 1;
  MachineFlags mf;
  DemoFlags df;

  CLI::App* asm_cmd = app.add_subcommand("asm", "Assemble source into a BLIM image");
  asm_cmd->add_option("input", in_path, "Assembly source")->required();
  asm_cmd->add_option("-o,--output", out_path, "Output image")->required();
  mf.Register(asm_cmd);

  CLI::App* disasm_cmd = app.add_subcommand("disasm", "Disassemble a BLIM image");
  disasm_cmd->add_option("input", in_path, "Image file")->required();
  disasm_cmd->add_option("-o,--output", out_path, "Output text (default stdout)");
  mf.Register(disasm_cmd);

  CLI::App* run_cmd = app.add_subcommand("run", "Run an image on the machine");
  run_cmd->add_option("image", in_path, "Image file or assembly source")->required();
  run_cmd->add_option("--blind-word", blind_words, "Inject memory[ADDR] = Blinded VALUE")
      ->take_all();
  run_cmd->add_option("--trace", trace_path, "Write the trace here");
  mf.Register(run_cmd);

  CLI::App* check_cmd = app.add_subcommand("check", "Static compliance and non-interference");
  check_cmd->add_option("image", in_path, "Image file or assembly source")->required();
  check_cmd->add_option("--sig", sig_text, "Taint signature, e.g. r1=B,m0x80..0x88=B");
  check_cmd->add_option("--trials", trials, "Non-interference trials (0 skips)")
      ->capture_default_str();
  check_cmd->add_option("--steps", steps, "Steps per trial")->capture_default_str();
  check_cmd->add_option("--seed", seed, "Seed")->capture_default_str();
  check_cmd->add_option("--report", report_path, "Write a JSON report here");
  mf.Register(check_cmd);

  CLI::App* demo_cmd = app.add_subcommand("demo", "Client/HSM session over blinded data");
  demo_cmd->add_option("--program", df.program, "Image file or assembly source")->required();
  demo_cmd->add_option("--plaintext", df.plaintext, "File of input words")->required();
  demo_cmd->add_option("--dual", df.dual, "Second plaintext; compare server traces");
  demo_cmd->add_option("--trace", df.trace, "Write the server trace here");
  demo_cmd->add_option("--dual-trace", df.dual_trace, "Write the second server trace here");
  demo_cmd->add_option("--transport", df.transport, "Byte stream between client and HSM")
      ->check(CLI::IsMember({"memory", "socket", "tcp"}))
      ->capture_default_str();
  demo_cmd->add_option("--base", df.base, "Data base address")->capture_default_str();
  demo_cmd->add_option("--seed", df.seed, "Seed for keys and nonces")->capture_default_str();
  demo_cmd->add_flag("--tamper", df.tamper, "Flip one ciphertext bit in transit");
  mf.Register(demo_cmd);

  std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (asm_cmd->parsed()) return CmdAsm(in_path, out_path, mf, out);
    if (disasm_cmd->parsed()) return CmdDisasm(in_path, out_path, mf, out);
    if (run_cmd->parsed()) return CmdRun(in_path, mf, blind_words, trace_path, out);
    if (check_cmd->parsed()) {
      return CmdCheck(in_path, mf, sig_text, trials, steps, seed, report_path, out);
    }
    if (demo_cmd->parsed()) return CmdDemo(df, mf, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.message << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace blindsim
