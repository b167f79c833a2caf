#include "blindsim/assembler.h"

#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <unordered_map>

#include "fmt/format.h"
#include "blindsim/isa.h"

namespace blindsim {

namespace {

struct Token {
  std::string text;
  int column = 0;  // 1-based
};

struct Statement {
  int line = 0;
  std::vector<Token> labels;
  std::optional<Token> head;   // mnemonic or directive
  std::vector<Token> operands;
};

bool IsIdentChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

bool IsIdentifier(std::string_view s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

std::optional<uint64_t> ParseNumber(std::string_view s) {
  bool negative = false;
  if (!s.empty() && s[0] == '-') {
    negative = true;
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return negative ? uint64_t{0} - v : v;
}

std::optional<uint8_t> ParseRegister(std::string_view s, size_t register_count) {
  if (s.size() < 2 || s[0] != 'r') return std::nullopt;
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if (v >= register_count || v >= kNoRegister) return std::nullopt;
  return static_cast<uint8_t>(v);
}

bool LooksLikeRegister(std::string_view s) {
  if (s.size() < 2 || s[0] != 'r') return false;
  for (size_t i = 1; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

// Splits one source line into labels, a head token and comma-separated
// operands.
std::optional<Diagnostic> Lex(std::string_view text, int line_no,
                              Statement& st) {
  st.line = line_no;
  if (auto hash = text.find('#'); hash != std::string_view::npos) {
    text = text.substr(0, hash);
  }
  size_t i = 0;
  bool expect_operand = true;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == ',') {
      if (!st.head || expect_operand) {
        return Diagnostic{line_no, static_cast<int>(i) + 1, "unexpected ','"};
      }
      expect_operand = true;
      ++i;
      continue;
    }
    if (!IsIdentChar(c) && c != '-') {
      return Diagnostic{line_no, static_cast<int>(i) + 1,
                        fmt::format("unexpected character '{}'", std::string(1, c))};
    }
    const size_t start = i;
    ++i;
    while (i < text.size() && IsIdentChar(text[i])) ++i;
    Token tok{std::string(text.substr(start, i - start)), static_cast<int>(start) + 1};
    if (i < text.size() && text[i] == ':') {
      if (st.head) {
        return Diagnostic{line_no, tok.column, "label must precede the statement"};
      }
      st.labels.push_back(std::move(tok));
      ++i;
      continue;
    }
    if (!st.head) {
      st.head = std::move(tok);
      expect_operand = true;
      continue;
    }
    if (!expect_operand && st.operands.size() > 0) {
      // `.word 5 blinded` allows a trailing keyword without a comma.
      if (st.head->text == ".word" && tok.text == "blinded") {
        st.operands.push_back(std::move(tok));
        continue;
      }
      return Diagnostic{line_no, tok.column, "expected ',' between operands"};
    }
    st.operands.push_back(std::move(tok));
    expect_operand = false;
  }
  if (st.head && expect_operand && !st.operands.empty()) {
    return Diagnostic{line_no, static_cast<int>(text.size()) + 1,
                      "missing operand after ','"};
  }
  return std::nullopt;
}

class Assembler {
 public:
  Assembler(size_t register_count, size_t memory_words)
      : register_count_(register_count), memory_words_(memory_words) {}

  AssemblyResult Run(std::string_view source) {
    std::vector<Statement> statements;
    int line_no = 0;
    size_t pos = 0;
    while (pos <= source.size()) {
      size_t nl = source.find('\n', pos);
      if (nl == std::string_view::npos) nl = source.size();
      ++line_no;
      Statement st;
      if (auto diag = Lex(source.substr(pos, nl - pos), line_no, st)) {
        result_.diagnostics.push_back(*diag);
      } else {
        statements.push_back(std::move(st));
      }
      pos = nl + 1;
    }
    DefineLabels(statements);
    for (const Statement& st : statements) Emit(st);
    BuildSegments();
    return std::move(result_);
  }

 private:
  void Error(int line, int column, std::string message) {
    result_.diagnostics.push_back({line, column, std::move(message)});
  }

  void DefineLabels(const std::vector<Statement>& statements) {
    uint64_t loc = 0;
    for (const Statement& st : statements) {
      for (const Token& label : st.labels) {
        if (!IsIdentifier(label.text) || LooksLikeRegister(label.text)) {
          Error(st.line, label.column, fmt::format("invalid label name '{}'", label.text));
        } else if (!labels_.emplace(label.text, loc).second) {
          Error(st.line, label.column, fmt::format("duplicate label '{}'", label.text));
        }
      }
      if (!st.head) continue;
      if (st.head->text == ".org") {
        if (st.operands.size() == 1) {
          if (auto v = ParseNumber(st.operands[0].text)) loc = *v;
        }
      } else if (st.head->text != ".entry") {
        ++loc;
      }
    }
  }

  std::optional<uint64_t> Value(int line, const Token& tok) {
    if (auto v = ParseNumber(tok.text)) return v;
    if (auto it = labels_.find(tok.text); it != labels_.end()) return it->second;
    if (IsIdentifier(tok.text)) {
      Error(line, tok.column, fmt::format("undefined label '{}'", tok.text));
    } else {
      Error(line, tok.column, fmt::format("bad number '{}'", tok.text));
    }
    return std::nullopt;
  }

  bool ExpectOperands(const Statement& st, size_t n) {
    if (st.operands.size() == n) return true;
    Error(st.line, st.head->column,
          fmt::format("'{}' takes {} operand{}, got {}", st.head->text, n, n == 1 ? "" : "s", st.operands.size()));
    return false;
  }

  std::optional<uint8_t> Reg(const Statement& st, size_t i) {
    const Token& tok = st.operands[i];
    if (auto r = ParseRegister(tok.text, register_count_)) return r;
    Error(st.line, tok.column, fmt::format("bad register '{}'", tok.text));
    return std::nullopt;
  }

  void Put(const Statement& st, TaggedWord w) {
    if (loc_ >= memory_words_) {
      Error(st.line, st.head->column,
            fmt::format("address 0x{:x} out of range", loc_));
    } else if (!words_.emplace(loc_, w).second) {
      Error(st.line, st.head->column,
            fmt::format("address 0x{:x} already written", loc_));
    }
    ++loc_;
  }

  void Emit(const Statement& st) {
    if (!st.head) return;
    const std::string& head = st.head->text;
    if (head == ".org") {
      if (!ExpectOperands(st, 1)) return;
      auto v = ParseNumber(st.operands[0].text);
      if (!v) {
        Error(st.line, st.operands[0].column, "'.org' needs a numeric address");
        return;
      }
      if (*v >= memory_words_) {
        Error(st.line, st.operands[0].column,
              fmt::format("address 0x{:x} out of range", *v));
      }
      loc_ = *v;
      return;
    }
    if (head == ".entry") {
      if (!ExpectOperands(st, 1)) return;
      if (auto v = Value(st.line, st.operands[0])) {
        if (*v >= memory_words_) {
          Error(st.line, st.operands[0].column,
                fmt::format("address 0x{:x} out of range", *v));
        }
        result_.image.entry_pc = *v;
      }
      return;
    }
    if (head == ".word") {
      const bool blinded = st.operands.size() == 2 && st.operands[1].text == "blinded";
      if (st.operands.empty() || st.operands.size() > 2 ||
          (st.operands.size() == 2 && !blinded)) {
        Error(st.line, st.head->column, "'.word' takes VALUE [blinded]");
        ++loc_;
        return;
      }
      auto v = Value(st.line, st.operands[0]);
      Put(st, TaggedWord{v.value_or(0), blinded});
      return;
    }
    if (!head.empty() && head[0] == '.') {
      Error(st.line, st.head->column, fmt::format("unknown directive '{}'", head));
      return;
    }
    auto op = OpcodeFromMnemonic(head);
    if (!op) {
      Error(st.line, st.head->column, fmt::format("unknown mnemonic '{}'", head));
      ++loc_;
      return;
    }
    std::optional<DecodedInstruction> d = Instruction(st, *op);
    if (!d) {
      ++loc_;
      return;
    }
    auto word = Encode(*d, register_count_);
    Put(st, TaggedWord::Clear(word.ok() ? *word : 0));
  }

  std::optional<DecodedInstruction> Instruction(const Statement& st, Opcode op) {
    switch (op) {
      case Opcode::kHalt:
        if (!ExpectOperands(st, 0)) return std::nullopt;
        return DecodedInstruction::Halt();
      case Opcode::kBlnd:
      case Opcode::kRblnd: {
        if (!ExpectOperands(st, 1)) return std::nullopt;
        auto a = Reg(st, 0);
        if (!a) return std::nullopt;
        return op == Opcode::kBlnd ? DecodedInstruction::Blnd(*a)
                                   : DecodedInstruction::Rblnd(*a);
      }
      case Opcode::kStore:
      case Opcode::kLoad:
      case Opcode::kBz: {
        if (!ExpectOperands(st, 2)) return std::nullopt;
        auto x = Reg(st, 0);
        auto y = Reg(st, 1);
        if (!x || !y) return std::nullopt;
        if (op == Opcode::kStore) return DecodedInstruction::Store(*x, *y);
        if (op == Opcode::kLoad) return DecodedInstruction::Load(*x, *y);
        return DecodedInstruction::Bz(*x, *y);
      }
      default: {
        if (!ExpectOperands(st, 3)) return std::nullopt;
        auto dst = Reg(st, 0);
        auto a = Reg(st, 1);
        auto b = Reg(st, 2);
        if (!dst || !a || !b) return std::nullopt;
        return DecodedInstruction::Alu(op, *dst, *a, *b);
      }
    }
  }

  void BuildSegments() {
    for (const auto& [addr, w] : words_) {
      auto& segs = result_.image.segments;
      if (segs.empty() || segs.back().base + segs.back().words.size() != addr) {
        segs.push_back(Segment{addr, {}});
      }
      segs.back().words.push_back(w);
    }
  }

  size_t register_count_;
  size_t memory_words_;
  uint64_t loc_ = 0;
  std::unordered_map<std::string, uint64_t> labels_;
  std::map<uint64_t, TaggedWord> words_;
  AssemblyResult result_;
};

}  // namespace

std::string Diagnostic::ToString() const {
  return fmt::format("{}:{}: {}", line, column, message);
}

AssemblyResult Assemble(std::string_view source, size_t register_count,
                        size_t memory_words) {
  return Assembler(register_count, memory_words).Run(source);
}

std::string Disassemble(const ProgramImage& image, size_t register_count) {
  std::string out = fmt::format(".entry 0x{:x}\n", image.entry_pc);
  for (const Segment& seg : image.segments) {
    out += fmt::format(".org 0x{:x}\n", seg.base);
    for (const TaggedWord& w : seg.words) {
      if (w.blinded) {
        out += fmt::format("    .word 0x{:x} blinded\n", w.value);
        continue;
      }
      auto d = Decode(w.value, register_count);
      if (d.ok()) {
        out += fmt::format("    {}\n", FormatInstruction(*d));
      } else {
        out += fmt::format("    .word 0x{:x}\n", w.value);
      }
    }
  }
  return out;
}

}  // namespace blindsim
