#ifndef BLINDSIM_ASSEMBLER_H_
#define BLINDSIM_ASSEMBLER_H_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "blindsim/program_image.h"
#include "blindsim/system_state.h"

namespace blindsim {

// Assembly grammar, one statement per line:
//
//   [label:] halt
//   [label:] store rA, rS        memory[rA] <- rS
//   [label:] load rD, rA         rD <- memory[rA]
//   [label:] bz rC, rT           if rC == 0 then pc <- rT
//   [label:] add|sub|mul|and|xor rD, rA, rB
//   [label:] blnd rA | rblnd rA
//   .org ADDR                    continue emitting at ADDR
//   .word VALUE [blinded]        VALUE is a number or a label
//   .entry ADDR                  ADDR is a number or a label
//   # comment
//
// Numbers are decimal or 0x-prefixed hex. The ISA has no immediates, so
// constants (including label addresses) live in .word data and are loaded
// through a register holding their address. Registers reset to Clear 0, and
// `load rN, r0` reads word 0, the fault-handler slot. The usual prologue
// therefore starts the handler with `xor r0, r0, r0` (encoding 8), which
// doubles as a pointer to a .word at address 8 holding the address of the
// constant pool.
struct Diagnostic {
  int line = 0;
  int column = 0;
  std::string message;

  // "line:column: message"
  std::string ToString() const;
  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct AssemblyResult {
  ProgramImage image;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return diagnostics.empty(); }
};

AssemblyResult Assemble(std::string_view source,
                        size_t register_count = kDefaultRegisterCount,
                        size_t memory_words = kDefaultMemoryWords);

// Re-assemblable text. Words that do not decode render as .word literals,
// blinded words as `.word V blinded`.
std::string Disassemble(const ProgramImage& image,
                        size_t register_count = kDefaultRegisterCount);

}  // namespace blindsim

#endif  // BLINDSIM_ASSEMBLER_H_
