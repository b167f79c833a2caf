#ifndef BLINDSIM_TAGGED_WORD_H_
#define BLINDSIM_TAGGED_WORD_H_

#include <cstdint>
#include <span>
#include <string>

namespace blindsim {

// A 64-bit machine word carrying a blindedness bit. A word is either
// Clear(v), observable by anyone, or Blinded(v), whose payload must never
// influence anything an observer can see.
struct TaggedWord {
  uint64_t value = 0;
  bool blinded = false;

  static constexpr TaggedWord Clear(uint64_t v) { return {v, false}; }
  static constexpr TaggedWord Blinded(uint64_t v) { return {v, true}; }

  constexpr bool IsClearZero() const { return !blinded && value == 0; }

  // Bitwise equality (value and tag). Use ValueEquiv for the
  // observer-equivalence relation.
  friend constexpr bool operator==(const TaggedWord&, const TaggedWord&) =
      default;
};

// Two words are indistinguishable to an observer when both are blinded, or
// both are clear with equal payloads.
constexpr bool ValueEquiv(const TaggedWord& a, const TaggedWord& b) {
  if (a.blinded && b.blinded) return true;
  return !a.blinded && !b.blinded && a.value == b.value;
}

// Equal length and pointwise ValueEquiv.
bool ListEquiv(std::span<const TaggedWord> xs, std::span<const TaggedWord> ys);

// Renders as "B:0x2a" or "C:0x2a".
std::string FormatTaggedWord(const TaggedWord& w);

}  // namespace blindsim

#endif  // BLINDSIM_TAGGED_WORD_H_
