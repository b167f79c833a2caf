#ifndef BLINDSIM_PROGRAM_IMAGE_H_
#define BLINDSIM_PROGRAM_IMAGE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "blindsim/system_state.h"
#include "blindsim/tagged_word.h"

namespace blindsim {

struct Segment {
  uint64_t base = 0;
  std::vector<TaggedWord> words;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ProgramImage {
  uint64_t entry_pc = 0;
  std::vector<Segment> segments;

  // Segments are disjoint and fit in memory_words; entry is in bounds.
  absl::Status Validate(uint64_t memory_words) const;

  // Word at `address` if some segment covers it.
  std::optional<TaggedWord> WordAt(uint64_t address) const;
  // Overwrites a covered word; NotFound if no segment covers it.
  absl::Status SetWord(uint64_t address, TaggedWord w);

  uint64_t WordCount() const;

  friend bool operator==(const ProgramImage&, const ProgramImage&) = default;
};

// Writes every segment into s.memory and sets s.pc to the entry point.
absl::Status LoadImage(const ProgramImage& image, SystemState& s);

// Binary "BLIM" image file, all integers little-endian:
//   magic "BLIM" | version u16 = 1 | entry u64 | segment count u32
//   per segment: base u64 | count u64 | count x value u64
//   per segment, in order: taint bitmap of ceil(count / 8) bytes, bit i of
//   the segment at byte i / 8, bit i % 8 (LSB first)
std::string SerializeImage(const ProgramImage& image);
absl::StatusOr<ProgramImage> ParseImage(std::string_view bytes);

absl::StatusOr<ProgramImage> ReadImageFile(const std::string& path);
absl::Status WriteImageFile(const ProgramImage& image, const std::string& path);

}  // namespace blindsim

#endif  // BLINDSIM_PROGRAM_IMAGE_H_
