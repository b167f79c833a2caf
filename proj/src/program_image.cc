#include "blindsim/program_image.h"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fmt/format.h"

namespace blindsim {

namespace {

constexpr std::string_view kMagic = "BLIM";
constexpr uint16_t kVersion = 1;

template <typename T>
void PutLe(std::string& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  absl::StatusOr<T> Le() {
    if (bytes_.size() - pos_ < sizeof(T)) {
      return absl::DataLossError("truncated image file");
    }
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  absl::StatusOr<std::string_view> Bytes(size_t n) {
    if (bytes_.size() - pos_ < n) {
      return absl::DataLossError("truncated image file");
    }
    std::string_view v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

absl::Status ProgramImage::Validate(uint64_t memory_words) const {
  std::vector<std::pair<uint64_t, uint64_t>> spans;
  for (const Segment& seg : segments) {
    if (seg.base > memory_words || seg.words.size() > memory_words - seg.base) {
      return absl::OutOfRangeError(fmt::format("segment at 0x{:x} exceeds memory", seg.base));
    }
    spans.emplace_back(seg.base, seg.base + seg.words.size());
  }
  std::sort(spans.begin(), spans.end());
  for (size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      return absl::InvalidArgumentError("segments overlap");
    }
  }
  if (entry_pc >= memory_words) {
    return absl::OutOfRangeError("entry point outside memory");
  }
  return absl::OkStatus();
}

std::optional<TaggedWord> ProgramImage::WordAt(uint64_t address) const {
  for (const Segment& seg : segments) {
    if (address >= seg.base && address - seg.base < seg.words.size()) {
      return seg.words[address - seg.base];
    }
  }
  return std::nullopt;
}

absl::Status ProgramImage::SetWord(uint64_t address, TaggedWord w) {
  for (Segment& seg : segments) {
    if (address >= seg.base && address - seg.base < seg.words.size()) {
      seg.words[address - seg.base] = w;
      return absl::OkStatus();
    }
  }
  return absl::NotFoundError(
      fmt::format("no segment covers 0x{:x}", address));
}

uint64_t ProgramImage::WordCount() const {
  uint64_t n = 0;
  for (const Segment& seg : segments) n += seg.words.size();
  return n;
}

absl::Status LoadImage(const ProgramImage& image, SystemState& s) {
  if (auto st = image.Validate(s.memory.size()); !st.ok()) return st;
  for (const Segment& seg : image.segments) {
    std::copy(seg.words.begin(), seg.words.end(),
              s.memory.begin() + static_cast<std::ptrdiff_t>(seg.base));
  }
  s.pc = image.entry_pc;
  return absl::OkStatus();
}

std::string SerializeImage(const ProgramImage& image) {
  std::string out(kMagic);
  PutLe<uint16_t>(out, kVersion);
  PutLe<uint64_t>(out, image.entry_pc);
  PutLe<uint32_t>(out, static_cast<uint32_t>(image.segments.size()));
  for (const Segment& seg : image.segments) {
    PutLe<uint64_t>(out, seg.base);
    PutLe<uint64_t>(out, seg.words.size());
    for (const TaggedWord& w : seg.words) PutLe<uint64_t>(out, w.value);
  }
  for (const Segment& seg : image.segments) {
    std::string bitmap((seg.words.size() + 7) / 8, '\0');
    for (size_t i = 0; i < seg.words.size(); ++i) {
      if (seg.words[i].blinded) bitmap[i / 8] |= static_cast<char>(1 << (i % 8));
    }
    out += bitmap;
  }
  return out;
}

absl::StatusOr<ProgramImage> ParseImage(std::string_view bytes) {
  Reader in(bytes);
  auto magic = in.Bytes(kMagic.size());
  if (!magic.ok()) return magic.status();
  if (*magic != kMagic) return absl::InvalidArgumentError("bad image magic");
  auto version = in.Le<uint16_t>();
  if (!version.ok()) return version.status();
  if (*version != kVersion) {
    return absl::InvalidArgumentError(
        fmt::format("unsupported image version {}", *version));
  }
  ProgramImage image;
  auto entry = in.Le<uint64_t>();
  if (!entry.ok()) return entry.status();
  image.entry_pc = *entry;
  auto count = in.Le<uint32_t>();
  if (!count.ok()) return count.status();
  for (uint32_t i = 0; i < *count; ++i) {
    Segment seg;
    auto base = in.Le<uint64_t>();
    if (!base.ok()) return base.status();
    auto n = in.Le<uint64_t>();
    if (!n.ok()) return n.status();
    if (*n > in.remaining() / 8) return absl::DataLossError("truncated image file");
    seg.base = *base;
    seg.words.resize(*n);
    for (TaggedWord& w : seg.words) {
      auto v = in.Le<uint64_t>();
      if (!v.ok()) return v.status();
      w.value = *v;
    }
    image.segments.push_back(std::move(seg));
  }
  for (Segment& seg : image.segments) {
    auto bitmap = in.Bytes((seg.words.size() + 7) / 8);
    if (!bitmap.ok()) return bitmap.status();
    for (size_t i = 0; i < seg.words.size(); ++i) {
      seg.words[i].blinded = ((*bitmap)[i / 8] >> (i % 8)) & 1;
    }
    if (seg.words.size() % 8 != 0 &&
        (static_cast<uint8_t>(bitmap->back()) >> (seg.words.size() % 8)) != 0) {
      return absl::InvalidArgumentError("nonzero padding bits in tag bitmap");
    }
  }
  if (in.remaining() != 0) {
    return absl::InvalidArgumentError("trailing bytes after image");
  }
  return image;
}

absl::StatusOr<ProgramImage> ReadImageFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return absl::NotFoundError(fmt::format("cannot open {}", path));
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return ParseImage(bytes);
}

absl::Status WriteImageFile(const ProgramImage& image, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return absl::PermissionDeniedError(fmt::format("cannot write {}", path));
  const std::string bytes = SerializeImage(image);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) return absl::DataLossError(fmt::format("short write to {}", path));
  return absl::OkStatus();
}

}  // namespace blindsim
