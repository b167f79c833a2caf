#include "blindsim/engine.h"

#include <vector>

#include "fmt/format.h"

namespace blindsim {

namespace {

constexpr char kExportDirection = 'S';
constexpr char kSealDirection = 'K';

void PutBe64(std::string& out, uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>(v >> (8 * i)));
}

uint64_t GetBe64(std::string_view in) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | static_cast<uint8_t>(in[i]);
  return v;
}

TraceEvent EngineEvent(TraceEvent::Kind kind, const SystemState& s, uint64_t a,
                       uint64_t b) {
  TraceEvent e;
  e.kind = kind;
  e.cycle = s.cycle;
  e.a = a;
  e.b = b;
  return e;
}

}  // namespace

SessionKey::SessionKey(const KeyBytes& key)
    : key_(key), key_id_(ComputeKeyId(key)) {}

SessionKey::SessionKey(const SessionKey& other) = default;

SessionKey& SessionKey::operator=(const SessionKey& other) = default;

SessionKey::~SessionKey() { Wipe(key_.data(), key_.size()); }

Engine::Engine(const KeyBytes& root_key)
    : root_key_(root_key), root_id_(ComputeKeyId(root_key)) {}

Engine::~Engine() { Wipe(root_key_.data(), root_key_.size()); }

void Engine::InstallKey(const SessionKey& key) {
  key_.emplace(key);
  export_counter_ = 0;
}

std::optional<KeyId> Engine::key_id() const {
  if (!key_) return std::nullopt;
  return key_->key_id();
}

absl::Status Engine::Import(SystemState& s, const MachineConfig& cfg,
                            uint64_t dst, std::string_view envelope,
                            Trace* trace) {
  if (!key_) return absl::FailedPreconditionError("no session key loaded");
  if (envelope.size() < kEnvelopeOverhead) {
    return absl::UnauthenticatedError("ciphertext envelope too short");
  }
  const uint64_t bytes = envelope.size() - kEnvelopeOverhead;
  const uint64_t n = bytes / 8;
  if (dst > s.memory.size() || n > s.memory.size() - dst) {
    return absl::OutOfRangeError(
        fmt::format("import of {} words at 0x{:x} exceeds memory", n, dst));
  }
  for (uint64_t a = dst; a < dst + n; ++a) {
    if (cfg.IsUnblindable(a)) {
      return absl::OutOfRangeError(
          fmt::format("import destination 0x{:x} is unblindable", a));
    }
  }
  auto plaintext = AeadOpen(key_->bytes(), kDataLabel, envelope);
  if (!plaintext.ok()) return plaintext.status();
  auto words = BytesToWords(*plaintext);
  Wipe(plaintext->data(), plaintext->size());
  if (!words.ok()) return words.status();
  for (uint64_t i = 0; i < n; ++i) {
    s.memory[dst + i] = TaggedWord::Blinded((*words)[i]);
  }
  Wipe(words->data(), words->size() * sizeof(uint64_t));
  if (trace != nullptr) {
    trace->push_back(EngineEvent(TraceEvent::Kind::kImport, s, dst, n));
  }
  return absl::OkStatus();
}

absl::StatusOr<std::string> Engine::Export(const SystemState& s, uint64_t src,
                                           uint64_t n, Trace* trace) {
  if (!key_) return absl::FailedPreconditionError("no session key loaded");
  if (src > s.memory.size() || n > s.memory.size() - src) {
    return absl::OutOfRangeError(
        fmt::format("export of {} words at 0x{:x} exceeds memory", n, src));
  }
  std::vector<uint64_t> words(n);
  for (uint64_t i = 0; i < n; ++i) words[i] = s.memory[src + i].value;
  std::string plaintext = WordsToBytes(words);
  Wipe(words.data(), words.size() * sizeof(uint64_t));
  const Nonce nonce = MakeNonce(kExportDirection, key_->key_id(), export_counter_++);
  auto envelope = AeadSeal(key_->bytes(), nonce, kDataLabel, plaintext);
  Wipe(plaintext.data(), plaintext.size());
  if (trace != nullptr && envelope.ok()) {
    trace->push_back(EngineEvent(TraceEvent::Kind::kExport, s, src, n));
  }
  return envelope;
}

absl::StatusOr<SealedKey> Engine::SealCurrentKey() {
  if (!key_) return absl::FailedPreconditionError("no session key loaded");
  std::string record(AsBytes(key_->bytes()));
  record += AsBytes(key_->key_id());
  PutBe64(record, export_counter_);
  const Nonce nonce = MakeNonce(kSealDirection, root_id_, seal_counter_++);
  auto blob = AeadSeal(root_key_, nonce, kSealLabel, record);
  Wipe(record.data(), record.size());
  if (!blob.ok()) return blob.status();
  SealedKey sealed{std::move(*blob), key_->key_id()};
  key_.reset();
  export_counter_ = 0;
  return sealed;
}

absl::Status Engine::LoadSealedKey(const SealedKey& sealed) {
  auto record = AeadOpen(root_key_, kSealLabel, sealed.blob);
  if (!record.ok()) return record.status();
  constexpr size_t kRecordBytes = kKeyBytes + kKeyIdBytes + 8;
  if (record->size() != kRecordBytes) {
    Wipe(record->data(), record->size());
    return absl::UnauthenticatedError("sealed key record has wrong size");
  }
  KeyBytes key;
  std::copy(record->begin(), record->begin() + kKeyBytes, key.begin());
  SessionKey unsealed(key);
  Wipe(key.data(), key.size());
  const bool id_matches =
      AsBytes(unsealed.key_id()) == std::string_view(*record).substr(kKeyBytes, kKeyIdBytes) &&
      unsealed.key_id() == sealed.key_id;
  const uint64_t counter = GetBe64(std::string_view(*record).substr(kKeyBytes + kKeyIdBytes));
  Wipe(record->data(), record->size());
  if (!id_matches) return absl::UnauthenticatedError("sealed key id mismatch");
  key_.emplace(unsealed);
  export_counter_ = counter;
  return absl::OkStatus();
}

}  // namespace blindsim
