#ifndef BLINDSIM_ENGINE_H_
#define BLINDSIM_ENGINE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "blindsim/crypto.h"
#include "blindsim/machine.h"
#include "blindsim/system_state.h"

namespace blindsim {

// A 256-bit session key with its public identifier. The key bytes are wiped
// on destruction.
class SessionKey {
 public:
  explicit SessionKey(const KeyBytes& key);
  SessionKey(const SessionKey& other);
  SessionKey& operator=(const SessionKey& other);
  ~SessionKey();

  const KeyBytes& bytes() const { return key_; }
  const KeyId& key_id() const { return key_id_; }

 private:
  KeyBytes key_;
  KeyId key_id_;
};

struct SealedKey {
  // AEAD envelope under the root key of key | key_id | export counter.
  std::string blob;
  KeyId key_id{};
};

// The encryption engine: one session-key slot, decrypt-and-taint import,
// encrypt-and-untaint export, and sealing under a device root key.
//
// Error codes: Unauthenticated for tag failures, OutOfRange for bad memory
// ranges, FailedPrecondition when no key is loaded.
class Engine {
 public:
  explicit Engine(const KeyBytes& root_key);
  virtual ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  // Trusted path used by the HSM after key agreement. Resets the export
  // counter of the new key.
  void InstallKey(const SessionKey& key);

  bool has_key() const { return key_.has_value(); }
  std::optional<KeyId> key_id() const;
  uint64_t export_counter() const { return export_counter_; }

  // Decrypts `envelope` and writes the plaintext words to memory[dst..] as
  // blinded words in one update. Memory is untouched on any error. The
  // destination must not overlap an unblindable range.
  virtual absl::Status Import(SystemState& s, const MachineConfig& cfg,
                              uint64_t dst, std::string_view envelope,
                              Trace* trace);

  // Encrypts the payloads of memory[src..src+n] (tags ignored) under a fresh
  // counter nonce. Memory is never modified.
  virtual absl::StatusOr<std::string> Export(const SystemState& s, uint64_t src,
                                             uint64_t n, Trace* trace);

  // Seals the current key under the root key and clears the slot.
  absl::StatusOr<SealedKey> SealCurrentKey();

  // Replaces the slot with an unsealed key. Tampered, truncated or foreign
  // blobs are rejected and leave the slot unchanged.
  absl::Status LoadSealedKey(const SealedKey& sealed);

 protected:
  const SessionKey* current_key() const { return key_ ? &*key_ : nullptr; }

 private:
  KeyBytes root_key_;
  KeyId root_id_;
  std::optional<SessionKey> key_;
  uint64_t export_counter_ = 0;
  uint64_t seal_counter_ = 0;
};

}  // namespace blindsim

#endif  // BLINDSIM_ENGINE_H_
