#ifndef BLINDSIM_CRYPTO_H_
#define BLINDSIM_CRYPTO_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"

namespace blindsim {

inline constexpr size_t kKeyBytes = 32;
inline constexpr size_t kKeyIdBytes = 16;
inline constexpr size_t kNonceBytes = 12;
inline constexpr size_t kTagBytes = 16;
inline constexpr size_t kEnvelopeOverhead = kNonceBytes + kTagBytes;

// The one AEAD used everywhere; its name is carried in the handshake.
inline constexpr std::string_view kAeadName = "chacha20-poly1305";

// Associated data labels.
inline constexpr std::string_view kDataLabel = "DATA";
inline constexpr std::string_view kSealLabel = "SEAL";

using KeyBytes = std::array<uint8_t, kKeyBytes>;
using KeyId = std::array<uint8_t, kKeyIdBytes>;
using Nonce = std::array<uint8_t, kNonceBytes>;
using Digest = std::array<uint8_t, 32>;

Digest Sha256(std::string_view data);

// First 16 bytes of SHA-256(key).
KeyId ComputeKeyId(const KeyBytes& key);

// direction byte | key_id[0..3) | counter (u64 big-endian).
Nonce MakeNonce(char direction, const KeyId& key_id, uint64_t counter);

// Envelope nonce | ciphertext | tag.
absl::StatusOr<std::string> AeadSeal(const KeyBytes& key, const Nonce& nonce,
                                     std::string_view aad,
                                     std::string_view plaintext);
// Unauthenticated on any tag or length problem.
absl::StatusOr<std::string> AeadOpen(const KeyBytes& key, std::string_view aad,
                                     std::string_view envelope);

// Little-endian 8-byte packing of machine words.
std::string WordsToBytes(std::span<const uint64_t> words);
absl::StatusOr<std::vector<uint64_t>> BytesToWords(std::string_view bytes);

std::string HexBytes(std::string_view bytes);

template <size_t N>
std::string_view AsBytes(const std::array<uint8_t, N>& a) {
  return {reinterpret_cast<const char*>(a.data()), N};
}

// Overwrites memory in a way the optimizer keeps.
void Wipe(void* p, size_t n);

}  // namespace blindsim

#endif  // BLINDSIM_CRYPTO_H_
