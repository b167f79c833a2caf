#ifndef BLINDSIM_PROTOCOL_H_
#define BLINDSIM_PROTOCOL_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "blindsim/crypto.h"
#include "blindsim/engine.h"
#include "blindsim/isa.h"
#include "blindsim/machine.h"
#include "blindsim/program_image.h"

namespace blindsim {

// Key agreement, signature, KDF and AEAD, in that order.
inline constexpr std::string_view kSchemeName =
    "x25519+ed25519+hkdf-sha256+chacha20-poly1305";

using PublicKey = std::array<uint8_t, 32>;
using Signature = std::array<uint8_t, 64>;

// Ed25519 device key of the HSM.
class DeviceKey {
 public:
  // Deterministic key from a seed; tests and the demo use fixed seeds.
  static DeviceKey FromSeed(uint64_t seed);
  ~DeviceKey();
  DeviceKey(const DeviceKey&) = default;
  DeviceKey& operator=(const DeviceKey&) = default;

  const PublicKey& public_key() const { return public_; }
  Signature Sign(std::string_view message) const;

 private:
  DeviceKey() = default;
  std::array<uint8_t, 32> private_{};
  PublicKey public_{};
};

bool VerifySignature(const PublicKey& key, std::string_view message,
                     const Signature& signature);

struct Claims {
  bool has_blime_extensions = true;
  bool os_certified = true;
  PolicyMode policy_mode = PolicyMode::kHardware;

  friend bool operator==(const Claims&, const Claims&) = default;
};

struct AttestationEvidence {
  Claims claims;
  Digest transcript_hash{};
  // Over the encoded claims followed by transcript_hash.
  Signature signature{};

  friend bool operator==(const AttestationEvidence&,
                         const AttestationEvidence&) = default;
};

struct ClientHello {
  std::string scheme = std::string(kSchemeName);
  PublicKey ephemeral_public{};

  friend bool operator==(const ClientHello&, const ClientHello&) = default;
};

struct HsmHello {
  PublicKey ephemeral_public{};
  AttestationEvidence evidence;

  friend bool operator==(const HsmHello&, const HsmHello&) = default;
};

struct ImportRequest {
  uint64_t dst = 0;
  std::string ciphertext;
  friend bool operator==(const ImportRequest&, const ImportRequest&) = default;
};

struct ComputeRequest {
  uint64_t entry = 0;
  ProgramImage image;
  friend bool operator==(const ComputeRequest&, const ComputeRequest&) = default;
};

struct ExportRequest {
  uint64_t src = 0;
  uint64_t n = 0;
  friend bool operator==(const ExportRequest&, const ExportRequest&) = default;
};

struct ExportReply {
  std::string ciphertext;
  friend bool operator==(const ExportReply&, const ExportReply&) = default;
};

struct ComputeReply {
  RunOutcome outcome = RunOutcome::kHalted;
  uint64_t steps = 0;
  friend bool operator==(const ComputeReply&, const ComputeReply&) = default;
};

struct Ack {
  friend bool operator==(const Ack&, const Ack&) = default;
};

struct ErrorReply {
  std::string message;
  friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};

using Message = std::variant<ClientHello, HsmHello, ImportRequest, ComputeRequest,
                             ExportRequest, ExportReply, ComputeReply, Ack,
                             ErrorReply>;

enum class FrameType : uint8_t {
  kClientHello = 0x01,
  kHsmHello = 0x02,
  kImport = 0x10,
  kCompute = 0x11,
  kExport = 0x12,
  kExportReply = 0x13,
  kComputeReply = 0x14,
  kAck = 0x15,
  kError = 0x16,
};

inline constexpr size_t kFrameHeaderBytes = 5;
inline constexpr uint32_t kMaxFrameBody = 64u << 20;

// len (u32 big-endian, body bytes) | type (u8) | body. Body integers are
// big-endian.
std::string EncodeFrame(const Message& m);
// Parses exactly one frame; trailing bytes, unknown types and
// non-canonical fields are errors.
absl::StatusOr<Message> ParseFrame(std::string_view frame);
// Body length announced by a frame header.
absl::StatusOr<uint32_t> FrameBodyLength(std::string_view header);

// Client side of the handshake.
class ClientHandshake {
 public:
  ClientHandshake(const PublicKey& device_public, uint64_t seed);
  ~ClientHandshake();

  const ClientHello& hello() const { return hello_; }
  // Verifies the evidence and claims and derives the session key.
  absl::StatusOr<SessionKey> Finish(const HsmHello& reply) const;

 private:
  PublicKey device_public_;
  std::array<uint8_t, 32> ephemeral_private_{};
  ClientHello hello_;
};

struct HsmHandshakeResult {
  HsmHello hello;
  SessionKey key;
};

absl::StatusOr<HsmHandshakeResult> HsmHandshake(const DeviceKey& device,
                                                const Claims& claims,
                                                uint64_t seed,
                                                const ClientHello& hello);

// Hash binding the client hello, the HSM ephemeral and the claims.
Digest TranscriptHash(const ClientHello& hello, const PublicKey& hsm_public,
                      const Claims& claims);

}  // namespace blindsim

#endif  // BLINDSIM_PROTOCOL_H_
