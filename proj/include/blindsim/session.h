#ifndef BLINDSIM_SESSION_H_
#define BLINDSIM_SESSION_H_

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "blindsim/engine.h"
#include "blindsim/machine.h"
#include "blindsim/program_image.h"
#include "blindsim/protocol.h"

namespace blindsim {

// One end of an ordered, reliable byte stream.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual absl::Status Write(std::string_view bytes) = 0;
  // Exactly n bytes, or an error if the peer closed first.
  virtual absl::StatusOr<std::string> Read(size_t n) = 0;
  virtual void Close() = 0;
};

// Writes one encoded frame / reads one complete frame.
absl::Status SendMessage(Channel& ch, const Message& m);
absl::StatusOr<Message> ReceiveMessage(Channel& ch);

// Connected in-memory channel pair, safe to use from two threads.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> MemoryChannelPair();
// Connected local stream socket pair.
absl::StatusOr<std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>>>
SocketChannelPair();

// Connected TCP pair over 127.0.0.1 on an ephemeral port.
absl::StatusOr<std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>>>
LoopbackTcpChannelPair();

// kSocket is a local stream socket pair, kTcp a loopback TCP connection.
enum class Transport : uint8_t { kMemory, kSocket, kTcp };

using EngineFactory = std::function<std::unique_ptr<Engine>(const KeyBytes& root)>;

struct ServerConfig {
  MachineConfig machine;
  DeviceKey device = DeviceKey::FromSeed(0);
  Claims claims;
  KeyBytes root_key{};
  uint64_t seed = 0;
  uint64_t max_steps = 1'000'000;
  EngineFactory engine_factory;
};

// Server side of one session: handshake, then import / compute / export
// requests against a single machine. Everything it records is what the
// server (and so the OS) can observe.
class HsmServer {
 public:
  explicit HsmServer(ServerConfig cfg);

  // Handles one request and returns the reply.
  Message Handle(const Message& request);
  // Serves frames until the peer closes the channel.
  absl::Status Serve(Channel& ch);

  const Trace& trace() const { return trace_; }
  const SystemState& state() const { return state_; }
  const Engine& engine() const { return *engine_; }

 private:
  Message HandleHello(const ClientHello& hello);
  Message HandleImport(const ImportRequest& req);
  Message HandleCompute(const ComputeRequest& req);
  Message HandleExport(const ExportRequest& req);

  ServerConfig cfg_;
  std::unique_ptr<Engine> engine_;
  SystemState state_;
  Trace trace_;
  bool handshake_done_ = false;
};

class Client {
 public:
  Client(const PublicKey& device_public, uint64_t seed, Channel& ch);

  absl::Status Handshake();
  std::optional<KeyId> key_id() const;

  // Encrypts words under the session key (client nonce counter).
  absl::StatusOr<std::string> Encrypt(std::span<const uint64_t> words);
  absl::StatusOr<std::vector<uint64_t>> Decrypt(std::string_view envelope) const;

  absl::Status Import(uint64_t dst, std::span<const uint64_t> words);
  absl::Status SendImport(uint64_t dst, std::string ciphertext);
  absl::StatusOr<ComputeReply> Compute(const ProgramImage& image);
  // The reply ciphertext as received, and its decryption.
  absl::StatusOr<std::string> ExportCiphertext(uint64_t src, uint64_t n);
  absl::StatusOr<std::vector<uint64_t>> Export(uint64_t src, uint64_t n);

  // The client's own copy of the agreed key.
  const SessionKey* session_key() const { return key_ ? &*key_ : nullptr; }

 private:
  absl::StatusOr<Message> Roundtrip(const Message& m);

  ClientHandshake handshake_;
  Channel& ch_;
  std::optional<SessionKey> key_;
  uint64_t counter_ = 0;
};

// Demo program ABI: word 9 holds the data base address, word 10 the word
// count. Both are patched before the image is sent.
inline constexpr uint64_t kDemoBaseSlot = 9;
inline constexpr uint64_t kDemoCountSlot = 10;
inline constexpr uint64_t kDemoDefaultBase = 0x400;

struct DemoOptions {
  ProgramImage program;
  std::vector<uint64_t> plaintext;
  uint64_t base = kDemoDefaultBase;
  uint64_t seed = 1;
  MachineConfig machine;
  uint64_t max_steps = 1'000'000;
  Transport transport = Transport::kMemory;
  // Flips one ciphertext bit in transit.
  bool tamper_ciphertext = false;
  EngineFactory engine_factory;
};

struct DemoResult {
  std::vector<uint64_t> output;
  ComputeReply compute;
  std::optional<SessionKey> client_key;
  std::optional<KeyId> engine_key_id;
  Trace server_trace;
  SystemState server_state;
  // Every exported ciphertext seen on the wire.
  std::vector<std::string> exported;
};

// Client and server in one process: handshake, import, compute over the
// blinded region, export, client-side decrypt.
absl::StatusOr<DemoResult> RunDemo(const DemoOptions& opts);

struct DualResult {
  DemoResult first;
  DemoResult second;
  bool traces_identical = false;
  // Redacted final server snapshots; a clear copy of a plaintext shows here.
  bool snapshots_identical = false;
};

absl::StatusOr<DualResult> RunDualDemo(const DemoOptions& opts,
                                       std::vector<uint64_t> second_plaintext);

}  // namespace blindsim

#endif  // BLINDSIM_SESSION_H_
