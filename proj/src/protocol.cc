#include "blindsim/protocol.h"

#include <memory>

#include <openssl/evp.h>
#include <openssl/kdf.h>

#include "fmt/format.h"

namespace blindsim {

namespace {

constexpr std::string_view kTranscriptLabel = "blindsim handshake v1";
constexpr std::string_view kSessionInfo = "session key";

struct PkeyFree {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
struct PkeyCtxFree {
  void operator()(EVP_PKEY_CTX* c) const { EVP_PKEY_CTX_free(c); }
};
struct MdCtxFree {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
using Pkey = std::unique_ptr<EVP_PKEY, PkeyFree>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxFree>;
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxFree>;

std::array<uint8_t, 32> SeedBytes(std::string_view label, uint64_t seed) {
  std::string in(label);
  for (int i = 7; i >= 0; --i) in.push_back(static_cast<char>(seed >> (8 * i)));
  return Sha256(in);
}

PublicKey RawPublic(const Pkey& key) {
  PublicKey pub{};
  size_t len = pub.size();
  EVP_PKEY_get_raw_public_key(key.get(), pub.data(), &len);
  return pub;
}

PublicKey X25519Public(const std::array<uint8_t, 32>& priv) {
  Pkey key(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, priv.data(),
                                        priv.size()));
  return RawPublic(key);
}

absl::StatusOr<KeyBytes> DeriveSessionKey(const std::array<uint8_t, 32>& priv,
                                          const PublicKey& peer,
                                          const Digest& transcript) {
  Pkey mine(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, priv.data(),
                                         priv.size()));
  Pkey theirs(EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer.data(),
                                          peer.size()));
  if (!mine || !theirs) return absl::InvalidArgumentError("bad x25519 key");
  std::array<uint8_t, 32> shared{};
  size_t shared_len = shared.size();
  PkeyCtx dctx(EVP_PKEY_CTX_new(mine.get(), nullptr));
  // Derivation fails on low-order peer points (all-zero shared secret).
  if (!dctx || EVP_PKEY_derive_init(dctx.get()) != 1 ||
      EVP_PKEY_derive_set_peer(dctx.get(), theirs.get()) != 1 ||
      EVP_PKEY_derive(dctx.get(), shared.data(), &shared_len) != 1 ||
      shared_len != shared.size()) {
    return absl::PermissionDeniedError("key agreement failed");
  }
  KeyBytes out{};
  size_t out_len = out.size();
  PkeyCtx kctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  const bool ok =
      kctx && EVP_PKEY_derive_init(kctx.get()) == 1 &&
      EVP_PKEY_CTX_set_hkdf_md(kctx.get(), EVP_sha256()) == 1 &&
      EVP_PKEY_CTX_set1_hkdf_salt(kctx.get(), transcript.data(),
                                  static_cast<int>(transcript.size())) == 1 &&
      EVP_PKEY_CTX_set1_hkdf_key(kctx.get(), shared.data(),
                                 static_cast<int>(shared.size())) == 1 &&
      EVP_PKEY_CTX_add1_hkdf_info(
          kctx.get(), reinterpret_cast<const unsigned char*>(kSessionInfo.data()),
          static_cast<int>(kSessionInfo.size())) == 1 &&
      EVP_PKEY_derive(kctx.get(), out.data(), &out_len) == 1;
  Wipe(shared.data(), shared.size());
  if (!ok) return absl::InternalError("hkdf failed");
  return out;
}

class Writer {
 public:
  void U8(uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void Be(uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void Bytes(std::string_view b) { out_ += b; }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  absl::StatusOr<uint64_t> Be(int bytes) {
    if (in_.size() - pos_ < static_cast<size_t>(bytes)) return Truncated();
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | static_cast<uint8_t>(in_[pos_ + i]);
    pos_ += bytes;
    return v;
  }
  absl::StatusOr<std::string_view> Bytes(size_t n) {
    if (in_.size() - pos_ < n) return Truncated();
    std::string_view v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  template <size_t N>
  absl::Status Array(std::array<uint8_t, N>& out) {
    auto b = Bytes(N);
    if (!b.ok()) return b.status();
    std::copy(b->begin(), b->end(), out.begin());
    return absl::OkStatus();
  }
  absl::StatusOr<bool> Bool() {
    auto v = Be(1);
    if (!v.ok()) return v.status();
    if (*v > 1) return absl::InvalidArgumentError("boolean field not 0 or 1");
    return *v == 1;
  }
  absl::Status Done() const {
    if (pos_ != in_.size()) return absl::InvalidArgumentError("trailing bytes in frame");
    return absl::OkStatus();
  }

 private:
  static absl::Status Truncated() { return absl::InvalidArgumentError("truncated frame"); }
  std::string_view in_;
  size_t pos_ = 0;
};

#define BLINDSIM_ASSIGN(lhs, expr)       \
  {                                      \
    auto value_or = (expr);              \
    if (!value_or.ok()) return value_or.status(); \
    lhs = *value_or;                     \
  }

#define BLINDSIM_RETURN_IF_ERROR(expr)     \
  if (auto st = (expr); !st.ok()) return st;

void PutClaims(Writer& w, const Claims& c) {
  w.U8(c.has_blime_extensions ? 1 : 0);
  w.U8(c.os_certified ? 1 : 0);
  w.U8(c.policy_mode == PolicyMode::kHardware ? 1 : 0);
}

absl::StatusOr<Claims> GetClaims(Reader& r) {
  Claims c;
  BLINDSIM_ASSIGN(c.has_blime_extensions, r.Bool());
  BLINDSIM_ASSIGN(c.os_certified, r.Bool());
  bool hardware = false;
  BLINDSIM_ASSIGN(hardware, r.Bool());
  c.policy_mode = hardware ? PolicyMode::kHardware : PolicyMode::kModel;
  return c;
}

std::string ClaimsBytes(const Claims& c) {
  Writer w;
  PutClaims(w, c);
  return w.str();
}

std::string SignedMessage(const AttestationEvidence& e) {
  return ClaimsBytes(e.claims) + std::string(AsBytes(e.transcript_hash));
}

struct BodyWriter {
  Writer& w;
  FrameType operator()(const ClientHello& m) {
    w.U8(static_cast<uint8_t>(m.scheme.size()));
    w.Bytes(m.scheme);
    w.Bytes(AsBytes(m.ephemeral_public));
    return FrameType::kClientHello;
  }
  FrameType operator()(const HsmHello& m) {
    w.Bytes(AsBytes(m.ephemeral_public));
    PutClaims(w, m.evidence.claims);
    w.Bytes(AsBytes(m.evidence.transcript_hash));
    w.Bytes(AsBytes(m.evidence.signature));
    return FrameType::kHsmHello;
  }
  FrameType operator()(const ImportRequest& m) {
    w.Be(m.dst, 8);
    w.Be(m.ciphertext.size(), 4);
    w.Bytes(m.ciphertext);
    return FrameType::kImport;
  }
  FrameType operator()(const ComputeRequest& m) {
    const std::string image = SerializeImage(m.image);
    w.Be(m.entry, 8);
    w.Be(image.size(), 4);
    w.Bytes(image);
    return FrameType::kCompute;
  }
  FrameType operator()(const ExportRequest& m) {
    w.Be(m.src, 8);
    w.Be(m.n, 8);
    return FrameType::kExport;
  }
  FrameType operator()(const ExportReply& m) {
    w.Be(m.ciphertext.size(), 4);
    w.Bytes(m.ciphertext);
    return FrameType::kExportReply;
  }
  FrameType operator()(const ComputeReply& m) {
    w.U8(static_cast<uint8_t>(m.outcome));
    w.Be(m.steps, 8);
    return FrameType::kComputeReply;
  }
  FrameType operator()(const Ack&) { return FrameType::kAck; }
  FrameType operator()(const ErrorReply& m) {
    const std::string_view msg = std::string_view(m.message).substr(0, 0xFFFF);
    w.Be(msg.size(), 2);
    w.Bytes(msg);
    return FrameType::kError;
  }
};

absl::StatusOr<std::string_view> LengthPrefixed(Reader& r, int len_bytes) {
  uint64_t n = 0;
  BLINDSIM_ASSIGN(n, r.Be(len_bytes));
  return r.Bytes(n);
}

absl::StatusOr<Message> ParseBody(FrameType type, Reader& r) {
  switch (type) {
    case FrameType::kClientHello: {
      ClientHello m;
      std::string_view scheme;
      BLINDSIM_ASSIGN(scheme, LengthPrefixed(r, 1));
      m.scheme = std::string(scheme);
      BLINDSIM_RETURN_IF_ERROR(r.Array(m.ephemeral_public));
      return m;
    }
    case FrameType::kHsmHello: {
      HsmHello m;
      BLINDSIM_RETURN_IF_ERROR(r.Array(m.ephemeral_public));
      BLINDSIM_ASSIGN(m.evidence.claims, GetClaims(r));
      BLINDSIM_RETURN_IF_ERROR(r.Array(m.evidence.transcript_hash));
      BLINDSIM_RETURN_IF_ERROR(r.Array(m.evidence.signature));
      return m;
    }
    case FrameType::kImport: {
      ImportRequest m;
      BLINDSIM_ASSIGN(m.dst, r.Be(8));
      std::string_view ct;
      BLINDSIM_ASSIGN(ct, LengthPrefixed(r, 4));
      m.ciphertext = std::string(ct);
      return m;
    }
    case FrameType::kCompute: {
      ComputeRequest m;
      BLINDSIM_ASSIGN(m.entry, r.Be(8));
      std::string_view image;
      BLINDSIM_ASSIGN(image, LengthPrefixed(r, 4));
      BLINDSIM_ASSIGN(m.image, ParseImage(image));
      return m;
    }
    case FrameType::kExport: {
      ExportRequest m;
      BLINDSIM_ASSIGN(m.src, r.Be(8));
      BLINDSIM_ASSIGN(m.n, r.Be(8));
      return m;
    }
    case FrameType::kExportReply: {
      ExportReply m;
      std::string_view ct;
      BLINDSIM_ASSIGN(ct, LengthPrefixed(r, 4));
      m.ciphertext = std::string(ct);
      return m;
    }
    case FrameType::kComputeReply: {
      ComputeReply m;
      uint64_t outcome = 0;
      BLINDSIM_ASSIGN(outcome, r.Be(1));
      if (outcome > static_cast<uint64_t>(RunOutcome::kStepLimit)) {
        return absl::InvalidArgumentError("unknown run outcome");
      }
      m.outcome = static_cast<RunOutcome>(outcome);
      BLINDSIM_ASSIGN(m.steps, r.Be(8));
      return m;
    }
    case FrameType::kAck:
      return Ack{};
    case FrameType::kError: {
      ErrorReply m;
      std::string_view msg;
      BLINDSIM_ASSIGN(msg, LengthPrefixed(r, 2));
      m.message = std::string(msg);
      return m;
    }
  }
  return absl::InvalidArgumentError("unknown frame type");
}

bool KnownFrameType(uint8_t t) {
  switch (static_cast<FrameType>(t)) {
    case FrameType::kClientHello:
    case FrameType::kHsmHello:
    case FrameType::kImport:
    case FrameType::kCompute:
    case FrameType::kExport:
    case FrameType::kExportReply:
    case FrameType::kComputeReply:
    case FrameType::kAck:
    case FrameType::kError:
      return true;
  }
  return false;
}

}  // namespace

DeviceKey DeviceKey::FromSeed(uint64_t seed) {
  DeviceKey k;
  k.private_ = SeedBytes("device key", seed);
  Pkey key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr,
                                        k.private_.data(), k.private_.size()));
  k.public_ = RawPublic(key);
  return k;
}

DeviceKey::~DeviceKey() { Wipe(private_.data(), private_.size()); }

Signature DeviceKey::Sign(std::string_view message) const {
  Signature sig{};
  Pkey key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr,
                                        private_.data(), private_.size()));
  MdCtx ctx(EVP_MD_CTX_new());
  size_t len = sig.size();
  EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get());
  EVP_DigestSign(ctx.get(), sig.data(), &len,
                 reinterpret_cast<const unsigned char*>(message.data()),
                 message.size());
  return sig;
}

bool VerifySignature(const PublicKey& key, std::string_view message,
                     const Signature& signature) {
  Pkey pub(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, key.data(),
                                       key.size()));
  if (!pub) return false;
  MdCtx ctx(EVP_MD_CTX_new());
  return EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pub.get()) == 1 &&
         EVP_DigestVerify(ctx.get(), signature.data(), signature.size(),
                          reinterpret_cast<const unsigned char*>(message.data()),
                          message.size()) == 1;
}

std::string EncodeFrame(const Message& m) {
  Writer body;
  const FrameType type = std::visit(BodyWriter{body}, m);
  Writer frame;
  frame.Be(body.str().size(), 4);
  frame.U8(static_cast<uint8_t>(type));
  frame.Bytes(body.str());
  return std::move(frame.str());
}

absl::StatusOr<uint32_t> FrameBodyLength(std::string_view header) {
  if (header.size() < kFrameHeaderBytes) {
    return absl::InvalidArgumentError("truncated frame header");
  }
  Reader r(header);
  uint64_t len = 0;
  BLINDSIM_ASSIGN(len, r.Be(4));
  if (len > kMaxFrameBody) return absl::InvalidArgumentError("frame too large");
  return static_cast<uint32_t>(len);
}

absl::StatusOr<Message> ParseFrame(std::string_view frame) {
  uint32_t len = 0;
  BLINDSIM_ASSIGN(len, FrameBodyLength(frame));
  if (frame.size() - kFrameHeaderBytes != len) {
    return absl::InvalidArgumentError(
        fmt::format("frame length {} does not match {} body bytes", len,
                    frame.size() - kFrameHeaderBytes));
  }
  const uint8_t type = static_cast<uint8_t>(frame[4]);
  if (!KnownFrameType(type)) {
    return absl::InvalidArgumentError(fmt::format("unknown frame type 0x{:02x}", type));
  }
  Reader r(frame.substr(kFrameHeaderBytes));
  auto m = ParseBody(static_cast<FrameType>(type), r);
  if (!m.ok()) return m.status();
  BLINDSIM_RETURN_IF_ERROR(r.Done());
  return m;
}

Digest TranscriptHash(const ClientHello& hello, const PublicKey& hsm_public,
                      const Claims& claims) {
  std::string t(kTranscriptLabel);
  t += EncodeFrame(hello);
  t += AsBytes(hsm_public);
  t += ClaimsBytes(claims);
  return Sha256(t);
}

ClientHandshake::ClientHandshake(const PublicKey& device_public, uint64_t seed)
    : device_public_(device_public),
      ephemeral_private_(SeedBytes("client ephemeral", seed)) {
  hello_.ephemeral_public = X25519Public(ephemeral_private_);
}

ClientHandshake::~ClientHandshake() {
  Wipe(ephemeral_private_.data(), ephemeral_private_.size());
}

absl::StatusOr<SessionKey> ClientHandshake::Finish(const HsmHello& reply) const {
  const AttestationEvidence& e = reply.evidence;
  if (!VerifySignature(device_public_, SignedMessage(e), e.signature)) {
    return absl::PermissionDeniedError("attestation signature does not verify");
  }
  if (TranscriptHash(hello_, reply.ephemeral_public, e.claims) != e.transcript_hash) {
    return absl::PermissionDeniedError("transcript hash mismatch");
  }
  if (!e.claims.has_blime_extensions) {
    return absl::PermissionDeniedError("server lacks blinded-data extensions");
  }
  if (!e.claims.os_certified) {
    return absl::PermissionDeniedError("server OS is not certified");
  }
  auto key = DeriveSessionKey(ephemeral_private_, reply.ephemeral_public,
                              e.transcript_hash);
  if (!key.ok()) return key.status();
  SessionKey session(*key);
  Wipe(key->data(), key->size());
  return session;
}

absl::StatusOr<HsmHandshakeResult> HsmHandshake(const DeviceKey& device,
                                                const Claims& claims,
                                                uint64_t seed,
                                                const ClientHello& hello) {
  if (hello.scheme != kSchemeName) {
    return absl::InvalidArgumentError(
        fmt::format("unsupported scheme '{}'", hello.scheme));
  }
  std::array<uint8_t, 32> priv = SeedBytes("hsm ephemeral", seed);
  HsmHello reply;
  reply.ephemeral_public = X25519Public(priv);
  reply.evidence.claims = claims;
  reply.evidence.transcript_hash =
      TranscriptHash(hello, reply.ephemeral_public, claims);
  reply.evidence.signature = device.Sign(SignedMessage(reply.evidence));
  auto key = DeriveSessionKey(priv, hello.ephemeral_public,
                              reply.evidence.transcript_hash);
  Wipe(priv.data(), priv.size());
  if (!key.ok()) return key.status();
  HsmHandshakeResult result{reply, SessionKey(*key)};
  Wipe(key->data(), key->size());
  return result;
}

}  // namespace blindsim
