#include "blindsim/crypto.h"

#include <memory>

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/sha.h>

#include "absl/status/status.h"
#include "fmt/format.h"

namespace blindsim {

namespace {

struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;

const unsigned char* U(std::string_view s) {
  return reinterpret_cast<const unsigned char*>(s.data());
}

}  // namespace

Digest Sha256(std::string_view data) {
  Digest d;
  SHA256(U(data), data.size(), d.data());
  return d;
}

KeyId ComputeKeyId(const KeyBytes& key) {
  const Digest d = Sha256(AsBytes(key));
  KeyId id;
  std::copy(d.begin(), d.begin() + kKeyIdBytes, id.begin());
  return id;
}

Nonce MakeNonce(char direction, const KeyId& key_id, uint64_t counter) {
  Nonce n{};
  n[0] = static_cast<uint8_t>(direction);
  std::copy(key_id.begin(), key_id.begin() + 3, n.begin() + 1);
  for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<uint8_t>(counter >> (56 - 8 * i));
  return n;
}

absl::StatusOr<std::string> AeadSeal(const KeyBytes& key, const Nonce& nonce,
                                     std::string_view aad,
                                     std::string_view plaintext) {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  int len = 0;
  std::string out(kNonceBytes + plaintext.size() + kTagBytes, '\0');
  std::copy(nonce.begin(), nonce.end(), out.begin());
  auto* ct = reinterpret_cast<unsigned char*>(out.data()) + kNonceBytes;
  if (!ctx ||
      EVP_EncryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key.data(),
                         nonce.data()) != 1 ||
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, U(aad),
                        static_cast<int>(aad.size())) != 1 ||
      EVP_EncryptUpdate(ctx.get(), ct, &len, U(plaintext),
                        static_cast<int>(plaintext.size())) != 1 ||
      EVP_EncryptFinal_ex(ctx.get(), ct + len, &len) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, kTagBytes,
                          ct + plaintext.size()) != 1) {
    return absl::InternalError("aead encryption failed");
  }
  return out;
}

absl::StatusOr<std::string> AeadOpen(const KeyBytes& key, std::string_view aad,
                                     std::string_view envelope) {
  if (envelope.size() < kEnvelopeOverhead) {
    return absl::UnauthenticatedError("ciphertext envelope too short");
  }
  const std::string_view nonce = envelope.substr(0, kNonceBytes);
  const std::string_view body =
      envelope.substr(kNonceBytes, envelope.size() - kEnvelopeOverhead);
  std::string tag(envelope.substr(envelope.size() - kTagBytes));
  std::string out(body.size(), '\0');
  auto* pt = reinterpret_cast<unsigned char*>(out.data());
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  int len = 0;
  if (!ctx ||
      EVP_DecryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key.data(),
                         U(nonce)) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, kTagBytes,
                          tag.data()) != 1 ||
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, U(aad),
                        static_cast<int>(aad.size())) != 1 ||
      EVP_DecryptUpdate(ctx.get(), pt, &len, U(body),
                        static_cast<int>(body.size())) != 1 ||
      EVP_DecryptFinal_ex(ctx.get(), pt + len, &len) != 1) {
    Wipe(out.data(), out.size());
    return absl::UnauthenticatedError("authentication failed");
  }
  return out;
}

std::string WordsToBytes(std::span<const uint64_t> words) {
  std::string out;
  out.reserve(words.size() * 8);
  for (uint64_t w : words) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(w >> (8 * i)));
  }
  return out;
}

absl::StatusOr<std::vector<uint64_t>> BytesToWords(std::string_view bytes) {
  if (bytes.size() % 8 != 0) {
    return absl::InvalidArgumentError(
        fmt::format("{} bytes is not a whole number of words", bytes.size()));
  }
  std::vector<uint64_t> words(bytes.size() / 8);
  for (size_t i = 0; i < words.size(); ++i) {
    for (int b = 0; b < 8; ++b) {
      words[i] |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[8 * i + b])) << (8 * b);
    }
  }
  return words;
}

std::string HexBytes(std::string_view bytes) {
  std::string out;
  for (char c : bytes) out += fmt::format("{:02x}", static_cast<uint8_t>(c));
  return out;
}

void Wipe(void* p, size_t n) { OPENSSL_cleanse(p, n); }

}  // namespace blindsim
