#include "blindsim/session.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "fmt/format.h"

namespace blindsim {

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<char> bytes;
  bool closed = false;
};

class MemoryChannel : public Channel {
 public:
  MemoryChannel(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~MemoryChannel() override { Close(); }

  absl::Status Write(std::string_view bytes) override {
    std::lock_guard<std::mutex> lock(out_->mu);
    if (out_->closed) return absl::UnavailableError("channel closed");
    out_->bytes.insert(out_->bytes.end(), bytes.begin(), bytes.end());
    out_->cv.notify_all();
    return absl::OkStatus();
  }

  absl::StatusOr<std::string> Read(size_t n) override {
    std::unique_lock<std::mutex> lock(in_->mu);
    in_->cv.wait(lock, [&] { return in_->bytes.size() >= n || in_->closed; });
    if (in_->bytes.size() < n) return absl::UnavailableError("channel closed");
    std::string out(in_->bytes.begin(), in_->bytes.begin() + n);
    in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + n);
    return out;
  }

  void Close() override {
    for (Pipe* p : {in_.get(), out_.get()}) {
      std::lock_guard<std::mutex> lock(p->mu);
      p->closed = true;
      p->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
};

class SocketChannel : public Channel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {}
  ~SocketChannel() override { ::close(fd_); }

  absl::Status Write(std::string_view bytes) override {
    while (!bytes.empty()) {
      const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return absl::UnavailableError(fmt::format("send: {}", std::strerror(errno)));
      }
      bytes.remove_prefix(static_cast<size_t>(n));
    }
    return absl::OkStatus();
  }

  absl::StatusOr<std::string> Read(size_t n) override {
    std::string out(n, '\0');
    size_t got = 0;
    while (got < n) {
      const ssize_t r = ::recv(fd_, out.data() + got, n - got, 0);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) return absl::UnavailableError("channel closed");
      got += static_cast<size_t>(r);
    }
    return out;
  }

  void Close() override { ::shutdown(fd_, SHUT_RDWR); }

 private:
  int fd_;
};

absl::Status ErrorFrom(const ErrorReply& e) {
  return absl::AbortedError(fmt::format("server error: {}", e.message));
}

absl::Status Unexpected(const Message& m) {
  if (const auto* e = std::get_if<ErrorReply>(&m)) return ErrorFrom(*e);
  return absl::InvalidArgumentError("unexpected reply type");
}

ErrorReply ErrorOf(const absl::Status& st) {
  return ErrorReply{std::string(st.message())};
}

KeyBytes DemoRootKey(uint64_t seed) {
  return Sha256(fmt::format("root key {}", seed));
}

}  // namespace

absl::Status SendMessage(Channel& ch, const Message& m) {
  return ch.Write(EncodeFrame(m));
}

absl::StatusOr<Message> ReceiveMessage(Channel& ch) {
  auto header = ch.Read(kFrameHeaderBytes);
  if (!header.ok()) return header.status();
  auto len = FrameBodyLength(*header);
  if (!len.ok()) return len.status();
  auto body = ch.Read(*len);
  if (!body.ok()) return body.status();
  return ParseFrame(*header + *body);
}

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> MemoryChannelPair() {
  auto a = std::make_shared<Pipe>();
  auto b = std::make_shared<Pipe>();
  return {std::make_unique<MemoryChannel>(a, b), std::make_unique<MemoryChannel>(b, a)};
}

absl::StatusOr<std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>>>
SocketChannelPair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    return absl::InternalError(fmt::format("socketpair: {}", std::strerror(errno)));
  }
  std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> out;
  out.first = std::make_unique<SocketChannel>(fds[0]);
  out.second = std::make_unique<SocketChannel>(fds[1]);
  return out;
}

absl::StatusOr<std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>>>
LoopbackTcpChannelPair() {
  auto fail = [](const char* what, std::initializer_list<int> fds) {
    const std::string msg = fmt::format("{}: {}", what, std::strerror(errno));
    for (int fd : fds) {
      if (fd >= 0) ::close(fd);
    }
    return absl::UnavailableError(msg);
  };
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) return fail("socket", {});
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof(addr);
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listener, 1) != 0 ||
      ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    return fail("listen", {listener});
  }
  const int client = ::socket(AF_INET, SOCK_STREAM, 0);
  if (client < 0) return fail("socket", {listener});
  if (::connect(client, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    return fail("connect", {listener, client});
  }
  const int server = ::accept(listener, nullptr, nullptr);
  ::close(listener);
  if (server < 0) return fail("accept", {client});
  const int one = 1;
  ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  ::setsockopt(server, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> out;
  out.first = std::make_unique<SocketChannel>(client);
  out.second = std::make_unique<SocketChannel>(server);
  return out;
}

HsmServer::HsmServer(ServerConfig cfg)
    : cfg_(std::move(cfg)),
      engine_(cfg_.engine_factory ? cfg_.engine_factory(cfg_.root_key)
                                  : std::make_unique<Engine>(cfg_.root_key)),
      state_(cfg_.machine.MakeState()) {}

Message HsmServer::Handle(const Message& request) {
  if (const auto* m = std::get_if<ClientHello>(&request)) return HandleHello(*m);
  if (!handshake_done_) return ErrorReply{"handshake required"};
  if (const auto* m = std::get_if<ImportRequest>(&request)) return HandleImport(*m);
  if (const auto* m = std::get_if<ComputeRequest>(&request)) return HandleCompute(*m);
  if (const auto* m = std::get_if<ExportRequest>(&request)) return HandleExport(*m);
  return ErrorReply{"unexpected request"};
}

Message HsmServer::HandleHello(const ClientHello& hello) {
  if (handshake_done_) return ErrorReply{"handshake already done"};
  auto result = HsmHandshake(cfg_.device, cfg_.claims, cfg_.seed, hello);
  if (!result.ok()) return ErrorOf(result.status());
  // The HSM hands the key to the engine over its trusted channel.
  engine_->InstallKey(result->key);
  handshake_done_ = true;
  return result->hello;
}

Message HsmServer::HandleImport(const ImportRequest& req) {
  auto st = engine_->Import(state_, cfg_.machine, req.dst, req.ciphertext, &trace_);
  if (!st.ok()) return ErrorOf(st);
  return Ack{};
}

Message HsmServer::HandleCompute(const ComputeRequest& req) {
  if (auto st = LoadImage(req.image, state_); !st.ok()) return ErrorOf(st);
  if (req.entry >= state_.memory.size()) return ErrorReply{"entry point outside memory"};
  state_.pc = req.entry;
  state_.status = MachineStatus::Running();
  RunResult run = Run(std::move(state_), cfg_.machine, cfg_.max_steps);
  state_ = std::move(run.state);
  trace_.insert(trace_.end(), run.trace.begin(), run.trace.end());
  return ComputeReply{run.outcome, run.steps};
}

Message HsmServer::HandleExport(const ExportRequest& req) {
  auto ct = engine_->Export(state_, req.src, req.n, &trace_);
  if (!ct.ok()) return ErrorOf(ct.status());
  return ExportReply{std::move(*ct)};
}

absl::Status HsmServer::Serve(Channel& ch) {
  while (true) {
    auto request = ReceiveMessage(ch);
    if (!request.ok()) {
      if (absl::IsUnavailable(request.status())) return absl::OkStatus();
      SendMessage(ch, ErrorOf(request.status())).IgnoreError();
      return request.status();
    }
    if (auto st = SendMessage(ch, Handle(*request)); !st.ok()) {
      return absl::IsUnavailable(st) ? absl::OkStatus() : st;
    }
  }
}

Client::Client(const PublicKey& device_public, uint64_t seed, Channel& ch)
    : handshake_(device_public, seed), ch_(ch) {}

absl::StatusOr<Message> Client::Roundtrip(const Message& m) {
  if (auto st = SendMessage(ch_, m); !st.ok()) return st;
  return ReceiveMessage(ch_);
}

absl::Status Client::Handshake() {
  auto reply = Roundtrip(handshake_.hello());
  if (!reply.ok()) return reply.status();
  const auto* hello = std::get_if<HsmHello>(&*reply);
  if (hello == nullptr) return Unexpected(*reply);
  auto key = handshake_.Finish(*hello);
  if (!key.ok()) return key.status();
  key_.emplace(*key);
  return absl::OkStatus();
}

std::optional<KeyId> Client::key_id() const {
  if (!key_) return std::nullopt;
  return key_->key_id();
}

absl::StatusOr<std::string> Client::Encrypt(std::span<const uint64_t> words) {
  if (!key_) return absl::FailedPreconditionError("no session key");
  std::string plaintext = WordsToBytes(words);
  auto ct = AeadSeal(key_->bytes(), MakeNonce('C', key_->key_id(), counter_++),
                     kDataLabel, plaintext);
  Wipe(plaintext.data(), plaintext.size());
  return ct;
}

absl::StatusOr<std::vector<uint64_t>> Client::Decrypt(std::string_view envelope) const {
  if (!key_) return absl::FailedPreconditionError("no session key");
  auto plaintext = AeadOpen(key_->bytes(), kDataLabel, envelope);
  if (!plaintext.ok()) return plaintext.status();
  return BytesToWords(*plaintext);
}

absl::Status Client::SendImport(uint64_t dst, std::string ciphertext) {
  auto reply = Roundtrip(ImportRequest{dst, std::move(ciphertext)});
  if (!reply.ok()) return reply.status();
  if (!std::holds_alternative<Ack>(*reply)) return Unexpected(*reply);
  return absl::OkStatus();
}

absl::Status Client::Import(uint64_t dst, std::span<const uint64_t> words) {
  auto ct = Encrypt(words);
  if (!ct.ok()) return ct.status();
  return SendImport(dst, std::move(*ct));
}

absl::StatusOr<ComputeReply> Client::Compute(const ProgramImage& image) {
  auto reply = Roundtrip(ComputeRequest{image.entry_pc, image});
  if (!reply.ok()) return reply.status();
  const auto* r = std::get_if<ComputeReply>(&*reply);
  if (r == nullptr) return Unexpected(*reply);
  return *r;
}

absl::StatusOr<std::string> Client::ExportCiphertext(uint64_t src, uint64_t n) {
  auto reply = Roundtrip(ExportRequest{src, n});
  if (!reply.ok()) return reply.status();
  auto* r = std::get_if<ExportReply>(&*reply);
  if (r == nullptr) return Unexpected(*reply);
  return std::move(r->ciphertext);
}

absl::StatusOr<std::vector<uint64_t>> Client::Export(uint64_t src, uint64_t n) {
  auto ct = ExportCiphertext(src, n);
  if (!ct.ok()) return ct.status();
  return Decrypt(*ct);
}

absl::StatusOr<DemoResult> RunDemo(const DemoOptions& opts) {
  std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> ends;
  if (opts.transport == Transport::kSocket || opts.transport == Transport::kTcp) {
    auto pair = opts.transport == Transport::kSocket ? SocketChannelPair()
                                                      : LoopbackTcpChannelPair();
    if (!pair.ok()) return pair.status();
    ends = std::move(*pair);
  } else {
    ends = MemoryChannelPair();
  }
  Channel& client_end = *ends.first;
  Channel& server_end = *ends.second;

  ProgramImage program = opts.program;
  const uint64_t n = opts.plaintext.size();
  if (auto st = program.SetWord(kDemoBaseSlot, TaggedWord::Clear(opts.base)); !st.ok()) {
    return absl::InvalidArgumentError("program has no data-base slot at word 9");
  }
  if (auto st = program.SetWord(kDemoCountSlot, TaggedWord::Clear(n)); !st.ok()) {
    return absl::InvalidArgumentError("program has no word-count slot at word 10");
  }

  ServerConfig sc;
  sc.machine = opts.machine;
  sc.device = DeviceKey::FromSeed(opts.seed);
  sc.claims.policy_mode = opts.machine.mode;
  sc.root_key = DemoRootKey(opts.seed);
  sc.seed = opts.seed;
  sc.max_steps = opts.max_steps;
  sc.engine_factory = opts.engine_factory;
  HsmServer server(std::move(sc));
  const PublicKey device_public = DeviceKey::FromSeed(opts.seed).public_key();

  absl::Status server_status;
  std::thread server_thread([&] {
    server_status = server.Serve(server_end);
    server_end.Close();
  });

  DemoResult result;
  auto client_side = [&]() -> absl::Status {
    Client client(device_public, opts.seed + 1, client_end);
    if (auto st = client.Handshake(); !st.ok()) return st;
    result.client_key.emplace(*client.session_key());
    auto ct = client.Encrypt(opts.plaintext);
    if (!ct.ok()) return ct.status();
    if (opts.tamper_ciphertext && !ct->empty()) (*ct)[ct->size() / 2] ^= 0x01;
    if (auto st = client.SendImport(opts.base, std::move(*ct)); !st.ok()) return st;
    auto compute = client.Compute(program);
    if (!compute.ok()) return compute.status();
    result.compute = *compute;
    if (compute->outcome != RunOutcome::kHalted) {
      return absl::FailedPreconditionError(fmt::format(
          "program ended with {} after {} steps",
          RunOutcomeName(compute->outcome), compute->steps));
    }
    auto exported = client.ExportCiphertext(opts.base, n);
    if (!exported.ok()) return exported.status();
    result.exported.push_back(*exported);
    auto output = client.Decrypt(*exported);
    if (!output.ok()) return output.status();
    result.output = std::move(*output);
    return absl::OkStatus();
  };
  const absl::Status client_status = client_side();
  client_end.Close();
  server_thread.join();

  if (!client_status.ok()) return client_status;
  if (!server_status.ok()) return server_status;
  result.engine_key_id = server.engine().key_id();
  result.server_trace = server.trace();
  result.server_state = server.state();
  return result;
}

absl::StatusOr<DualResult> RunDualDemo(const DemoOptions& opts,
                                       std::vector<uint64_t> second_plaintext) {
  if (second_plaintext.size() != opts.plaintext.size()) {
    return absl::InvalidArgumentError("dual plaintexts must have equal length");
  }
  DualResult dual;
  auto first = RunDemo(opts);
  if (!first.ok()) return first.status();
  DemoOptions second_opts = opts;
  second_opts.plaintext = std::move(second_plaintext);
  auto second = RunDemo(second_opts);
  if (!second.ok()) return second.status();
  dual.first = std::move(*first);
  dual.second = std::move(*second);
  dual.traces_identical =
      FormatTrace(dual.first.server_trace) == FormatTrace(dual.second.server_trace);
  dual.snapshots_identical = FormatSnapshot(Redact(dual.first.server_state)) ==
                             FormatSnapshot(Redact(dual.second.server_state));
  return dual;
}

}  // namespace blindsim
