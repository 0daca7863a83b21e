#include "tempshift/oracle.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

extern char** environ;

namespace tempshift {

// ---------------------------------------------------------------------------
// NGramLM

namespace {

constexpr TokenId kBegin = 0xFFFFFFFFu;

std::string pack(std::span<const TokenId> ids) {
  std::string key(ids.size() * sizeof(TokenId), '\0');
  if (!ids.empty()) std::memcpy(key.data(), ids.data(), key.size());
  return key;
}

}  // namespace

NGramLM::NGramLM(const std::vector<Tokens>& sentences, std::size_t order, double alpha,
                 const std::vector<std::string>& extra_vocabulary)
    : order_(order), alpha_(alpha) {
  if (order < 1) throw ConfigError("n-gram order must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("smoothing alpha must be > 0");
  for (const auto& t : extra_vocabulary) vocab_.add(t);
  std::size_t n_tokens = 0;
  for (const auto& s : sentences) {
    for (const auto& t : s) vocab_.add(t);
    n_tokens += s.size();
  }
  if (n_tokens == 0) throw Error("cannot train an n-gram model on an empty corpus");
  unk_ = vocab_.add(kUnknown);

  tables_.resize(order_);
  std::vector<TokenId> padded;
  for (const auto& s : sentences) {
    padded.assign(order_ - 1, kBegin);
    for (const auto& t : s) padded.push_back(*vocab_.find(t));
    for (std::size_t i = order_ - 1; i < padded.size(); ++i) {
      const TokenId x = padded[i];
      for (std::size_t h = 0; h < order_; ++h) {
        std::span<const TokenId> hist(padded.data() + i - h, h);
        Entry& e = tables_[h][pack(hist)];
        ++e.total;
        ++e.next[x];
      }
    }
  }
}

OracleInfo NGramLM::info() const {
  return {"ngram(order=" + std::to_string(order_) + ",alpha=" + format_double(alpha_) + ")", true,
          std::nullopt};
}

std::vector<std::string> NGramLM::vocabulary() const { return vocab_.tokens(); }

TokenId NGramLM::id_of(const std::string& token) const {
  auto id = vocab_.find(token);
  return id ? *id : unk_;
}

const NGramLM::Entry& NGramLM::resolve(std::span<const TokenId> history) const {
  for (std::size_t h = std::min(history.size(), order_ - 1); h > 0; --h) {
    const auto& table = tables_[h];
    auto it = table.find(pack(history.subspan(history.size() - h)));
    if (it != table.end() && it->second.total > 0) return it->second;
  }
  return tables_[0].at(std::string());
}

double NGramLM::step(const Entry& e, TokenId x) const {
  auto it = e.next.find(x);
  const double c = it == e.next.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((c + alpha_) /
                  (static_cast<double>(e.total) + alpha_ * static_cast<double>(vocab_.size())));
}

double NGramLM::conditional(std::span<const std::string> history, const std::string& token) const {
  std::vector<TokenId> ids(order_ - 1, kBegin);
  for (const auto& t : history) ids.push_back(id_of(t));
  return step(resolve(ids), id_of(token));
}

std::vector<double> NGramLM::logprob(std::span<const std::string> prefix,
                                     std::span<const Tokens> candidates) const {
  if (candidates.empty()) throw Error("logprob: empty candidate list");
  const std::size_t keep = order_ - 1;
  std::vector<TokenId> ctx(keep, kBegin);
  const std::size_t from = prefix.size() > keep ? prefix.size() - keep : 0;
  for (std::size_t i = from; i < prefix.size(); ++i) ctx.push_back(id_of(prefix[i]));
  const Entry& base = resolve(ctx);

  std::vector<double> out;
  out.reserve(candidates.size());
  std::vector<TokenId> local;
  for (const auto& cand : candidates) {
    double total = 0.0;
    if (!cand.empty()) {
      total = step(base, id_of(cand[0]));
      if (cand.size() > 1) {
        local = ctx;
        for (std::size_t j = 1; j < cand.size(); ++j) {
          local.push_back(id_of(cand[j - 1]));
          total += step(resolve(local), id_of(cand[j]));
        }
      }
    }
    out.push_back(total);
  }
  return out;
}

NGramLM train_ngram(std::span<const Snapshot* const> snapshots, std::size_t order, double alpha) {
  std::vector<Tokens> sentences;
  std::vector<std::string> vocab;
  for (const Snapshot* s : snapshots) {
    for (std::size_t i = 0; i < s->n_sentences(); ++i) sentences.push_back(s->sentence_tokens(i));
    vocab.insert(vocab.end(), s->vocab().tokens().begin(), s->vocab().tokens().end());
  }
  return NGramLM(sentences, order, alpha, vocab);
}

// ---------------------------------------------------------------------------
// Channels

FdChannel::FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

FdChannel::~FdChannel() { close_all(); }

void FdChannel::close_write() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (write_fd_ == read_fd_ && write_fd_ >= 0) ::shutdown(write_fd_, SHUT_WR);
  write_fd_ = -1;
}

void FdChannel::close_all() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
  read_fd_ = write_fd_ = -1;
}

void FdChannel::write_line(const std::string& line) {
  if (write_fd_ < 0) throw Error("channel closed for writing");
  std::string data = line;
  data.push_back('\n');
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(write_fd_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("write to peer failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

LineChannel::ReadResult FdChannel::read_line(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return {Status::Ok, std::move(line)};
    }
    if (read_fd_ < 0) return {Status::Eof, {}};
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return {Status::Timeout, {}};
    pollfd pfd{read_fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) return {Status::Timeout, {}};
    char chunk[4096];
    ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("read from peer failed: ") + std::strerror(errno));
    }
    if (n == 0) return {Status::Eof, {}};
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::unique_ptr<ProcessChannel> ProcessChannel::spawn(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ConfigError("oracle command is empty");
  // A dead peer must surface as EPIPE, not terminate the process.
  ::signal(SIGPIPE, SIG_IGN);
  int to_child[2], from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw Error("pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error("pipe failed");
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  pid_t pid = 0;
  int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    throw OracleError(0, "cannot start '" + argv[0] + "': " + std::strerror(rc));
  }
  return std::unique_ptr<ProcessChannel>(new ProcessChannel(from_child[0], to_child[1], pid));
}

ProcessChannel::~ProcessChannel() {
  close_write();
  int status = 0;
  for (int i = 0; i < 100; ++i) {
    if (::waitpid(pid_, &status, WNOHANG) != 0) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ::kill(pid_, SIGTERM);
  ::waitpid(pid_, &status, 0);
}

std::unique_ptr<FdChannel> connect_unix_socket(const std::filesystem::path& path) {
  ::signal(SIGPIPE, SIG_IGN);
  int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw OracleError(0, "socket failed");
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  const std::string p = path.string();
  if (p.size() >= sizeof(addr.sun_path)) {
    ::close(fd);
    throw ConfigError("socket path too long: " + p);
  }
  std::memcpy(addr.sun_path, p.c_str(), p.size() + 1);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    int err = errno;
    ::close(fd);
    throw OracleError(0, "cannot connect to " + p + ": " + std::strerror(err));
  }
  return std::make_unique<FdChannel>(fd, fd);
}

// ---------------------------------------------------------------------------
// ExternalOracle

ExternalOracle::ExternalOracle(std::unique_ptr<LineChannel> channel)
    : ExternalOracle(std::move(channel), Options{}) {}

ExternalOracle::ExternalOracle(std::unique_ptr<LineChannel> channel, Options options)
    : channel_(std::move(channel)), options_(options) {
  auto r = channel_->read_line(options_.timeout);
  if (r.status == LineChannel::Status::Timeout) throw OracleError(0, "timeout waiting for handshake");
  if (r.status == LineChannel::Status::Eof) throw OracleError(0, "peer exited before handshake");
  lines_read_ = 1;
  nlohmann::json hs;
  try {
    hs = nlohmann::json::parse(r.line);
  } catch (const nlohmann::json::exception&) {
    throw OracleError(0, "malformed handshake at line 1: " + r.line);
  }
  if (!hs.is_object() || !hs.contains("proto") || hs["proto"] != 1) {
    throw OracleError(0, "unsupported handshake at line 1: " + r.line);
  }
  info_.name = hs.value("name", std::string("external"));
  info_.vocabulary_known = false;
  if (hs.contains("max_context") && !hs["max_context"].is_null()) {
    if (!hs["max_context"].is_number_integer() || hs["max_context"].get<long long>() < 0) {
      throw OracleError(0, "handshake max_context must be a non-negative integer or null");
    }
    info_.max_context = hs["max_context"].get<std::size_t>();
  }
}

void ExternalOracle::ingest(const std::string& line, std::uint64_t waiting_for) const {
  const std::size_t line_no = lines_read_;
  nlohmann::json rec;
  try {
    rec = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    rec = nullptr;
  }
  if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_number_unsigned()) {
    dead_ = true;
    dead_reason_ = "malformed response at line " + std::to_string(line_no) + ": " + line;
    throw OracleError(waiting_for, dead_reason_);
  }
  const auto id = rec["id"].get<std::uint64_t>();
  Reply reply{line_no, std::nullopt, {}, line};
  if (rec.contains("error")) {
    reply.error = rec["error"].is_string() ? rec["error"].get<std::string>() : rec["error"].dump();
  } else if (rec.contains("logprobs") && rec["logprobs"].is_array()) {
    std::vector<double> values;
    for (const auto& v : rec["logprobs"]) {
      if (!v.is_number()) {
        reply.error = "malformed response at line " + std::to_string(line_no) + ": non-numeric logprob";
        break;
      }
      values.push_back(v.get<double>());
    }
    if (reply.error.empty()) reply.logprobs = std::move(values);
  } else {
    reply.error = "malformed response at line " + std::to_string(line_no) + ": " + line;
  }
  // Late duplicates of an already answered (retried) request are dropped.
  if (outstanding_.count(id)) ready_.insert_or_assign(id, std::move(reply));
}

ExternalOracle::Reply ExternalOracle::await(std::uint64_t id, const std::string& request) const {
  int attempts = 0;
  auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  std::unique_lock lk(mu_);
  while (true) {
    if (auto it = ready_.find(id); it != ready_.end()) {
      Reply r = std::move(it->second);
      ready_.erase(it);
      outstanding_.erase(id);
      return r;
    }
    if (dead_) {
      outstanding_.erase(id);
      throw OracleError(id, dead_reason_);
    }
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      if (attempts < options_.max_retries) {
        ++attempts;
        lk.unlock();
        {
          std::lock_guard w(write_mu_);
          channel_->write_line(request);
        }
        lk.lock();
        deadline = std::chrono::steady_clock::now() + options_.timeout;
        continue;
      }
      outstanding_.erase(id);
      throw OracleError(id, "timeout after " + std::to_string(options_.timeout.count()) + " ms");
    }
    if (reading_) {
      cv_.wait_until(lk, deadline);
      continue;
    }
    reading_ = true;
    lk.unlock();
    LineChannel::ReadResult r;
    try {
      r = channel_->read_line(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now));
    } catch (...) {
      lk.lock();
      reading_ = false;
      dead_ = true;
      dead_reason_ = "read failed";
      cv_.notify_all();
      throw;
    }
    lk.lock();
    reading_ = false;
    if (r.status == LineChannel::Status::Ok) {
      ++lines_read_;
      try {
        ingest(r.line, id);
      } catch (...) {
        cv_.notify_all();
        throw;
      }
    } else if (r.status == LineChannel::Status::Eof) {
      dead_ = true;
      dead_reason_ = "peer exited";
    }
    cv_.notify_all();
  }
}

std::vector<double> ExternalOracle::logprob(std::span<const std::string> prefix,
                                            std::span<const Tokens> candidates) const {
  if (candidates.empty()) throw Error("logprob: empty candidate list");
  const std::uint64_t id = next_id_.fetch_add(1);
  if (info_.max_context) {
    std::size_t longest = 0;
    for (const auto& c : candidates) longest = std::max(longest, c.size());
    if (prefix.size() + longest > *info_.max_context) {
      throw OracleError(id, "context overflow: " + std::to_string(prefix.size() + longest) +
                                " tokens exceed max_context " + std::to_string(*info_.max_context));
    }
  }
  nlohmann::json req = {{"id", id},
                        {"op", "score"},
                        {"prefix", std::vector<std::string>(prefix.begin(), prefix.end())},
                        {"candidates", std::vector<Tokens>(candidates.begin(), candidates.end())}};
  const std::string line = req.dump();
  {
    std::lock_guard lk(mu_);
    outstanding_.insert(id);
  }
  {
    std::lock_guard w(write_mu_);
    try {
      channel_->write_line(line);
    } catch (const OracleError&) {
      throw;
    } catch (const Error& e) {
      throw OracleError(id, e.what());
    }
  }
  Reply reply = await(id, line);
  const std::string at = "line " + std::to_string(reply.line_no) + ": ";
  if (!reply.error.empty()) {
    if (reply.error.rfind("malformed", 0) == 0) throw OracleError(id, reply.error);
    throw OracleError(id, at + "peer error: " + reply.error);
  }
  auto& values = *reply.logprobs;
  if (values.size() != candidates.size()) {
    throw OracleError(id, at + "expected " + std::to_string(candidates.size()) + " logprobs, got " +
                              std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v) || v > 0.0) {
      throw OracleError(id, at + "logprob out of range: " + format_double(v));
    }
  }
  return values;
}

}  // namespace tempshift
