#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tempshift/common.hpp"
#include "tempshift/corpus.hpp"

namespace tempshift {

struct OracleInfo {
  std::string name;
  bool vocabulary_known = false;
  /// Longest prefix + candidate the oracle accepts, in tokens.
  std::optional<std::size_t> max_context;
};

/// Deterministic token-sequence scorer used by template search.
class LikelihoodOracle {
 public:
  virtual ~LikelihoodOracle() = default;

  virtual OracleInfo info() const = 0;

  /// One log-probability per candidate: the sum over the candidate's tokens,
  /// each conditioned on the prefix plus the candidate tokens before it.
  /// An empty candidate scores 0. Values are <= 0.
  virtual std::vector<double> logprob(std::span<const std::string> prefix,
                                      std::span<const Tokens> candidates) const = 0;

  /// Known vocabulary; empty when info().vocabulary_known is false.
  virtual std::vector<std::string> vocabulary() const { return {}; }
};

/// Add-alpha n-gram language model with backoff to shorter histories when a
/// history was never observed. Sentences are padded on the left with n-1
/// begin markers. Immutable after training; concurrent queries are safe.
class NGramLM final : public LikelihoodOracle {
 public:
  static constexpr const char* kUnknown = "<unk>";

  NGramLM(const std::vector<Tokens>& sentences, std::size_t order, double alpha,
          const std::vector<std::string>& extra_vocabulary = {});

  OracleInfo info() const override;
  std::vector<double> logprob(std::span<const std::string> prefix,
                              std::span<const Tokens> candidates) const override;
  std::vector<std::string> vocabulary() const override;

  std::size_t order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t vocabulary_size() const noexcept { return vocab_.size(); }

  /// log P(token | history), history given as tokens (only the last n-1 are used).
  double conditional(std::span<const std::string> history, const std::string& token) const;

 private:
  struct Entry {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> next;
  };

  TokenId id_of(const std::string& token) const;
  const Entry& resolve(std::span<const TokenId> history) const;
  double step(const Entry& e, TokenId x) const;

  std::size_t order_;
  double alpha_;
  Vocabulary vocab_;
  TokenId unk_;
  // tables_[h] maps a packed history of length h to its continuation counts.
  std::vector<std::unordered_map<std::string, Entry>> tables_;
};

/// Trains on the sentences of the given snapshots; the vocabulary is the union
/// of the snapshot vocabularies plus <unk>.
NGramLM train_ngram(std::span<const Snapshot* const> snapshots, std::size_t order = 3,
                    double alpha = 0.1);

/// Failure reported by or about an external oracle. request_id is 0 for
/// failures outside a request (handshake, spawn).
class OracleError : public Error {
 public:
  OracleError(std::uint64_t request_id, const std::string& what)
      : Error(request_id ? "oracle request " + std::to_string(request_id) + ": " + what
                         : "oracle: " + what),
        request_id_(request_id) {}
  std::uint64_t request_id() const noexcept { return request_id_; }

 private:
  std::uint64_t request_id_;
};

/// Newline-framed bidirectional byte stream.
class LineChannel {
 public:
  enum class Status { Ok, Eof, Timeout };
  struct ReadResult {
    Status status;
    std::string line;
  };
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  virtual ReadResult read_line(std::chrono::milliseconds timeout) = 0;
};

/// Channel over a pair of file descriptors (pipes or a connected socket).
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd);
  ~FdChannel() override;
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  void write_line(const std::string& line) override;
  ReadResult read_line(std::chrono::milliseconds timeout) override;

 protected:
  void close_write();
  void close_all();

 private:
  int read_fd_;
  int write_fd_;
  std::string buffer_;
};

/// Spawns a child process and talks to it over its stdin/stdout.
class ProcessChannel final : public FdChannel {
 public:
  static std::unique_ptr<ProcessChannel> spawn(const std::vector<std::string>& argv);
  ~ProcessChannel() override;

 private:
  ProcessChannel(int read_fd, int write_fd, int pid) : FdChannel(read_fd, write_fd), pid_(pid) {}
  int pid_;
};

/// Connects to a Unix domain socket.
std::unique_ptr<FdChannel> connect_unix_socket(const std::filesystem::path& path);

/// Client for an oracle served over the line protocol:
///   server handshake  {"proto": 1, "name": ..., "max_context": int|null}
///   request           {"id": n, "op": "score", "prefix": [...], "candidates": [[...], ...]}
///   response          {"id": n, "logprobs": [...]}  or  {"id": n, "error": "..."}
/// Writes are serialized; responses are matched to callers by id, so callers
/// may query concurrently.
class ExternalOracle final : public LikelihoodOracle {
 public:
  struct Options {
    std::chrono::milliseconds timeout{30000};
    /// Resends of the same request (same id) after a timeout.
    int max_retries = 0;
  };

  explicit ExternalOracle(std::unique_ptr<LineChannel> channel);
  ExternalOracle(std::unique_ptr<LineChannel> channel, Options options);

  OracleInfo info() const override { return info_; }
  std::vector<double> logprob(std::span<const std::string> prefix,
                              std::span<const Tokens> candidates) const override;

 private:
  struct Reply {
    std::size_t line_no;
    std::optional<std::vector<double>> logprobs;
    std::string error;
    std::string raw;
  };

  Reply await(std::uint64_t id, const std::string& request) const;
  void ingest(const std::string& line, std::uint64_t waiting_for) const;

  std::unique_ptr<LineChannel> channel_;
  Options options_;
  OracleInfo info_;

  mutable std::atomic<std::uint64_t> next_id_{1};
  mutable std::mutex write_mu_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable bool reading_ = false;
  mutable bool dead_ = false;
  mutable std::string dead_reason_;
  mutable std::size_t lines_read_ = 0;
  mutable std::map<std::uint64_t, Reply> ready_;
  mutable std::set<std::uint64_t> outstanding_;
};

}  // namespace tempshift
