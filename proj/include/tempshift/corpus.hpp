#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tempshift/tokenizer.hpp"

namespace tempshift {

using TokenId = std::uint32_t;

/// Bidirectional token <-> id map. Ids are dense and assigned in insertion order.
class Vocabulary {
 public:
  TokenId add(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> ids_;
};

/// A tokenized corpus slice taken at one timestamp. Sentences are grouped into
/// documents; preprocessing and splitting work at document granularity.
/// Immutable once built.
class Snapshot {
 public:
  Snapshot() = default;

  /// Builds a snapshot from documents given as lists of tokenized sentences.
  /// Empty sentences and documents without sentences are dropped.
  static Snapshot from_documents(std::string label, const std::vector<std::vector<Tokens>>& docs);

  const std::string& label() const noexcept { return label_; }
  std::size_t n_sentences() const noexcept { return sentences_.size(); }
  std::size_t n_documents() const noexcept { return doc_offsets_.empty() ? 0 : doc_offsets_.size() - 1; }
  bool empty() const noexcept { return sentences_.empty(); }

  const Vocabulary& vocab() const noexcept { return *vocab_; }
  std::shared_ptr<const Vocabulary> shared_vocab() const noexcept { return vocab_; }

  std::span<const TokenId> sentence(std::size_t i) const { return sentences_.at(i); }
  const std::vector<std::vector<TokenId>>& sentences() const noexcept { return sentences_; }
  Tokens sentence_tokens(std::size_t i) const;

  /// Sentence index range [first, last) of document d.
  std::pair<std::size_t, std::size_t> document_range(std::size_t d) const {
    return {doc_offsets_.at(d), doc_offsets_.at(d + 1)};
  }
  std::vector<Tokens> document(std::size_t d) const;
  std::size_t document_length(std::size_t d) const;

  /// New snapshot holding the listed documents in the given order, with a
  /// rebuilt vocabulary.
  Snapshot subset(std::span<const std::size_t> documents) const;

 private:
  std::string label_;
  std::shared_ptr<const Vocabulary> vocab_ = std::make_shared<Vocabulary>();
  std::vector<std::vector<TokenId>> sentences_;
  std::vector<std::size_t> doc_offsets_{0};
};

enum class InputFormat { Lines, Records };

InputFormat parse_input_format(std::string_view name);

/// Reads a corpus file. `Lines`: one document per line. `Records`: one JSON
/// object per line with a required string field "text" (a "timestamp" field
/// is accepted and ignored). Blank lines are skipped.
Snapshot load_snapshot(const std::filesystem::path& path, InputFormat format,
                       std::string timestamp_label);

/// Drops exact-duplicate documents (first occurrence kept) and documents with
/// fewer than min_words tokens.
Snapshot preprocess(const Snapshot& snapshot, std::size_t min_words = 10);

struct SplitSpec {
  double train_fraction = 0.7;
  double dev_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 123;

  void validate() const;
};

struct SplitResult {
  Snapshot train;
  Snapshot dev;
  Snapshot test;
};

/// Document counts per split by the largest-remainder method. Ties in the
/// remainder go to train, then dev.
std::array<std::size_t, 3> split_sizes(std::size_t n_documents, const SplitSpec& spec);

/// Seeded random partition of documents into train/dev/test. Documents keep
/// their original relative order inside each part.
SplitResult split(const Snapshot& snapshot, const SplitSpec& spec);

}  // namespace tempshift
