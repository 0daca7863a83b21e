#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tempshift/corpus.hpp"

namespace tempshift {

/// Sentence-occurrence counts: f(x) is the number of sentences containing x.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  FrequencyTable(std::shared_ptr<const Vocabulary> vocab, std::vector<std::uint64_t> counts,
                 std::uint64_t n_sentences);

  std::uint64_t count(TokenId id) const { return id < counts_.size() ? counts_[id] : 0; }
  std::uint64_t count(std::string_view token) const;
  std::uint64_t n_sentences() const noexcept { return n_sentences_; }
  const Vocabulary& vocab() const noexcept { return *vocab_; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  void merge(const FrequencyTable& other);

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t n_sentences_ = 0;
};

/// Symmetric sentence-window co-occurrence counts. Self pairs are not stored.
class CoocTable {
 public:
  using Row = std::unordered_map<TokenId, std::uint64_t>;

  CoocTable() = default;
  explicit CoocTable(std::size_t vocab_size) : rows_(vocab_size) {}

  std::uint64_t count(TokenId a, TokenId b) const;
  const Row& neighbors(TokenId a) const;
  std::size_t n_pairs() const noexcept { return n_pairs_; }
  std::size_t vocab_size() const noexcept { return rows_.size(); }

  void add_sentence(std::span<const TokenId> unique_sorted_ids);
  void merge(const CoocTable& other);

 private:
  void bump(TokenId a, TokenId b, std::uint64_t by);

  std::vector<Row> rows_;
  std::size_t n_pairs_ = 0;
};

/// Frequency and co-occurrence statistics of one snapshot.
struct CorpusStats {
  FrequencyTable freq;
  CoocTable cooc;

  const Vocabulary& vocab() const noexcept { return freq.vocab(); }
  std::uint64_t cooc_count(std::string_view a, std::string_view b) const;

  /// Associative, commutative merge of partition statistics over one vocabulary.
  void merge(const CorpusStats& other);
};

/// Counts sentences [first, last) of the snapshot.
CorpusStats count_range(const Snapshot& snapshot, std::size_t first, std::size_t last);

/// Counts the whole snapshot, optionally in parallel partitions. The result is
/// identical for every partition count.
CorpusStats count(const Snapshot& snapshot, std::size_t partitions = 1);

/// Natural-log PMI from sentence-level estimates. nullopt when the pair never
/// co-occurs or either marginal is zero.
std::optional<double> pmi(TokenId w, TokenId x, const CorpusStats& stats);
std::optional<double> pmi(std::string_view w, std::string_view x, const CorpusStats& stats);

/// min(f(w, C1), f(w, C2)).
std::uint64_t pivot_score(std::string_view w, const FrequencyTable& freq1,
                          const FrequencyTable& freq2);

/// `token<TAB>count`, ordered by count descending then token.
void write_frequency_tsv(std::ostream& out, const FrequencyTable& freq);

/// `tokenA<TAB>tokenB<TAB>count` with tokenA < tokenB, ordered lexicographically.
void write_cooc_tsv(std::ostream& out, const CorpusStats& stats);

}  // namespace tempshift
