#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tempshift/corpus.hpp"

namespace tempshift {

using Vector = std::vector<double>;

/// One contextual embedding of one occurrence of a word (subtokens already averaged).
struct ContextualRecord {
  std::string token;
  std::string snapshot_label;
  Vector vector;
};

/// Per-word averaged embeddings of one snapshot. Words never seen are
/// reported as the zero vector with count 0.
class EmbeddingTable {
 public:
  struct Entry {
    Vector mean;
    std::uint64_t count = 0;
    bool operator==(const Entry&) const = default;
  };

  EmbeddingTable() = default;
  EmbeddingTable(std::string snapshot_label, std::size_t dimension)
      : label_(std::move(snapshot_label)), dim_(dimension), zero_(dimension, 0.0) {}

  const std::string& label() const noexcept { return label_; }
  std::size_t dimension() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::string_view token) const { return entries_.find(token) != entries_.end(); }

  /// Stored mean, or an all-zero vector of the table's dimension.
  std::span<const double> lookup(std::string_view token) const;
  std::uint64_t count(std::string_view token) const;

  void set(std::string token, Vector mean, std::uint64_t count);
  const std::map<std::string, Entry, std::less<>>& entries() const noexcept { return entries_; }

  bool operator==(const EmbeddingTable&) const = default;

 private:
  std::string label_;
  std::size_t dim_ = 0;
  std::map<std::string, Entry, std::less<>> entries_;
  Vector zero_;
};

/// Per-token mean of the records (compensated summation). All records must
/// carry `snapshot_label` and share one dimension. When `dimension` is 0 it
/// is taken from the first record.
EmbeddingTable average(std::span<const ContextualRecord> records, const std::string& snapshot_label,
                       std::size_t dimension = 0);

/// Cosine similarity; 0 when either vector has zero norm. An empty span is
/// treated as a zero vector of any dimension.
double cosine(std::span<const double> x, std::span<const double> y);

struct RecordFile {
  std::string snapshot_label;
  std::size_t dimension = 0;
  std::vector<ContextualRecord> records;
};

/// Reads the embedding exchange format (per-occurrence or averaged).
RecordFile load_records(const std::filesystem::path& path);

/// load_records followed by average(). Each row counts as one occurrence.
EmbeddingTable load_table(const std::filesystem::path& path);

/// Writes one row per token in lexicographic order, 9 significant digits.
void save_table(const EmbeddingTable& table, const std::filesystem::path& path);
void save_records(const RecordFile& file, const std::filesystem::path& path);

/// Seeded uniform reservoir sample (at most `cap` per token) of the sentence
/// indices in which each requested token occurs. Indices come back sorted.
/// This is the occurrence plan an embedding extractor follows.
std::map<std::string, std::vector<std::size_t>> sample_occurrences(
    const Snapshot& snapshot, std::span<const std::string> tokens, std::size_t cap = 1000,
    std::uint64_t seed = 123);

}  // namespace tempshift
