#include "tempshift/stats.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <ostream>
#include <tuple>

#include "tempshift/common.hpp"

namespace tempshift {

FrequencyTable::FrequencyTable(std::shared_ptr<const Vocabulary> vocab,
                               std::vector<std::uint64_t> counts, std::uint64_t n_sentences)
    : vocab_(std::move(vocab)), counts_(std::move(counts)), n_sentences_(n_sentences) {}

std::uint64_t FrequencyTable::count(std::string_view token) const {
  if (!vocab_) return 0;
  auto id = vocab_->find(token);
  return id ? count(*id) : 0;
}

void FrequencyTable::merge(const FrequencyTable& other) {
  if (vocab_ != other.vocab_) throw Error("cannot merge frequency tables over different vocabularies");
  if (counts_.size() < other.counts_.size()) counts_.resize(other.counts_.size(), 0);
  for (std::size_t i = 0; i < other.counts_.size(); ++i) counts_[i] += other.counts_[i];
  n_sentences_ += other.n_sentences_;
}

std::uint64_t CoocTable::count(TokenId a, TokenId b) const {
  if (a == b || a >= rows_.size()) return 0;
  const auto& row = rows_[a];
  auto it = row.find(b);
  return it == row.end() ? 0 : it->second;
}

const CoocTable::Row& CoocTable::neighbors(TokenId a) const {
  static const Row empty;
  return a < rows_.size() ? rows_[a] : empty;
}

void CoocTable::bump(TokenId a, TokenId b, std::uint64_t by) {
  auto [it, inserted] = rows_[a].try_emplace(b, 0);
  it->second += by;
  if (inserted && a < b) ++n_pairs_;
}

void CoocTable::add_sentence(std::span<const TokenId> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      bump(ids[i], ids[j], 1);
      bump(ids[j], ids[i], 1);
    }
  }
}

void CoocTable::merge(const CoocTable& other) {
  if (rows_.size() < other.rows_.size()) rows_.resize(other.rows_.size());
  for (std::size_t a = 0; a < other.rows_.size(); ++a) {
    for (const auto& [b, c] : other.rows_[a]) bump(static_cast<TokenId>(a), b, c);
  }
}

std::uint64_t CorpusStats::cooc_count(std::string_view a, std::string_view b) const {
  auto ia = vocab().find(a);
  auto ib = vocab().find(b);
  return (ia && ib) ? cooc.count(*ia, *ib) : 0;
}

void CorpusStats::merge(const CorpusStats& other) {
  freq.merge(other.freq);
  cooc.merge(other.cooc);
}

CorpusStats count_range(const Snapshot& snapshot, std::size_t first, std::size_t last) {
  const std::size_t v = snapshot.vocab().size();
  std::vector<std::uint64_t> counts(v, 0);
  CoocTable cooc(v);
  std::vector<TokenId> uniq;
  last = std::min(last, snapshot.n_sentences());
  for (std::size_t i = first; i < last; ++i) {
    auto sent = snapshot.sentence(i);
    uniq.assign(sent.begin(), sent.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (TokenId id : uniq) ++counts[id];
    cooc.add_sentence(uniq);
  }
  return CorpusStats{FrequencyTable(snapshot.shared_vocab(), std::move(counts),
                                    last > first ? last - first : 0),
                     std::move(cooc)};
}

CorpusStats count(const Snapshot& snapshot, std::size_t partitions) {
  if (snapshot.empty()) throw Error("cannot count an empty snapshot");
  const std::size_t n = snapshot.n_sentences();
  partitions = std::clamp<std::size_t>(partitions, 1, n);
  if (partitions == 1) return count_range(snapshot, 0, n);

  std::vector<std::future<CorpusStats>> parts;
  const std::size_t chunk = (n + partitions - 1) / partitions;
  for (std::size_t first = 0; first < n; first += chunk) {
    parts.push_back(std::async(std::launch::async, [&snapshot, first, chunk, n] {
      return count_range(snapshot, first, std::min(n, first + chunk));
    }));
  }
  CorpusStats total = parts.front().get();
  for (std::size_t i = 1; i < parts.size(); ++i) total.merge(parts[i].get());
  return total;
}

std::optional<double> pmi(TokenId w, TokenId x, const CorpusStats& stats) {
  const std::uint64_t joint = stats.cooc.count(w, x);
  const std::uint64_t fw = stats.freq.count(w);
  const std::uint64_t fx = stats.freq.count(x);
  if (joint == 0 || fw == 0 || fx == 0) return std::nullopt;
  const double n = static_cast<double>(stats.freq.n_sentences());
  // log((c/N) / ((fw/N)(fx/N))) = log(c N / (fw fx))
  return std::log(static_cast<double>(joint) * n /
                  (static_cast<double>(fw) * static_cast<double>(fx)));
}

std::optional<double> pmi(std::string_view w, std::string_view x, const CorpusStats& stats) {
  auto iw = stats.vocab().find(w);
  auto ix = stats.vocab().find(x);
  if (!iw || !ix) return std::nullopt;
  return pmi(*iw, *ix, stats);
}

std::uint64_t pivot_score(std::string_view w, const FrequencyTable& freq1,
                          const FrequencyTable& freq2) {
  return std::min(freq1.count(w), freq2.count(w));
}

void write_frequency_tsv(std::ostream& out, const FrequencyTable& freq) {
  std::vector<TokenId> ids;
  for (TokenId id = 0; id < freq.counts().size(); ++id) {
    if (freq.count(id) > 0) ids.push_back(id);
  }
  const auto& vocab = freq.vocab();
  std::sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
    if (freq.count(a) != freq.count(b)) return freq.count(a) > freq.count(b);
    return vocab.token(a) < vocab.token(b);
  });
  for (TokenId id : ids) out << vocab.token(id) << '\t' << freq.count(id) << '\n';
}

void write_cooc_tsv(std::ostream& out, const CorpusStats& stats) {
  const auto& vocab = stats.vocab();
  std::vector<std::tuple<const std::string*, const std::string*, std::uint64_t>> rows;
  rows.reserve(stats.cooc.n_pairs());
  for (TokenId a = 0; a < stats.cooc.vocab_size(); ++a) {
    for (const auto& [b, c] : stats.cooc.neighbors(a)) {
      if (vocab.token(a) < vocab.token(b)) rows.emplace_back(&vocab.token(a), &vocab.token(b), c);
    }
  }
  std::sort(rows.begin(), rows.end(), [](const auto& l, const auto& r) {
    if (*std::get<0>(l) != *std::get<0>(r)) return *std::get<0>(l) < *std::get<0>(r);
    return *std::get<1>(l) < *std::get<1>(r);
  });
  for (const auto& [a, b, c] : rows) out << *a << '\t' << *b << '\t' << c << '\n';
}

}  // namespace tempshift
