#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tempshift/embeddings.hpp"
#include "tempshift/stats.hpp"

namespace tempshift {

enum class Method { Freq, Div, Cont };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct Anchor {
  std::string token;
  double pmi = 0.0;
  bool operator==(const Anchor&) const = default;
};

/// A pivot together with its top-PMI anchors in each snapshot. Both lists are
/// sorted by PMI descending, ties lexicographic.
struct AnchorSet {
  std::string pivot;
  std::uint64_t pivot_score = 0;
  std::vector<Anchor> t1;
  std::vector<Anchor> t2;
  std::size_t capacity = 0;
};

struct ScoredTuple {
  std::string w;
  std::string u;
  std::string v;
  double score = 0.0;
  Method method = Method::Freq;
  bool operator==(const ScoredTuple&) const = default;
};

/// Tuples in descending score order.
struct TupleSet {
  Method method = Method::Freq;
  std::size_t k = 0;
  std::vector<ScoredTuple> tuples;

  std::size_t size() const noexcept { return tuples.size(); }
  bool empty() const noexcept { return tuples.empty(); }
};

struct AnchorOptions {
  /// Anchors kept per side.
  std::size_t m = 10;
  /// Minimum sentence frequency of an anchor in its own snapshot.
  std::uint64_t min_anchor_freq = 5;
};

struct Pivot {
  std::string token;
  std::uint64_t score = 0;
};

/// Words ranked by min(f(w,C1), f(w,C2)) descending, ties lexicographic;
/// only positive scores; at most top_k entries.
std::vector<Pivot> select_pivots(const FrequencyTable& freq1, const FrequencyTable& freq2,
                                 std::size_t top_k);

AnchorSet build_anchor_set(std::string_view pivot, const CorpusStats& stats1,
                           const CorpusStats& stats2, const AnchorOptions& options = {});

/// Cross product U(w) x V(w) per pivot, pivots in the given order, tuples
/// ordered by (u rank, v rank), truncated to k. Score is the pivot score.
/// Pairs with u == v are skipped.
TupleSet build_freq_tuples(std::span<const AnchorSet> anchor_sets, std::size_t k);

/// 1 - Jaccard(U, V). Throws when both sides are empty.
double diversity(const AnchorSet& anchors);

/// Pivots re-ranked by diversity descending (ties: higher pivot score, then
/// lexicographic), expanded like build_freq_tuples; score is the diversity.
TupleSet build_div_tuples(std::span<const AnchorSet> anchor_sets, std::size_t k);

/// g(w1,u1) + g(w2,v2) - g(w2,u2) - g(w1,v1) with g the cosine similarity and
/// subscripts naming the snapshot table the vector comes from.
double context_score(std::string_view w, std::string_view u, std::string_view v,
                     const EmbeddingTable& emb1, const EmbeddingTable& emb2);

/// Re-scores candidates with context_score, sorts descending (ties
/// lexicographic on (w, u, v)) and keeps the top k. Scoring runs on `threads`
/// workers; the output does not depend on the thread count.
TupleSet build_cont_tuples(const TupleSet& candidates, const EmbeddingTable& emb1,
                           const EmbeddingTable& emb2, std::size_t k, std::size_t threads = 1);

/// `rank<TAB>w<TAB>u<TAB>v<TAB>score<TAB>method`, scores with 17 significant digits.
void write_tuples_tsv(std::ostream& out, const TupleSet& tuples);
TupleSet read_tuples_tsv(std::istream& in, const std::string& source_name = "<tuples>");

}  // namespace tempshift
