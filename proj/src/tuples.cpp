#include "tempshift/tuples.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "tempshift/common.hpp"

namespace tempshift {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Freq: return "freq";
    case Method::Div: return "div";
    case Method::Cont: return "cont";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "freq") return Method::Freq;
  if (name == "div") return Method::Div;
  if (name == "cont") return Method::Cont;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected freq|div|cont)");
}

std::vector<Pivot> select_pivots(const FrequencyTable& freq1, const FrequencyTable& freq2,
                                 std::size_t top_k) {
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  std::vector<Pivot> all;
  const auto& vocab = freq1.vocab();
  for (TokenId id = 0; id < freq1.counts().size(); ++id) {
    const std::uint64_t f1 = freq1.count(id);
    if (f1 == 0) continue;
    const std::uint64_t s = std::min(f1, freq2.count(vocab.token(id)));
    if (s > 0) all.push_back({vocab.token(id), s});
  }
  auto better = [](const Pivot& a, const Pivot& b) {
    return a.score != b.score ? a.score > b.score : a.token < b.token;
  };
  const std::size_t n = std::min(top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), better);
  all.resize(n);
  return all;
}

namespace {

std::vector<Anchor> top_anchors(std::string_view pivot, const CorpusStats& stats,
                                const AnchorOptions& opt) {
  std::vector<Anchor> out;
  if (opt.m == 0) return out;
  auto id = stats.vocab().find(pivot);
  if (!id) return out;
  for (const auto& [other, c] : stats.cooc.neighbors(*id)) {
    if (stats.freq.count(other) < opt.min_anchor_freq) continue;
    if (auto p = pmi(*id, other, stats)) out.push_back({stats.vocab().token(other), *p});
  }
  auto better = [](const Anchor& a, const Anchor& b) {
    return a.pmi != b.pmi ? a.pmi > b.pmi : a.token < b.token;
  };
  const std::size_t n = std::min(opt.m, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), out.end(), better);
  out.resize(n);
  return out;
}

void expand(const AnchorSet& a, double score, Method method, std::size_t k,
            std::vector<ScoredTuple>& out) {
  for (const auto& u : a.t1) {
    for (const auto& v : a.t2) {
      if (out.size() >= k) return;
      if (u.token == v.token) continue;
      out.push_back({a.pivot, u.token, v.token, score, method});
    }
  }
}

}  // namespace

AnchorSet build_anchor_set(std::string_view pivot, const CorpusStats& stats1,
                           const CorpusStats& stats2, const AnchorOptions& options) {
  AnchorSet a;
  a.pivot = std::string(pivot);
  a.pivot_score = pivot_score(pivot, stats1.freq, stats2.freq);
  if (a.pivot_score == 0) {
    throw Error("'" + a.pivot + "' does not occur in both snapshots and cannot be a pivot");
  }
  a.capacity = options.m;
  a.t1 = top_anchors(pivot, stats1, options);
  a.t2 = top_anchors(pivot, stats2, options);
  return a;
}

TupleSet build_freq_tuples(std::span<const AnchorSet> anchor_sets, std::size_t k) {
  TupleSet set{Method::Freq, k, {}};
  for (const auto& a : anchor_sets) {
    if (set.tuples.size() >= k) break;
    expand(a, static_cast<double>(a.pivot_score), Method::Freq, k, set.tuples);
  }
  return set;
}

double diversity(const AnchorSet& anchors) {
  std::unordered_set<std::string_view> u, uni;
  for (const auto& x : anchors.t1) {
    u.insert(x.token);
    uni.insert(x.token);
  }
  std::size_t inter = 0;
  for (const auto& x : anchors.t2) {
    if (u.count(x.token)) ++inter;
    uni.insert(x.token);
  }
  if (uni.empty()) throw Error("diversity undefined for '" + anchors.pivot + "': no anchors");
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni.size());
}

TupleSet build_div_tuples(std::span<const AnchorSet> anchor_sets, std::size_t k) {
  struct Ranked {
    const AnchorSet* set;
    double div;
  };
  std::vector<Ranked> ranked;
  for (const auto& a : anchor_sets) {
    if (a.t1.empty() && a.t2.empty()) continue;
    ranked.push_back({&a, diversity(a)});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& l, const Ranked& r) {
    if (l.div != r.div) return l.div > r.div;
    if (l.set->pivot_score != r.set->pivot_score) return l.set->pivot_score > r.set->pivot_score;
    return l.set->pivot < r.set->pivot;
  });
  TupleSet set{Method::Div, k, {}};
  for (const auto& r : ranked) {
    if (set.tuples.size() >= k) break;
    expand(*r.set, r.div, Method::Div, k, set.tuples);
  }
  return set;
}

double context_score(std::string_view w, std::string_view u, std::string_view v,
                     const EmbeddingTable& emb1, const EmbeddingTable& emb2) {
  const auto w1 = emb1.lookup(w), u1 = emb1.lookup(u), v1 = emb1.lookup(v);
  const auto w2 = emb2.lookup(w), u2 = emb2.lookup(u), v2 = emb2.lookup(v);
  return cosine(w1, u1) + cosine(w2, v2) - cosine(w2, u2) - cosine(w1, v1);
}

TupleSet build_cont_tuples(const TupleSet& candidates, const EmbeddingTable& emb1,
                           const EmbeddingTable& emb2, std::size_t k, std::size_t threads) {
  std::vector<ScoredTuple> scored = candidates.tuples;
  const std::size_t n = scored.size();
  auto work = [&](std::size_t first, std::size_t last) {
    for (std::size_t i = first; i < last; ++i) {
      auto& t = scored[i];
      t.score = context_score(t.w, t.u, t.v, emb1, emb2);
      t.method = Method::Cont;
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t first = 0; first < n; first += chunk) {
      pool.emplace_back(work, first, std::min(n, first + chunk));
    }
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredTuple& a, const ScoredTuple& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.w != b.w) return a.w < b.w;
    if (a.u != b.u) return a.u < b.u;
    return a.v < b.v;
  });
  if (scored.size() > k) scored.resize(k);
  return TupleSet{Method::Cont, k, std::move(scored)};
}

void write_tuples_tsv(std::ostream& out, const TupleSet& tuples) {
  std::size_t rank = 1;
  for (const auto& t : tuples.tuples) {
    out << rank++ << '\t' << t.w << '\t' << t.u << '\t' << t.v << '\t' << format_double(t.score)
        << '\t' << to_string(t.method) << '\n';
  }
}

TupleSet read_tuples_tsv(std::istream& in, const std::string& source_name) {
  TupleSet set;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 6) throw FormatError(source_name, lineno, "expected 6 tab-separated fields");
    ScoredTuple t;
    t.w = std::string(f[1]);
    t.u = std::string(f[2]);
    t.v = std::string(f[3]);
    try {
      t.score = parse_double(f[4]);
      t.method = parse_method(f[5]);
    } catch (const Error& e) {
      throw FormatError(source_name, lineno, e.what());
    }
    if (first) {
      set.method = t.method;
      first = false;
    } else if (t.method != set.method) {
      throw FormatError(source_name, lineno, "mixed methods in one tuple file");
    }
    set.tuples.push_back(std::move(t));
  }
  set.k = set.tuples.size();
  return set;
}

}  // namespace tempshift
