#include "tempshift/templates.hpp"

#include <algorithm>
#include <exception>
#include <istream>
#include <limits>
#include <ostream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "tempshift/common.hpp"

namespace tempshift {

std::string_view placeholder(SlotKind kind) {
  switch (kind) {
    case SlotKind::W: return "<w>";
    case SlotKind::U: return "<u>";
    case SlotKind::V: return "<v>";
    case SlotKind::T1: return "<T1>";
    case SlotKind::T2: return "<T2>";
  }
  return "<?>";
}

namespace {

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

std::optional<SlotKind> slot_from_name(std::string name) {
  std::string n;
  for (char c : name) {
    if (c == '_') continue;
    n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (n == "w") return SlotKind::W;
  if (n == "u") return SlotKind::U;
  if (n == "v") return SlotKind::V;
  if (n == "t1") return SlotKind::T1;
  if (n == "t2") return SlotKind::T2;
  return std::nullopt;
}

constexpr std::string_view kOpenAngle = "\xE2\x9F\xA8";   // U+27E8
constexpr std::string_view kCloseAngle = "\xE2\x9F\xA9";  // U+27E9

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

std::vector<SlotKind> Template::slots() const {
  std::vector<SlotKind> out;
  for (const auto& e : elements) {
    if (auto* s = std::get_if<Slot>(&e)) out.push_back(s->kind);
  }
  return out;
}

bool Template::has_slot(SlotKind kind) const {
  auto s = slots();
  return std::find(s.begin(), s.end(), kind) != s.end();
}

std::string Template::to_string() const {
  std::string raw;
  for (const auto& e : elements) {
    if (auto* l = std::get_if<Literal>(&e)) {
      raw += l->text;
    } else {
      raw += placeholder(std::get<Slot>(e).kind);
    }
  }
  return collapse_whitespace(raw);
}

std::string Template::normalized() const { return to_lower_utf8(to_string()); }

Template parse_template(std::string_view text) {
  Template t;
  std::string literal;
  std::vector<SlotKind> seen;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t open_len = 0;
    std::string_view close;
    if (text[i] == '<') {
      open_len = 1;
      close = ">";
    } else if (text.substr(i, kOpenAngle.size()) == kOpenAngle) {
      open_len = kOpenAngle.size();
      close = kCloseAngle;
    }
    if (open_len) {
      std::size_t j = i + open_len;
      while (j < text.size() && is_name_char(text[j])) ++j;
      if (j > i + open_len && text.substr(j, close.size()) == close) {
        std::string name(text.substr(i + open_len, j - i - open_len));
        auto kind = slot_from_name(name);
        if (!kind) throw Error("unknown placeholder '" + name + "' in template: " + std::string(text));
        if (*kind != SlotKind::W && std::find(seen.begin(), seen.end(), *kind) != seen.end()) {
          throw Error("duplicate placeholder " + std::string(placeholder(*kind)) +
                      " in template: " + std::string(text));
        }
        seen.push_back(*kind);
        if (!literal.empty()) t.elements.emplace_back(Literal{std::exchange(literal, {})});
        t.elements.emplace_back(Slot{*kind});
        i = j + close.size();
        continue;
      }
    }
    literal.push_back(text[i]);
    ++i;
  }
  if (!literal.empty()) t.elements.emplace_back(Literal{std::move(literal)});
  t.origin = TemplateOrigin::Manual;
  return t;
}

std::string fill(const Template& t, const FillValues& values) {
  std::string raw;
  for (const auto& e : t.elements) {
    if (auto* l = std::get_if<Literal>(&e)) {
      raw += l->text;
      continue;
    }
    const SlotKind kind = std::get<Slot>(e).kind;
    const std::string* value = nullptr;
    switch (kind) {
      case SlotKind::W: value = &values.w; break;
      case SlotKind::U: value = &values.u; break;
      case SlotKind::V: value = &values.v; break;
      case SlotKind::T1: value = &values.t1; break;
      case SlotKind::T2: value = &values.t2; break;
    }
    if (value->empty()) {
      throw Error("cannot fill " + std::string(placeholder(kind)) + " in '" + t.to_string() +
                  "': no value");
    }
    raw += *value;
  }
  return collapse_whitespace(raw);
}

std::string fill(const Template& t, const ScoredTuple& tuple, std::string_view t1_label,
                 std::string_view t2_label) {
  return fill(t, FillValues{tuple.w, tuple.u, tuple.v, std::string(t1_label), std::string(t2_label)});
}

Template unfill(std::string_view filled, const FillValues& values,
                std::span<const SlotKind> slot_order) {
  Template t;
  std::size_t pos = 0;
  for (SlotKind kind : slot_order) {
    const std::string& v = kind == SlotKind::W    ? values.w
                           : kind == SlotKind::U  ? values.u
                           : kind == SlotKind::V  ? values.v
                           : kind == SlotKind::T1 ? values.t1
                                                  : values.t2;
    std::size_t at = filled.find(v, pos);
    if (v.empty() || at == std::string_view::npos) {
      throw Error("value for " + std::string(placeholder(kind)) + " not found in filled text");
    }
    if (at > pos) t.elements.emplace_back(Literal{std::string(filled.substr(pos, at - pos))});
    t.elements.emplace_back(Slot{kind});
    pos = at + v.size();
  }
  if (pos < filled.size()) t.elements.emplace_back(Literal{std::string(filled.substr(pos))});
  return t;
}

std::optional<std::array<Tokens, 4>> auto_slots(const Template& t) {
  static constexpr std::array<SlotKind, 4> order{SlotKind::U, SlotKind::T1, SlotKind::V,
                                                 SlotKind::T2};
  std::array<Tokens, 4> z;
  std::size_t next = 0;
  for (const auto& e : t.elements) {
    if (auto* l = std::get_if<Literal>(&e)) {
      Tokens toks = tokenize(l->text);
      if (toks.empty()) continue;
      if (next >= 4) return std::nullopt;  // text after <T2>
      z[next].insert(z[next].end(), toks.begin(), toks.end());
    } else {
      if (next >= 4 || std::get<Slot>(e).kind != order[next]) return std::nullopt;
      ++next;
    }
  }
  if (next != 4) return std::nullopt;
  return z;
}

Template make_auto_template(const std::array<Tokens, 4>& z, std::optional<double> loglik) {
  static constexpr std::array<SlotKind, 4> order{SlotKind::U, SlotKind::T1, SlotKind::V,
                                                 SlotKind::T2};
  Template t;
  t.origin = TemplateOrigin::Auto;
  t.loglik = loglik;
  for (std::size_t s = 0; s < 4; ++s) {
    if (!z[s].empty()) {
      t.elements.emplace_back(Literal{" " + join(z[s], " ") + " "});
    } else if (s > 0) {
      t.elements.emplace_back(Literal{" "});  // keeps adjacent slots apart
    }
    t.elements.emplace_back(Slot{order[s]});
  }
  return t;
}

std::vector<ContextPair> select_context_pairs(const TupleSet& tuples, const Snapshot& c1,
                                              const Snapshot& c2) {
  auto shortest = [](const Snapshot& snap, const std::unordered_set<std::string>& wanted) {
    std::unordered_map<TokenId, std::size_t> best;
    std::unordered_set<TokenId> ids;
    for (const auto& w : wanted) {
      if (auto id = snap.vocab().find(w)) ids.insert(*id);
    }
    auto rendering = [&](std::size_t i) { return join(snap.sentence_tokens(i), " "); };
    for (std::size_t i = 0; i < snap.n_sentences(); ++i) {
      auto sent = snap.sentence(i);
      for (TokenId id : sent) {
        if (!ids.count(id)) continue;
        auto [it, inserted] = best.try_emplace(id, i);
        if (inserted || it->second == i) continue;
        const auto cur = snap.sentence(it->second).size();
        if (sent.size() < cur || (sent.size() == cur && rendering(i) < rendering(it->second))) {
          it->second = i;
        }
      }
    }
    std::unordered_map<std::string, Tokens> out;
    for (const auto& w : wanted) {
      auto id = snap.vocab().find(w);
      if (!id || !best.count(*id)) {
        throw Error("no sentence in snapshot '" + snap.label() + "' contains '" + w + "'");
      }
      out[w] = snap.sentence_tokens(best[*id]);
    }
    return out;
  };
  std::unordered_set<std::string> us, vs;
  for (const auto& t : tuples.tuples) {
    us.insert(t.u);
    vs.insert(t.v);
  }
  auto s1 = shortest(c1, us);
  auto s2 = shortest(c2, vs);
  std::vector<ContextPair> pairs;
  pairs.reserve(tuples.size());
  for (const auto& t : tuples.tuples) pairs.push_back({s1.at(t.u), s2.at(t.v)});
  return pairs;
}

// ---------------------------------------------------------------------------
// Template search

namespace {

class SearchSpace {
 public:
  struct Node {
    std::array<std::vector<std::uint32_t>, 4> z;
    int slot = 0;
    double score = 0.0;
  };
  struct Settled {
    Node node;
    bool finished = false;
    std::vector<double> extension;  // summed score of each vocabulary token
  };

  SearchSpace(const TupleSet& tuples, const LikelihoodOracle& oracle,
              std::span<const ContextPair> contexts, const std::string& t1_label,
              const std::string& t2_label, std::vector<std::string> vocab, std::size_t max_slot_len)
      : oracle_(oracle),
        contexts_(contexts),
        vocab_(std::move(vocab)),
        max_slot_len_(max_slot_len),
        t1_(tokenize(t1_label)),
        t2_(tokenize(t2_label)) {
    for (const auto& t : tuples.tuples) {
      us_.push_back({t.u});
      vs_.push_back({t.v});
    }
    singletons_.reserve(vocab_.size() + 1);
    singletons_.emplace_back();  // replaced by the boundary per query
    for (const auto& w : vocab_) singletons_.push_back({w});
  }

  const std::vector<std::string>& vocab() const { return vocab_; }

  /// Advances through forced slot closures until the node can extend or is complete.
  Settled settle(Node node) const {
    std::vector<Tokens> cands = singletons_;
    std::vector<double> ext(vocab_.size());
    while (node.slot < 4) {
      if (node.z[node.slot].size() >= max_slot_len_) {
        ++node.slot;
        continue;
      }
      std::fill(ext.begin(), ext.end(), 0.0);
      double close = 0.0;
      for (std::size_t j = 0; j < contexts_.size(); ++j) {
        cands[0] = boundary(j, node.slot);
        auto prefix = prefix_of(j, node);
        auto lp = oracle_.logprob(prefix, cands);
        if (lp.size() != cands.size()) throw Error("oracle returned a wrong number of scores");
        close += lp[0];
        for (std::size_t c = 0; c < ext.size(); ++c) ext[c] += lp[c + 1];
      }
      const double best = ext.empty() ? -std::numeric_limits<double>::infinity()
                                      : *std::max_element(ext.begin(), ext.end());
      if (close >= best) {
        ++node.slot;
        continue;
      }
      return Settled{std::move(node), false, std::move(ext)};
    }
    return Settled{std::move(node), true, {}};
  }

  std::array<Tokens, 4> surface(const Node& n) const {
    std::array<Tokens, 4> z;
    for (std::size_t s = 0; s < 4; ++s) {
      for (auto id : n.z[s]) z[s].push_back(vocab_[id]);
    }
    return z;
  }

 private:
  const Tokens& boundary(std::size_t j, int slot) const {
    switch (slot) {
      case 0: return us_[j];
      case 1: return t1_;
      case 2: return vs_[j];
      default: return t2_;
    }
  }

  Tokens prefix_of(std::size_t j, const Node& n) const {
    Tokens p = contexts_[j].s1;
    for (int s = 0; s <= n.slot; ++s) {
      for (auto id : n.z[s]) p.push_back(vocab_[id]);
      if (s < n.slot) {
        const auto& b = boundary(j, s);
        p.insert(p.end(), b.begin(), b.end());
      }
    }
    return p;
  }

  const LikelihoodOracle& oracle_;
  std::span<const ContextPair> contexts_;
  std::vector<std::string> vocab_;
  std::size_t max_slot_len_;
  Tokens t1_, t2_;
  std::vector<Tokens> us_, vs_;
  std::vector<Tokens> singletons_;
};

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) f(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<Template> search_templates(const TupleSet& tuples, const LikelihoodOracle& oracle,
                                       std::span<const ContextPair> contexts,
                                       const std::string& t1_label, const std::string& t2_label,
                                       const SearchOptions& options) {
  if (tuples.empty()) throw Error("template search needs a non-empty tuple set");
  if (contexts.size() != tuples.size()) {
    throw Error("template search needs one context pair per tuple (" +
                std::to_string(tuples.size()) + " tuples, " + std::to_string(contexts.size()) +
                " pairs)");
  }
  if (options.beam_width < 1) throw ConfigError("beam_width must be >= 1");
  std::vector<std::string> vocab = options.vocabulary;
  if (vocab.empty()) {
    for (auto& w : oracle.vocabulary()) {
      if (w != NGramLM::kUnknown) vocab.push_back(std::move(w));
    }
  }
  if (vocab.empty()) throw ConfigError("template search needs a candidate vocabulary");
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());

  SearchSpace space(tuples, oracle, contexts, t1_label, t2_label, std::move(vocab),
                    options.max_slot_len);
  using Node = SearchSpace::Node;
  std::vector<Node> finished;
  std::vector<SearchSpace::Settled> beam;

  auto root = space.settle(Node{});
  if (root.finished) {
    finished.push_back(std::move(root.node));
  } else {
    beam.push_back(std::move(root));
  }

  auto better = [](const Node& a, const Node& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.z < b.z;
  };

  while (!beam.empty()) {
    std::vector<Node> children;
    children.reserve(beam.size() * space.vocab().size());
    for (const auto& s : beam) {
      for (std::uint32_t c = 0; c < s.extension.size(); ++c) {
        Node child = s.node;
        child.z[child.slot].push_back(c);
        child.score += s.extension[c];
        children.push_back(std::move(child));
      }
    }
    if (children.size() > options.beam_width) {
      std::partial_sort(children.begin(),
                        children.begin() + static_cast<std::ptrdiff_t>(options.beam_width),
                        children.end(), better);
      children.resize(options.beam_width);
    } else {
      std::sort(children.begin(), children.end(), better);
    }
    std::vector<SearchSpace::Settled> settled(children.size());
    parallel_for(children.size(), options.threads,
                 [&](std::size_t i) { settled[i] = space.settle(std::move(children[i])); });
    beam.clear();
    for (auto& s : settled) {
      if (s.finished) {
        finished.push_back(std::move(s.node));
      } else {
        beam.push_back(std::move(s));
      }
    }
  }

  std::sort(finished.begin(), finished.end(), better);
  std::vector<Template> out;
  std::unordered_set<std::string> seen;
  for (const auto& n : finished) {
    if (out.size() >= options.top_n) break;
    Template t = make_auto_template(space.surface(n), n.score);
    if (seen.insert(t.normalized()).second) out.push_back(std::move(t));
  }
  return out;
}

double aggregate_loglik(const Template& t, const TupleSet& tuples, const LikelihoodOracle& oracle,
                        std::span<const ContextPair> contexts, const std::string& t1_label,
                        const std::string& t2_label) {
  auto z = auto_slots(t);
  if (!z) throw Error("template '" + t.to_string() + "' is not of the form Z1 <u> Z2 <T1> Z3 <v> Z4 <T2>");
  if (contexts.size() != tuples.size()) throw Error("one context pair per tuple is required");
  const Tokens t1 = tokenize(t1_label), t2 = tokenize(t2_label);
  double total = 0.0;
  for (std::size_t j = 0; j < tuples.size(); ++j) {
    const std::array<Tokens, 4> bounds{Tokens{tuples.tuples[j].u}, t1, Tokens{tuples.tuples[j].v}, t2};
    Tokens prefix = contexts[j].s1;
    for (std::size_t s = 0; s < 4; ++s) {
      if (!(*z)[s].empty()) {
        const std::vector<Tokens> cand{(*z)[s]};
        total += oracle.logprob(prefix, cand).at(0);
        prefix.insert(prefix.end(), (*z)[s].begin(), (*z)[s].end());
      }
      prefix.insert(prefix.end(), bounds[s].begin(), bounds[s].end());
    }
  }
  return total;
}

void write_templates(std::ostream& out, std::span<const Template> templates) {
  for (const auto& t : templates) {
    out << t.to_string();
    if (t.origin == TemplateOrigin::Auto && t.loglik) out << '\t' << format_double(*t.loglik);
    out << '\n';
  }
}

std::vector<Template> read_templates(std::istream& in, const std::string& source_name) {
  std::vector<Template> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    try {
      auto fields = split_fields(line);
      if (fields.size() > 2) throw Error("expected 'template' or 'template<TAB>loglik'");
      Template t = parse_template(fields[0]);
      if (fields.size() == 2) {
        t.origin = TemplateOrigin::Auto;
        t.loglik = parse_double(fields[1]);
      }
      out.push_back(std::move(t));
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(source_name, lineno, e.what());
    }
  }
  return out;
}

}  // namespace tempshift
