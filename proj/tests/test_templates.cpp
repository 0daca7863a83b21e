#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "tempshift/templates.hpp"

using namespace tempshift;

namespace {

const std::string kRow1 =
    "<w> is associated with <u> in <T1>, whereas it is associated with <v> in <T2>.";

/// Scores every token -1 except those listed, which get the given value.
class TableOracle final : public LikelihoodOracle {
 public:
  TableOracle(std::vector<std::string> vocab, std::map<std::string, double> scores, double rest)
      : vocab_(std::move(vocab)), scores_(std::move(scores)), rest_(rest) {}
  OracleInfo info() const override { return {"table", true, std::nullopt}; }
  std::vector<std::string> vocabulary() const override { return vocab_; }
  std::vector<double> logprob(std::span<const std::string>, std::span<const Tokens> cands) const override {
    std::vector<double> out;
    for (const auto& c : cands) {
      double s = 0;
      for (const auto& t : c) {
        auto it = scores_.find(t);
        s += it == scores_.end() ? rest_ : it->second;
      }
      out.push_back(s);
    }
    return out;
  }

 private:
  std::vector<std::string> vocab_;
  std::map<std::string, double> scores_;
  double rest_;
};

TupleSet tuples_of(std::vector<std::array<std::string, 3>> t) {
  TupleSet s;
  for (auto& [w, u, v] : t) s.tuples.push_back({w, u, v, 1.0, Method::Freq});
  s.k = s.tuples.size();
  return s;
}

}  // namespace

TEST_CASE("parse the first manual template") {
  auto t = parse_template(kRow1);
  CHECK(t.slots() == std::vector<SlotKind>{SlotKind::W, SlotKind::U, SlotKind::T1, SlotKind::V, SlotKind::T2});
  CHECK(t.to_string() == kRow1);
  auto angle = parse_template("\xE2\x9F\xA8u\xE2\x9F\xA9 in \xE2\x9F\xA8T1\xE2\x9F\xA9");
  CHECK(angle.slots() == std::vector<SlotKind>{SlotKind::U, SlotKind::T1});
  CHECK(parse_template("<U> in <t_1>").slots() == std::vector<SlotKind>{SlotKind::U, SlotKind::T1});
}

TEST_CASE("the pivot slot may repeat") {
  auto t = parse_template("Unlike in <T1>, where <u> was associated with <w>, in <T2> <v> is associated with <w>.");
  CHECK(t.slots() == std::vector<SlotKind>{SlotKind::T1, SlotKind::U, SlotKind::W, SlotKind::T2, SlotKind::V, SlotKind::W});
  CHECK(fill(t, FillValues{"mask", "hide", "vaccine", "2010", "2020"}) ==
        "Unlike in 2010, where hide was associated with mask, in 2020 vaccine is associated with mask.");
}

TEST_CASE("parse errors") {
  CHECK_THROWS_WITH_AS(parse_template("<u> and <u>"), doctest::Contains("duplicate"), Error);
  CHECK_THROWS_WITH_AS(parse_template("<T2> or <T2>"), doctest::Contains("duplicate"), Error);
  CHECK_THROWS_WITH_AS(parse_template("<x> here"), doctest::Contains("unknown placeholder"), Error);
  auto lit = parse_template("no slots, a < b > c");
  CHECK(lit.slots().empty());
  CHECK(lit.to_string() == "no slots, a < b > c");
}

TEST_CASE("fill reproduces the worked example") {
  auto t = parse_template(kRow1);
  ScoredTuple tup{"mask", "hide", "vaccine", 1.0, Method::Freq};
  CHECK(fill(t, tup, "2010", "2020") ==
        "mask is associated with hide in 2010, whereas it is associated with vaccine in 2020.");
  CHECK(fill(parse_template("<u> in <T1> <v> in <T2>"), tup, "2010", "2020") == "hide in 2010 vaccine in 2020");
  CHECK(fill(parse_template("  just   text "), tup, "a", "b") == "just text");
  CHECK_THROWS_AS(fill(t, FillValues{"", "hide", "vaccine", "2010", "2020"}), Error);
}

TEST_CASE("unfill recovers the slot layout") {
  for (const std::string text : {kRow1, std::string("The meaning of <w> changed from <T1> to <T2> respectively from <u> to <v>.")}) {
    auto t = parse_template(text);
    const FillValues values{"mask", "hide", "vaccine", "2010", "2020"};
    const auto slots = t.slots();
    auto back = unfill(fill(t, values), values, slots);
    CHECK(back.slots() == slots);
    CHECK(fill(back, values) == fill(t, values));
  }
}

TEST_CASE("auto slots and auto templates") {
  auto t = make_auto_template({Tokens{}, Tokens{"in"}, Tokens{"and"}, Tokens{"in"}}, -3.5);
  CHECK(t.to_string() == "<u> in <T1> and <v> in <T2>");
  CHECK(t.origin == TemplateOrigin::Auto);
  auto z = auto_slots(t);
  REQUIRE(z);
  CHECK((*z)[1] == Tokens{"in"});
  CHECK_FALSE(auto_slots(parse_template(kRow1)));
  CHECK_FALSE(auto_slots(parse_template("<u> <T1> <v> <T2> trailing")));
  CHECK(auto_slots(parse_template("The <u> in <T1> and <v> in <T2>")).has_value());
}

TEST_CASE("template file round trip") {
  std::vector<Template> ts{parse_template(kRow1), make_auto_template({Tokens{"the"}, Tokens{"in"}, Tokens{}, Tokens{"in"}}, -1.25)};
  std::stringstream ss;
  write_templates(ss, ts);
  CHECK(ss.str() == kRow1 + "\nthe <u> in <T1> <v> in <T2>\t-1.25\n");
  std::stringstream with_comments("# comment\n\n" + ss.str());
  auto back = read_templates(with_comments);
  REQUIRE(back.size() == 2);
  CHECK(back[0].origin == TemplateOrigin::Manual);
  CHECK(back[1].origin == TemplateOrigin::Auto);
  CHECK(back[1].loglik == std::optional<double>(-1.25));
  std::stringstream bad("ok <u>\n<u> <u>\n");
  try {
    read_templates(bad, "t.txt");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("context pairs use the shortest sentence") {
  auto c1 = fixtures::snapshot("1", {{"x", "hide", "y", "z"}, {"b", "hide"}, {"a", "hide"}, {"other"}});
  auto c2 = fixtures::snapshot("2", {{"vaccine", "q"}, {"vaccine"}});
  auto pairs = select_context_pairs(tuples_of({{"mask", "hide", "vaccine"}}), c1, c2);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].s1 == Tokens{"a", "hide"});
  CHECK(pairs[0].s2 == Tokens{"vaccine"});
  CHECK_THROWS_AS(select_context_pairs(tuples_of({{"mask", "absent", "vaccine"}}), c1, c2), Error);
}

TEST_CASE("aggregate loglik arithmetic") {
  TableOracle o({"in", "and"}, {}, -1.0);
  auto tup = tuples_of({{"w", "u", "v"}});
  std::vector<ContextPair> ctx{{{"s"}, {"t"}}};
  auto t = make_auto_template({Tokens{"a"}, Tokens{"b"}, Tokens{"c"}, Tokens{"d"}});
  CHECK(aggregate_loglik(t, tup, o, ctx, "2010", "2020") == -4.0);

  auto twice = tuples_of({{"w", "u", "v"}, {"w", "u", "v"}});
  std::vector<ContextPair> ctx2{ctx[0], ctx[0]};
  CHECK(aggregate_loglik(t, twice, o, ctx2, "2010", "2020") == -8.0);
  CHECK_THROWS_AS(aggregate_loglik(parse_template(kRow1), tup, o, ctx, "a", "b"), Error);
}

TEST_CASE("aggregate loglik matches hand-computed n-gram sums") {
  // Bigram model on a tiny corpus; every term below is computed from counts.
  const std::vector<Tokens> corpus{{"x", "in", "2010"}, {"y", "in", "2020"}, {"x", "and", "y"}};
  const double alpha = 0.5;
  NGramLM lm(corpus, 2, alpha);
  const double V = static_cast<double>(lm.vocabulary_size());  // x in 2010 y 2020 and <unk>
  REQUIRE(V == 7);
  auto p = [&](double c, double total) { return std::log((c + alpha) / (total + alpha * V)); };
  // after "x": "in" and "and", one each of 2; after "y": in, 1 of 1 (sentence-final y adds nothing)
  auto t = make_auto_template({Tokens{}, Tokens{"in"}, Tokens{}, Tokens{"in"}});
  auto tups = tuples_of({{"w", "x", "y"}, {"w", "y", "x"}, {"w", "x", "x"}});
  std::vector<ContextPair> ctx(3, ContextPair{{"and"}, {}});
  // tuple (x, y): "in" after x, "in" after y
  const double t1 = p(1, 2) + p(1, 1);
  // tuple (y, x): "in" after y, "in" after x
  const double t2 = p(1, 1) + p(1, 2);
  // tuple (x, x): both after x
  const double t3 = p(1, 2) + p(1, 2);
  CHECK(aggregate_loglik(t, tups, lm, ctx, "2010", "2020") == doctest::Approx(t1 + t2 + t3).epsilon(1e-12));
}

TEST_CASE("forced decoding fills every slot with the only finite token") {
  const double ninf = -std::numeric_limits<double>::infinity();
  TableOracle o({"in", "and", "the"}, {{"in", 0.0}}, ninf);
  auto tup = tuples_of({{"w", "u", "v"}});
  std::vector<ContextPair> ctx{{{"s"}, {"t"}}};
  SearchOptions opt;
  opt.max_slot_len = 2;
  opt.beam_width = 3;
  auto res = search_templates(tup, o, ctx, "2010", "2020", opt);
  REQUIRE_FALSE(res.empty());
  CHECK(res[0].to_string() == "in in <u> in in <T1> in in <v> in in <T2>");
  CHECK(*res[0].loglik == 0.0);
}

TEST_CASE("search errors") {
  TableOracle o({"in"}, {}, -1.0);
  std::vector<ContextPair> none;
  CHECK_THROWS_AS(search_templates(TupleSet{}, o, none, "a", "b"), Error);
  auto tup = tuples_of({{"w", "u", "v"}});
  CHECK_THROWS_AS(search_templates(tup, o, none, "a", "b"), Error);
}

TEST_CASE("beam search on an n-gram oracle") {
  const std::vector<Tokens> corpus{{"the", "hide", "in", "2010", "and", "vaccine", "in", "2020"},
                                   {"the", "mask", "in", "2010", "and", "virus", "in", "2020"},
                                   {"hide", "in", "2010"},
                                   {"vaccine", "in", "2020"}};
  NGramLM lm(corpus, 2, 0.1);
  auto tups = tuples_of({{"mask", "hide", "vaccine"}, {"mask", "mask", "virus"}});
  std::vector<ContextPair> ctx{{{"the", "hide"}, {"vaccine"}}, {{"the", "mask"}, {"virus"}}};
  SearchOptions opt;
  opt.max_slot_len = 2;
  opt.top_n = 5;
  opt.beam_width = 50;
  auto res = search_templates(tups, lm, ctx, "2010", "2020", opt);
  REQUIRE_FALSE(res.empty());
  for (std::size_t i = 1; i < res.size(); ++i) CHECK(*res[i].loglik <= *res[i - 1].loglik);
  std::set<std::string> seen;
  for (const auto& t : res) {
    CHECK(seen.insert(t.normalized()).second);
    CHECK(t.origin == TemplateOrigin::Auto);
    CHECK(*t.loglik == doctest::Approx(aggregate_loglik(t, tups, lm, ctx, "2010", "2020")).epsilon(1e-12));
    for (const auto& tp : tups.tuples) {
      const auto text = fill(t, tp, "2010", "2020");
      CHECK(text.find('<') == std::string::npos);
    }
  }
  // Threads do not change the result.
  opt.threads = 4;
  auto par = search_templates(tups, lm, ctx, "2010", "2020", opt);
  REQUIRE(par.size() == res.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    CHECK(par[i].to_string() == res[i].to_string());
    CHECK(*par[i].loglik == *res[i].loglik);
  }
}

TEST_CASE("beam width one is greedy decoding") {
  const std::vector<Tokens> corpus{{"a", "b", "u", "c", "2010", "v", "b", "2020"}, {"b", "a", "c"}, {"c", "c", "b"}};
  NGramLM lm(corpus, 2, 0.1);
  auto tups = tuples_of({{"w", "u", "v"}});
  std::vector<ContextPair> ctx{{{"a"}, {"b"}}};
  SearchOptions opt;
  opt.beam_width = 1;
  opt.max_slot_len = 3;
  opt.top_n = 1;
  auto res = search_templates(tups, lm, ctx, "2010", "2020", opt);
  REQUIRE(res.size() == 1);

  // Greedy reference: argmax token each step (ties lexicographic), close when the boundary wins.
  auto vocab = lm.vocabulary();
  vocab.erase(std::remove(vocab.begin(), vocab.end(), "<unk>"), vocab.end());
  std::sort(vocab.begin(), vocab.end());
  const std::array<Tokens, 4> bounds{Tokens{"u"}, Tokens{"2010"}, Tokens{"v"}, Tokens{"2020"}};
  Tokens prefix = ctx[0].s1;
  std::array<Tokens, 4> z;
  for (std::size_t s = 0; s < 4; ++s) {
    while (z[s].size() < 3) {
      const double close = lm.conditional(prefix, bounds[s][0]);
      std::string best;
      double best_lp = -std::numeric_limits<double>::infinity();
      for (const auto& w : vocab) {
        const double lp = lm.conditional(prefix, w);
        if (lp > best_lp) {
          best_lp = lp;
          best = w;
        }
      }
      if (close >= best_lp) break;
      z[s].push_back(best);
      prefix.push_back(best);
    }
    prefix.insert(prefix.end(), bounds[s].begin(), bounds[s].end());
  }
  CHECK(res[0].to_string() == make_auto_template(z).to_string());
}
