// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tempshift/pipeline.hpp"

using namespace tempshift;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string timing(double s, double limit) {
  std::ostringstream ss;
  ss.precision(3);
  ss << std::fixed << s << " s (limit " << limit << " s)";
  return ss.str();
}

// PMI against direct probability estimation on random corpora.
Outcome pmi_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::size_t compared = 0, mismatches = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t vocab = 2 + uniform_index(rng, 19);
    const std::size_t n = 1 + uniform_index(rng, 50);
    std::vector<Tokens> sents;
    for (std::size_t i = 0; i < n; ++i) {
      Tokens s;
      for (std::size_t j = 0, len = 1 + uniform_index(rng, 8); j < len; ++j) {
        s.push_back("w" + std::to_string(uniform_index(rng, vocab)));
      }
      sents.push_back(std::move(s));
    }
    const auto stats = count(fixtures::snapshot("t", sents));
    for (std::size_t a = 0; a < vocab; ++a) {
      for (std::size_t b = 0; b < vocab; ++b) {
        const std::string w = "w" + std::to_string(a), x = "w" + std::to_string(b);
        const auto got = pmi(w, x, stats);
        const auto want = oracles::brute_pmi(sents, w, x);
        ++compared;
        if (got.has_value() != want.has_value() || (got && std::abs(*got - *want) > 1e-9)) ++mismatches;
      }
    }
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 10.0,
          std::to_string(compared) + " pairs, " + std::to_string(mismatches) + " mismatches, " + timing(s, 10)};
}

// Planted shift is ranked first by every method.
Outcome planted_shift() {
  const auto t0 = Clock::now();
  const auto p = fixtures::planted_shift();
  const auto s1 = count(fixtures::snapshot("2010", p.c1));
  const auto s2 = count(fixtures::snapshot("2020", p.c2));
  std::vector<AnchorSet> sets;
  for (const auto& pv : select_pivots(s1.freq, s2.freq, 50)) sets.push_back(build_anchor_set(pv.token, s1, s2));
  const ScoredTuple* freq = nullptr;
  const auto ft = build_freq_tuples(sets, 100);
  if (!ft.empty()) freq = &ft.tuples[0];
  const auto dt = build_div_tuples(sets, 100);
  auto [e1, e2] = fixtures::orthogonal_tables();
  const auto ct = build_cont_tuples(build_freq_tuples(sets, 100000), e1, e2, 100);
  const double s = seconds_since(t0);

  auto is_planted = [](const ScoredTuple& t) { return t.w == "mask" && t.u == "hide" && t.v == "vaccine"; };
  const bool f_ok = freq && is_planted(*freq);
  const bool d_ok = !dt.empty() && is_planted(dt.tuples[0]);
  const bool c_ok = !ct.empty() && is_planted(ct.tuples[0]) && std::abs(ct.tuples[0].score - 2.0) <= 1e-9;
  std::ostringstream d;
  d << "freq " << (f_ok ? "first" : "missed") << ", div " << (d_ok ? "first" : "missed") << ", cont "
    << (ct.empty() ? std::string("empty") : format_double(ct.tuples[0].score, 12)) << ", " << timing(s, 5);
  return {f_ok && d_ok && c_ok && s < 5.0, d.str()};
}

// Diversity is exactly 1 - Jaccard with the expected extremes.
Outcome diversity_bounds() {
  Rng rng(99);
  std::size_t failures = 0;
  for (int i = 0; i < 1000; ++i) {
    std::set<std::string> u, v;
    while (u.empty() && v.empty()) {
      for (int t = 0; t < 8; ++t) {
        if (uniform_index(rng, 2)) u.insert("a" + std::to_string(t));
        if (uniform_index(rng, 2)) v.insert("a" + std::to_string(t));
      }
    }
    AnchorSet a;
    a.pivot = "w";
    for (const auto& t : u) a.t1.push_back({t, 1.0});
    for (const auto& t : v) a.t2.push_back({t, 1.0});
    const double d = diversity(a);
    std::set<std::string> inter;
    std::set_intersection(u.begin(), u.end(), v.begin(), v.end(), std::inserter(inter, inter.end()));
    const bool ok = d >= 0.0 && d <= 1.0 && d == oracles::brute_diversity(u, v) && ((d == 0.0) == (u == v)) &&
                    ((d == 1.0) == inter.empty());
    failures += !ok;
  }
  return {failures == 0, "1000 set pairs, " + std::to_string(failures) + " failures"};
}

// Exhaustive walk of the slot decision tree with the same closing rule.
struct Exhaustive {
  const NGramLM& lm;
  const TupleSet& tuples;
  const std::vector<ContextPair>& contexts;
  const std::vector<std::string>& vocab;
  std::size_t max_len;
  Tokens t1{"2010"}, t2{"2020"};
  double best = -std::numeric_limits<double>::infinity();
  std::array<Tokens, 4> best_z;
  std::size_t leaves = 0;

  const Tokens& boundary(std::size_t j, int slot) const {
    static thread_local Tokens tmp;
    switch (slot) {
      case 0: tmp = {tuples.tuples[j].u}; return tmp;
      case 1: return t1;
      case 2: tmp = {tuples.tuples[j].v}; return tmp;
      default: return t2;
    }
  }

  Tokens prefix(std::size_t j, const std::array<Tokens, 4>& z, int slot) const {
    Tokens p = contexts[j].s1;
    for (int s = 0; s <= slot; ++s) {
      p.insert(p.end(), z[s].begin(), z[s].end());
      if (s < slot) {
        const Tokens b = boundary(j, s);
        p.insert(p.end(), b.begin(), b.end());
      }
    }
    return p;
  }

  void walk(std::array<Tokens, 4>& z, int slot, double score) {
    if (slot == 4) {
      ++leaves;
      if (score > best) {
        best = score;
        best_z = z;
      }
      return;
    }
    if (z[slot].size() >= max_len) return walk(z, slot + 1, score);
    double close = 0.0;
    std::vector<double> ext(vocab.size(), 0.0);
    for (std::size_t j = 0; j < contexts.size(); ++j) {
      const Tokens p = prefix(j, z, slot);
      close += lm.conditional(p, boundary(j, slot)[0]);
      for (std::size_t c = 0; c < vocab.size(); ++c) ext[c] += lm.conditional(p, vocab[c]);
    }
    if (close >= *std::max_element(ext.begin(), ext.end())) return walk(z, slot + 1, score);
    for (std::size_t c = 0; c < vocab.size(); ++c) {
      z[slot].push_back(vocab[c]);
      walk(z, slot, score + ext[c]);
      z[slot].pop_back();
    }
  }
};

Outcome beam_saturation() {
  const auto t0 = Clock::now();
  std::size_t instances = 0, mismatch = 0, nonmonotone = 0, total_leaves = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Rng rng(seed);
    const std::size_t v_size = 3 + seed % 3;          // 3..5
    const std::size_t max_len = 1 + (seed % 2);       // 1..2
    if (v_size == 5 && max_len == 2) continue;        // keeps the tree small
    std::vector<std::string> vocab;
    for (std::size_t i = 0; i < v_size; ++i) vocab.push_back(std::string(1, static_cast<char>('a' + i)));
    const std::vector<std::string> words{"a", "b", "c", "d", "e", "x", "y", "p", "q", "2010", "2020"};
    std::vector<Tokens> corpus;
    for (int i = 0; i < 60; ++i) {
      Tokens s;
      for (std::size_t j = 0, n = 2 + uniform_index(rng, 7); j < n; ++j) s.push_back(words[uniform_index(rng, words.size())]);
      corpus.push_back(std::move(s));
    }
    const NGramLM lm(corpus, 1 + seed % 3, 0.5);
    const TupleSet tuples{Method::Freq, 2, {{"w", "x", "y", 1, Method::Freq}, {"w", "p", "q", 1, Method::Freq}}};
    const std::vector<ContextPair> contexts{{{"a", "x"}, {"b", "y"}}, {{"c", "p"}, {"q", "d"}}};

    Exhaustive ex{lm, tuples, contexts, vocab, max_len};
    std::array<Tokens, 4> z;
    ex.walk(z, 0, 0.0);
    total_leaves += ex.leaves;

    std::vector<double> bests;
    for (std::size_t width : {std::size_t{1}, std::size_t{2}, std::size_t{4}, std::size_t{1} << 20}) {
      SearchOptions opt;
      opt.beam_width = width;
      opt.max_slot_len = max_len;
      opt.top_n = 1;
      opt.vocabulary = vocab;
      const auto ts = search_templates(tuples, lm, contexts, "2010", "2020", opt);
      bests.push_back(ts.empty() || !ts[0].loglik ? -std::numeric_limits<double>::infinity() : *ts[0].loglik);
      if (width == (std::size_t{1} << 20)) {
        const auto got = ts.empty() ? std::nullopt : auto_slots(ts[0]);
        if (!got || std::abs(bests.back() - ex.best) > 1e-9 || *got != ex.best_z) ++mismatch;
      }
    }
    for (std::size_t i = 1; i < bests.size(); ++i) nonmonotone += bests[i] < bests[i - 1] - 1e-9;
    ++instances;
  }
  const double s = seconds_since(t0);
  std::ostringstream d;
  d << instances << " models, " << total_leaves << " enumerated fillings, " << mismatch
    << " optimum mismatches, " << nonmonotone << " width regressions, " << timing(s, 30);
  return {mismatch == 0 && nonmonotone == 0 && s < 30.0, d.str()};
}

Outcome prompt_fidelity() {
  const auto t = builtin_manual_templates()[0];
  const std::string got = fill(t, ScoredTuple{"mask", "hide", "vaccine", 0, Method::Freq}, "2010", "2020");
  const std::string want = "mask is associated with hide in 2010, whereas it is associated with vaccine in 2020.";
  return {got == want, "\"" + got + "\""};
}

Outcome masking_statistics() {
  const std::string text = "one two three four five six seven eight nine ten";
  const std::vector<Prompt> ps(10000, Prompt{text, "one", "two", "three", 0, "2010", "2020"});
  const auto inst = make_instances(ps, MaskOptions{1, 123, false});
  std::array<double, 10> hist{};
  std::size_t broken = 0;
  for (const auto& m : inst) {
    if (m.mask_index >= 10) {
      ++broken;
      continue;
    }
    hist[m.mask_index] += 1;
    auto words = m.masked_words();
    words[m.mask_index] = m.label;
    broken += words != prompt_words(text);
  }
  double chi2 = 0;
  for (double o : hist) chi2 += (o - 1000.0) * (o - 1000.0) / 1000.0;
  const double p = boost::math::gamma_q(4.5, chi2 / 2.0);
  return {inst.size() == 10000 && p > 0.01 && broken == 0,
          "chi2 " + format_double(chi2, 4) + ", p " + format_double(p, 4) + ", " + std::to_string(broken) +
              " reconstruction failures"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto dir = fixtures::scratch("acceptance_det");
  auto [c1, c2] = fixtures::write_planted(dir);
  std::size_t files = 0, differ = 0;
  for (auto source : {TemplateSource::Manual, TemplateSource::Auto}) {
    PipelineConfig c;
    c.c1 = c1;
    c.c2 = c2;
    c.t1_label = "2010";
    c.t2_label = "2020";
    c.k = 1;
    c.min_words = 3;
    c.template_source = source;
    c.beam_width = 3;
    c.max_slot_len = 2;
    c.top_n = 2;
    c.oracle.order = 2;
    c.masks_per_prompt = 2;
    const std::string tag = source == TemplateSource::Manual ? "manual" : "auto";
    c.output_dir = dir / (tag + "_a");
    run_pipeline(c);
    c.output_dir = dir / (tag + "_b");
    c.threads = 3;
    run_pipeline(c);
    for (const char* name : {"pivots.tsv", "tuples.tsv", "templates.txt", "prompts.txt", "train.jsonl", "manifest.json"}) {
      ++files;
      const auto a = slurp(dir / (tag + "_a") / name);
      differ += a.empty() || a != slurp(dir / (tag + "_b") / name);
    }
  }
  return {differ == 0, std::to_string(files) + " artifacts compared, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"pmi-oracle-equivalence", pmi_oracle},
      {"planted-shift-recovery", planted_shift},
      {"diversity-bounds", diversity_bounds},
      {"beam-search-saturation", beam_saturation},
      {"prompt-fidelity", prompt_fidelity},
      {"masking-statistics", masking_statistics},
      {"pipeline-determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.ok ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.ok;
  }
  return failed == 0 ? 0 : 1;
}
