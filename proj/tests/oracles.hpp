#pragma once

// Independent reference computations used to check the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tempshift/tokenizer.hpp"

namespace oracles {

using tempshift::Tokens;

inline bool contains(const Tokens& s, const std::string& w) {
  return std::find(s.begin(), s.end(), w) != s.end();
}

/// PMI by direct probability estimation over the sentence list.
inline std::optional<double> brute_pmi(const std::vector<Tokens>& sentences, const std::string& w,
                                       const std::string& x) {
  if (w == x) return std::nullopt;
  const double n = static_cast<double>(sentences.size());
  double fw = 0, fx = 0, fwx = 0;
  for (const auto& s : sentences) {
    const bool hw = contains(s, w), hx = contains(s, x);
    fw += hw;
    fx += hx;
    fwx += hw && hx;
  }
  if (fwx == 0 || fw == 0 || fx == 0) return std::nullopt;
  const double pw = fw / n, px = fx / n, pwx = fwx / n;
  return std::log(pwx / (pw * px));
}

/// 1 - |U n V| / |U u V| by set enumeration.
inline double brute_diversity(const std::set<std::string>& u, const std::set<std::string>& v) {
  std::set<std::string> inter, uni;
  std::set_intersection(u.begin(), u.end(), v.begin(), v.end(), std::inserter(inter, inter.end()));
  std::set_union(u.begin(), u.end(), v.begin(), v.end(), std::inserter(uni, uni.end()));
  return 1.0 - static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

/// Add-alpha n-gram model written from the textbook definition: counts of
/// (history, token) over BOS-padded sentences, backing off to the longest
/// observed suffix of the history.
class BruteNGram {
 public:
  BruteNGram(const std::vector<Tokens>& sentences, std::size_t order, double alpha,
             std::set<std::string> vocab)
      : order_(order), alpha_(alpha), vocab_(std::move(vocab)) {
    vocab_.insert("<unk>");
    for (const auto& s : sentences) {
      Tokens padded(order_ - 1, "<s>");
      padded.insert(padded.end(), s.begin(), s.end());
      for (std::size_t i = order_ - 1; i < padded.size(); ++i) {
        for (std::size_t h = 0; h < order_; ++h) {
          Tokens hist(padded.begin() + static_cast<long>(i - h), padded.begin() + static_cast<long>(i));
          counts_[hist][padded[i]] += 1;
          totals_[hist] += 1;
        }
      }
    }
  }

  double logp(const Tokens& context, const std::string& token) const {
    Tokens padded(order_ - 1, "<s>");
    for (const auto& t : context) padded.push_back(vocab_.count(t) ? t : "<unk>");
    const std::string x = vocab_.count(token) ? token : "<unk>";
    for (std::size_t h = order_ - 1;; --h) {
      Tokens hist(padded.end() - static_cast<long>(h), padded.end());
      auto it = totals_.find(hist);
      if (it != totals_.end() || h == 0) {
        const double total = it == totals_.end() ? 0.0 : it->second;
        double c = 0;
        if (auto ci = counts_.find(hist); ci != counts_.end()) {
          if (auto cx = ci->second.find(x); cx != ci->second.end()) c = cx->second;
        }
        return std::log((c + alpha_) / (total + alpha_ * static_cast<double>(vocab_.size())));
      }
    }
  }

 private:
  std::size_t order_;
  double alpha_;
  std::set<std::string> vocab_;
  std::map<Tokens, std::map<std::string, double>> counts_;
  std::map<Tokens, double> totals_;
};

}  // namespace oracles
