#include "tempshift/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "tempshift/common.hpp"

namespace tempshift {

TokenId Vocabulary::add(std::string_view token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  return std::nullopt;
}

Snapshot Snapshot::from_documents(std::string label, const std::vector<std::vector<Tokens>>& docs) {
  Snapshot s;
  s.label_ = std::move(label);
  auto vocab = std::make_shared<Vocabulary>();
  for (const auto& doc : docs) {
    std::size_t added = 0;
    for (const auto& sent : doc) {
      if (sent.empty()) continue;
      std::vector<TokenId> ids;
      ids.reserve(sent.size());
      for (const auto& tok : sent) ids.push_back(vocab->add(tok));
      s.sentences_.push_back(std::move(ids));
      ++added;
    }
    if (added) s.doc_offsets_.push_back(s.sentences_.size());
  }
  s.vocab_ = std::move(vocab);
  return s;
}

Tokens Snapshot::sentence_tokens(std::size_t i) const {
  Tokens out;
  for (TokenId id : sentence(i)) out.push_back(vocab_->token(id));
  return out;
}

std::vector<Tokens> Snapshot::document(std::size_t d) const {
  auto [first, last] = document_range(d);
  std::vector<Tokens> out;
  for (std::size_t i = first; i < last; ++i) out.push_back(sentence_tokens(i));
  return out;
}

std::size_t Snapshot::document_length(std::size_t d) const {
  auto [first, last] = document_range(d);
  std::size_t n = 0;
  for (std::size_t i = first; i < last; ++i) n += sentences_[i].size();
  return n;
}

Snapshot Snapshot::subset(std::span<const std::size_t> documents) const {
  std::vector<std::vector<Tokens>> docs;
  docs.reserve(documents.size());
  for (std::size_t d : documents) docs.push_back(document(d));
  return from_documents(label_, docs);
}

InputFormat parse_input_format(std::string_view name) {
  if (name == "lines") return InputFormat::Lines;
  if (name == "records") return InputFormat::Records;
  throw ConfigError("unknown input format '" + std::string(name) + "' (expected lines|records)");
}

Snapshot load_snapshot(const std::filesystem::path& path, InputFormat format,
                       std::string timestamp_label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::vector<Tokens>> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!is_valid_utf8(line)) throw FormatError(path.string(), lineno, "invalid UTF-8");
    std::string text;
    if (format == InputFormat::Lines) {
      text = std::move(line);
    } else {
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string(), lineno, std::string("malformed record: ") + e.what());
      }
      if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string()) {
        throw FormatError(path.string(), lineno, "malformed record: missing string field 'text'");
      }
      text = rec["text"].get<std::string>();
    }
    docs.push_back(tokenize_document(text));
  }
  Snapshot s = Snapshot::from_documents(std::move(timestamp_label), docs);
  if (s.empty()) throw Error("empty corpus: " + path.string());
  return s;
}

Snapshot preprocess(const Snapshot& snapshot, std::size_t min_words) {
  if (min_words < 1) throw ConfigError("min_words must be >= 1");
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> keep;
  for (std::size_t d = 0; d < snapshot.n_documents(); ++d) {
    if (snapshot.document_length(d) < min_words) continue;
    // Sentence boundaries are part of the normalized form.
    auto [first, last] = snapshot.document_range(d);
    std::string key;
    for (std::size_t i = first; i < last; ++i) {
      for (TokenId id : snapshot.sentence(i)) {
        key += snapshot.vocab().token(id);
        key += ' ';
      }
      key += '\n';
    }
    if (seen.insert(std::move(key)).second) keep.push_back(d);
  }
  if (keep.empty()) throw Error("empty corpus after preprocessing");
  return snapshot.subset(keep);
}

void SplitSpec::validate() const {
  for (double f : {train_fraction, dev_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (std::abs(train_fraction + dev_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  const std::array<double, 3> fr{spec.train_fraction, spec.dev_fraction, spec.test_fraction};
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = fr[i] * static_cast<double>(n);
    // Absorb representation error such as 0.7 * 10 = 7.000000000000001.
    double fl = std::floor(exact + 1e-9);
    sizes[i] = static_cast<std::size_t>(fl);
    rem[i] = std::max(0.0, exact - fl);
    assigned += sizes[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b] + 1e-12; });
  for (std::size_t left = n - std::min(n, assigned), k = 0; left > 0; --left, ++k) {
    ++sizes[order[k % 3]];
  }
  return sizes;
}

SplitResult split(const Snapshot& snapshot, const SplitSpec& spec) {
  if (snapshot.empty()) throw Error("cannot split an empty snapshot");
  const std::size_t n = snapshot.n_documents();
  const auto sizes = split_sizes(n, spec);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(spec.seed);
  shuffle(perm, rng);
  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> part(perm.begin() + begin, perm.begin() + begin + count);
    std::sort(part.begin(), part.end());
    return snapshot.subset(part);
  };
  SplitResult out;
  out.train = take(0, sizes[0]);
  out.dev = take(sizes[0], sizes[1]);
  out.test = take(sizes[0] + sizes[1], sizes[2]);
  return out;
}

}  // namespace tempshift
