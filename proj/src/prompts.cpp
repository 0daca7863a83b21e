#include "tempshift/prompts.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "tempshift/common.hpp"

namespace tempshift {

std::vector<Prompt> generate_prompts(const TupleSet& tuples, std::span<const Template> templates,
                                     const std::string& t1_label, const std::string& t2_label) {
  std::vector<Prompt> out;
  std::unordered_set<std::string> seen;
  for (const auto& t : tuples.tuples) {
    if (t.u.empty() || t.v.empty()) throw Error("tuple with an empty anchor cannot fill a template");
    for (std::size_t i = 0; i < templates.size(); ++i) {
      std::string text = fill(templates[i], t, t1_label, t2_label);
      if (text.empty()) continue;
      if (!seen.insert(text).second) continue;
      out.push_back({std::move(text), t.w, t.u, t.v, i, t1_label, t2_label});
    }
  }
  return out;
}

Tokens prompt_words(std::string_view text) {
  Tokens words;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

Tokens MaskedInstance::masked_words(std::string_view mask) const {
  Tokens words = prompt_words(text);
  words.at(mask_index) = std::string(mask);
  return words;
}

std::vector<MaskedInstance> make_instances(std::span<const Prompt> prompts,
                                           const MaskOptions& options, const WarningSink& warn) {
  if (options.masks_per_prompt < 1) throw ConfigError("masks_per_prompt must be >= 1");
  Rng rng(options.seed);
  std::vector<MaskedInstance> out;
  for (const auto& p : prompts) {
    const Tokens words = prompt_words(p.text);
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (options.anchors_only) {
        const Tokens toks = tokenize(words[i]);
        const bool anchor = std::any_of(toks.begin(), toks.end(), [&](const std::string& t) {
          return t == p.u || t == p.v || (!p.w.empty() && t == p.w);
        });
        if (!anchor) continue;
      }
      positions.push_back(i);
    }
    std::size_t n = options.masks_per_prompt;
    if (positions.size() < n) {
      if (warn) {
        warn("prompt has " + std::to_string(positions.size()) + " maskable words, fewer than " +
             std::to_string(n) + "; masking all of them: " + p.text);
      }
      n = positions.size();
    }
    // Partial Fisher-Yates: the first n slots end up a uniform draw without replacement.
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + uniform_index(rng, positions.size() - i);
      std::swap(positions[i], positions[j]);
      out.push_back({p.text, positions[i], words[positions[i]]});
    }
  }
  return out;
}

void write_training_jsonl(std::ostream& out, std::span<const MaskedInstance> instances) {
  for (const auto& m : instances) {
    nlohmann::ordered_json j;
    j["text"] = m.text;
    j["mask_index"] = m.mask_index;
    j["label"] = m.label;
    out << j.dump() << '\n';
  }
}

std::vector<MaskedInstance> read_training_jsonl(std::istream& in, const std::string& source_name) {
  std::vector<MaskedInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      MaskedInstance m{j.at("text").get<std::string>(), j.at("mask_index").get<std::size_t>(),
                       j.at("label").get<std::string>()};
      const Tokens words = prompt_words(m.text);
      if (m.mask_index >= words.size()) throw Error("mask_index out of range");
      if (words[m.mask_index] != m.label) throw Error("label does not match the masked word");
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source_name, lineno, e.what());
    } catch (const Error& e) {
      throw FormatError(source_name, lineno, e.what());
    }
  }
  return out;
}

void write_prompts(std::ostream& out, std::span<const Prompt> prompts) {
  for (const auto& p : prompts) out << p.text << '\n';
}

}  // namespace tempshift
