#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tempshift/templates.hpp"
#include "tempshift/tuples.hpp"

namespace tempshift {

struct Prompt {
  std::string text;
  std::string w, u, v;
  std::size_t template_index = 0;
  std::string t1_label, t2_label;
};

/// Fills every template with every tuple, in (tuple rank, template index)
/// order, keeping the first prompt for each distinct text.
std::vector<Prompt> generate_prompts(const TupleSet& tuples, std::span<const Template> templates,
                                     const std::string& t1_label, const std::string& t2_label);

/// Words of a prompt as seen by the training file: whitespace-separated runs.
Tokens prompt_words(std::string_view text);

struct MaskedInstance {
  std::string text;
  std::size_t mask_index = 0;
  std::string label;

  /// The prompt words with the masked one replaced by `mask`.
  Tokens masked_words(std::string_view mask = "[MASK]") const;
};

struct MaskOptions {
  std::size_t masks_per_prompt = 1;
  std::uint64_t seed = 123;
  /// Restrict candidate positions to words containing w, u or v.
  bool anchors_only = false;
};

using WarningSink = std::function<void(const std::string&)>;

/// Draws masks_per_prompt distinct positions per prompt from one seeded
/// stream. A prompt with fewer candidate positions has all of them masked
/// and a warning is reported.
std::vector<MaskedInstance> make_instances(std::span<const Prompt> prompts,
                                           const MaskOptions& options,
                                           const WarningSink& warn = {});

/// One JSON object per line: {"text": ..., "mask_index": ..., "label": ...}.
void write_training_jsonl(std::ostream& out, std::span<const MaskedInstance> instances);
std::vector<MaskedInstance> read_training_jsonl(std::istream& in,
                                                const std::string& source_name = "<train>");

void write_prompts(std::ostream& out, std::span<const Prompt> prompts);

}  // namespace tempshift
