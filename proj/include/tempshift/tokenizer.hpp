#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tempshift {

using Tokens = std::vector<std::string>;

bool is_valid_utf8(std::string_view text);

/// Lowercases Latin, Greek, Cyrillic, Armenian and fullwidth Latin letters.
/// Other code points pass through unchanged. Throws Error on invalid UTF-8.
std::string to_lower_utf8(std::string_view text);

/// Lowercased word tokens: maximal runs of letters, digits and apostrophes
/// (U+2019 is folded to '). Apostrophes at either end of a run are trimmed.
/// Punctuation and symbols separate tokens and are dropped.
Tokens tokenize(std::string_view text);

/// Splits a document after '.', '!' or '?' when followed by whitespace (or at
/// the end of the text), then tokenizes each piece. Sentences that contain no
/// tokens are dropped.
std::vector<Tokens> tokenize_document(std::string_view document);

}  // namespace tempshift
