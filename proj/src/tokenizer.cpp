#include "tempshift/tokenizer.hpp"

#include <optional>

#include "tempshift/common.hpp"

namespace tempshift {
namespace {

struct Decoded {
  char32_t cp;
  std::size_t len;
};

std::optional<Decoded> decode(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return Decoded{b0, 1};
  std::size_t len;
  char32_t cp;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return std::nullopt;
  }
  if (i + len > s.size()) return std::nullopt;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  // Overlong forms, surrogates and out-of-range values.
  if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
      (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
    return std::nullopt;
  }
  return Decoded{cp, len};
}

void encode(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

template <typename F>
void for_each_code_point(std::string_view s, F&& f) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto d = decode(s, i);
    if (!d) throw Error("invalid UTF-8 at byte " + std::to_string(i));
    f(d->cp);
    i += d->len;
  }
}

bool in(char32_t cp, char32_t lo, char32_t hi) { return cp >= lo && cp <= hi; }

char32_t lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  if (in(cp, 0xC0, 0xDE) && cp != 0xD7) return cp + 32;
  if (cp == 0x130) return 'i';
  if (cp == 0x178) return 0xFF;
  if (in(cp, 0x100, 0x137) || in(cp, 0x14A, 0x177)) return cp | 1;
  if (in(cp, 0x139, 0x148) || in(cp, 0x179, 0x17E)) return (cp & 1) ? cp + 1 : cp;
  if (cp == 0x386) return 0x3AC;
  if (in(cp, 0x388, 0x38A)) return cp + 37;
  if (cp == 0x38C) return 0x3CC;
  if (in(cp, 0x38E, 0x38F)) return cp + 63;
  if (in(cp, 0x391, 0x3A9) && cp != 0x3A2) return cp + 32;
  if (in(cp, 0x400, 0x40F)) return cp + 80;
  if (in(cp, 0x410, 0x42F)) return cp + 32;
  if (in(cp, 0x460, 0x481) || in(cp, 0x48A, 0x4BF)) return cp | 1;
  if (in(cp, 0x531, 0x556)) return cp + 48;
  if (in(cp, 0x1E00, 0x1E95) || in(cp, 0x1EA0, 0x1EFF)) return cp | 1;
  if (in(cp, 0xFF21, 0xFF3A)) return cp + 32;
  return cp;
}

bool is_apostrophe(char32_t cp) { return cp == '\'' || cp == 0x2019; }

bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
  }
  if (in(cp, 0x80, 0xBF)) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (in(cp, 0x2000, 0x206F) || in(cp, 0x20A0, 0x20CF) || in(cp, 0x2190, 0x2BFF) ||
      in(cp, 0x3000, 0x303F) || in(cp, 0xFE30, 0xFE4F) || in(cp, 0xFF00, 0xFF0F) ||
      in(cp, 0xFF1A, 0xFF20) || in(cp, 0xFF3B, 0xFF40) || in(cp, 0xFF5B, 0xFF65) ||
      in(cp, 0x1F000, 0x1FAFF) || cp == 0xFEFF) {
    return false;
  }
  return true;
}

bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
         cp == 0xA0;
}

void flush_token(std::string& current, Tokens& out) {
  std::size_t b = 0, e = current.size();
  while (b < e && current[b] == '\'') ++b;
  while (e > b && current[e - 1] == '\'') --e;
  if (e > b) out.emplace_back(current.substr(b, e - b));
  current.clear();
}

}  // namespace

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    auto d = decode(text, i);
    if (!d) return false;
    i += d->len;
  }
  return true;
}

std::string to_lower_utf8(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for_each_code_point(text, [&](char32_t cp) { encode(lower(cp), out); });
  return out;
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  for_each_code_point(text, [&](char32_t cp) {
    if (is_apostrophe(cp)) {
      current.push_back('\'');
    } else if (is_word_char(cp)) {
      encode(lower(cp), current);
    } else {
      flush_token(current, out);
    }
  });
  flush_token(current, out);
  return out;
}

std::vector<Tokens> tokenize_document(std::string_view document) {
  std::vector<Tokens> sentences;
  std::vector<std::pair<std::size_t, char32_t>> cps;
  std::size_t i = 0;
  while (i < document.size()) {
    auto d = decode(document, i);
    if (!d) throw Error("invalid UTF-8 at byte " + std::to_string(i));
    cps.emplace_back(i, d->cp);
    i += d->len;
  }
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    Tokens toks = tokenize(document.substr(start, end - start));
    if (!toks.empty()) sentences.push_back(std::move(toks));
    start = end;
  };
  for (std::size_t k = 0; k < cps.size(); ++k) {
    char32_t cp = cps[k].second;
    if (cp != '.' && cp != '!' && cp != '?') continue;
    if (k + 1 == cps.size() || is_space(cps[k + 1].second)) {
      std::size_t end = k + 1 < cps.size() ? cps[k + 1].first : document.size();
      emit(end);
    }
  }
  if (start < document.size()) emit(document.size());
  return sentences;
}

}  // namespace tempshift
