#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "tempshift/common.hpp"
#include "tempshift/corpus.hpp"
#include "tempshift/embeddings.hpp"

namespace fixtures {

using tempshift::Tokens;

/// Sentences built from a large distractor vocabulary, so no distractor word
/// comes close to the planted words in frequency.
inline std::vector<Tokens> distractors(std::size_t n, std::uint64_t seed) {
  tempshift::Rng rng(seed);
  std::vector<Tokens> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tokens s;
    const std::size_t len = 5 + tempshift::uniform_index(rng, 4);
    for (std::size_t j = 0; j < len; ++j) {
      s.push_back("d" + std::to_string(tempshift::uniform_index(rng, 400)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// `mask` appears with `hide` in 20 sentences of C1 and with `vaccine` in 20
/// sentences of C2, each side padded with 200 distractor sentences. A
/// once-only tag keeps the planted sentences distinct under deduplication.
struct PlantedShift {
  std::vector<Tokens> c1, c2;
};

inline PlantedShift planted_shift() {
  PlantedShift p;
  auto planted = [](const std::string& anchor, int i) {
    return Tokens{"mask", anchor, "tag" + std::to_string(i)};
  };
  p.c1 = distractors(200, 11);
  p.c2 = distractors(200, 12);
  for (int i = 0; i < 20; ++i) {
    p.c1.insert(p.c1.begin() + 10 * i, planted("hide", i));
    p.c2.insert(p.c2.begin() + 10 * i, planted("vaccine", i));
  }
  return p;
}

/// One sentence per document.
inline tempshift::Snapshot snapshot(const std::string& label, const std::vector<Tokens>& sentences) {
  std::vector<std::vector<Tokens>> docs;
  for (const auto& s : sentences) docs.push_back({s});
  return tempshift::Snapshot::from_documents(label, docs);
}

/// Writes one sentence per line, each ending with a period.
inline void write_lines(const std::filesystem::path& path, const std::vector<Tokens>& sentences) {
  std::ofstream out(path);
  for (const auto& s : sentences) out << tempshift::join(s, " ") << ".\n";
}

/// Writes the planted-shift pair as c1.txt and c2.txt under dir.
inline std::pair<std::filesystem::path, std::filesystem::path> write_planted(const std::filesystem::path& dir) {
  const auto p = planted_shift();
  write_lines(dir / "c1.txt", p.c1);
  write_lines(dir / "c2.txt", p.c2);
  return {dir / "c1.txt", dir / "c2.txt"};
}

/// mask, hide and vaccine on orthogonal axes: mask and hide share e0 in the
/// first table, mask and vaccine share e1 in the second.
inline std::pair<tempshift::EmbeddingTable, tempshift::EmbeddingTable> orthogonal_tables() {
  tempshift::EmbeddingTable e1("2010", 3), e2("2020", 3);
  e1.set("mask", {1, 0, 0}, 1);
  e1.set("hide", {1, 0, 0}, 1);
  e1.set("vaccine", {0, 1, 0}, 1);
  e2.set("mask", {0, 1, 0}, 1);
  e2.set("hide", {1, 0, 0}, 1);
  e2.set("vaccine", {0, 1, 0}, 1);
  return {e1, e2};
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tempshift_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
