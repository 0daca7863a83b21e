#include "tempshift/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "tempshift/common.hpp"

namespace tempshift {
namespace {

// Neumaier's variant of Kahan summation.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + carry; }
};

void check_finite(const Vector& v, const std::string& what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error("non-finite component in " + what);
  }
}

}  // namespace

std::span<const double> EmbeddingTable::lookup(std::string_view token) const {
  if (auto it = entries_.find(token); it != entries_.end()) return it->second.mean;
  return zero_;
}

std::uint64_t EmbeddingTable::count(std::string_view token) const {
  auto it = entries_.find(token);
  return it == entries_.end() ? 0 : it->second.count;
}

void EmbeddingTable::set(std::string token, Vector mean, std::uint64_t count) {
  if (mean.size() != dim_) {
    throw Error("dimension mismatch for '" + token + "': expected " + std::to_string(dim_) +
                ", got " + std::to_string(mean.size()));
  }
  check_finite(mean, "'" + token + "'");
  entries_.insert_or_assign(std::move(token), Entry{std::move(mean), count});
}

EmbeddingTable average(std::span<const ContextualRecord> records, const std::string& snapshot_label,
                       std::size_t dimension) {
  if (dimension == 0 && !records.empty()) dimension = records.front().vector.size();
  struct Acc {
    std::vector<CompensatedSum> sums;
    std::uint64_t n = 0;
  };
  std::map<std::string, Acc, std::less<>> acc;
  for (const auto& rec : records) {
    if (rec.snapshot_label != snapshot_label) {
      throw Error("record for '" + rec.token + "' belongs to snapshot '" + rec.snapshot_label +
                  "', expected '" + snapshot_label + "'");
    }
    if (rec.vector.size() != dimension) {
      throw Error("dimension mismatch for '" + rec.token + "': expected " +
                  std::to_string(dimension) + ", got " + std::to_string(rec.vector.size()));
    }
    check_finite(rec.vector, "record for '" + rec.token + "'");
    auto& a = acc[rec.token];
    if (a.sums.empty()) a.sums.resize(dimension);
    for (std::size_t i = 0; i < dimension; ++i) a.sums[i].add(rec.vector[i]);
    ++a.n;
  }
  EmbeddingTable table(snapshot_label, dimension);
  for (auto& [token, a] : acc) {
    Vector mean(dimension);
    for (std::size_t i = 0; i < dimension; ++i) mean[i] = a.sums[i].value() / static_cast<double>(a.n);
    table.set(token, std::move(mean), a.n);
  }
  return table;
}

double cosine(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) return 0.0;
  if (x.size() != y.size()) {
    throw Error("cosine: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                std::to_string(y.size()) + ")");
  }
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) return 0.0;
  double c = dot / (std::sqrt(nx) * std::sqrt(ny));
  return std::clamp(c, -1.0, 1.0);
}

RecordFile load_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  const std::string name = path.string();
  std::string line;
  if (!std::getline(in, line)) throw FormatError(name, 1, "malformed header: empty file");
  auto head = split_fields(line);
  if (head.size() != 4 || head[0] != "EMB") {
    throw FormatError(name, 1, "malformed header: expected EMB<TAB>label<TAB>dimension<TAB>count");
  }
  RecordFile file;
  file.snapshot_label = std::string(head[1]);
  std::size_t expected = 0;
  try {
    file.dimension = std::stoull(std::string(head[2]));
    expected = std::stoull(std::string(head[3]));
  } catch (const std::exception&) {
    throw FormatError(name, 1, "malformed header: dimension and count must be integers");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != file.dimension + 1) {
      throw FormatError(name, lineno,
                        "dimension inconsistency: expected " + std::to_string(file.dimension) +
                            " values, got " + std::to_string(fields.size() - 1));
    }
    ContextualRecord rec{std::string(fields[0]), file.snapshot_label, Vector(file.dimension)};
    for (std::size_t i = 0; i < file.dimension; ++i) {
      double v;
      try {
        v = parse_double(fields[i + 1]);
      } catch (const Error& e) {
        throw FormatError(name, lineno, e.what());
      }
      if (!std::isfinite(v)) throw FormatError(name, lineno, "non-finite value");
      rec.vector[i] = v;
    }
    file.records.push_back(std::move(rec));
  }
  if (file.records.size() != expected) {
    throw FormatError(name, lineno,
                      "record count mismatch: header says " + std::to_string(expected) +
                          ", file has " + std::to_string(file.records.size()));
  }
  return file;
}

EmbeddingTable load_table(const std::filesystem::path& path) {
  RecordFile file = load_records(path);
  return average(file.records, file.snapshot_label, file.dimension);
}

namespace {

void write_row(std::ostream& out, const std::string& token, std::span<const double> v) {
  if (token.find_first_of("\t\n") != std::string::npos) {
    throw Error("token contains a tab or newline: '" + token + "'");
  }
  out << token;
  for (double x : v) out << '\t' << format_double(x, 9);
  out << '\n';
}

void write_header(std::ostream& out, const std::string& label, std::size_t dim, std::size_t n) {
  if (label.find_first_of("\t\n") != std::string::npos) throw Error("snapshot label contains a tab");
  out << "EMB\t" << label << '\t' << dim << '\t' << n << '\n';
}

}  // namespace

void save_table(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_header(out, table.label(), table.dimension(), table.size());
  for (const auto& [token, entry] : table.entries()) write_row(out, token, entry.mean);
}

void save_records(const RecordFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_header(out, file.snapshot_label, file.dimension, file.records.size());
  for (const auto& rec : file.records) {
    if (rec.vector.size() != file.dimension) throw Error("dimension mismatch for '" + rec.token + "'");
    write_row(out, rec.token, rec.vector);
  }
}

std::map<std::string, std::vector<std::size_t>> sample_occurrences(
    const Snapshot& snapshot, std::span<const std::string> tokens, std::size_t cap,
    std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> out;
  std::unordered_map<TokenId, std::pair<std::vector<std::size_t>*, std::uint64_t>> wanted;
  for (const auto& t : tokens) {
    auto& slot = out[t];
    if (auto id = snapshot.vocab().find(t)) wanted[*id] = {&slot, 0};
  }
  Rng rng(seed);
  std::vector<TokenId> seen;
  for (std::size_t i = 0; i < snapshot.n_sentences(); ++i) {
    auto sent = snapshot.sentence(i);
    seen.assign(sent.begin(), sent.end());
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (TokenId id : seen) {
      auto it = wanted.find(id);
      if (it == wanted.end()) continue;
      auto& [reservoir, n_seen] = it->second;
      ++n_seen;
      if (reservoir->size() < cap) {
        reservoir->push_back(i);
      } else if (cap > 0) {
        std::uint64_t j = uniform_index(rng, n_seen);
        if (j < cap) (*reservoir)[j] = i;
      }
    }
  }
  for (auto& [t, idx] : out) std::sort(idx.begin(), idx.end());
  return out;
}

}  // namespace tempshift
