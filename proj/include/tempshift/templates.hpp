#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tempshift/oracle.hpp"
#include "tempshift/tuples.hpp"

namespace tempshift {

enum class SlotKind { W, U, V, T1, T2 };

std::string_view placeholder(SlotKind kind);

struct Literal {
  std::string text;
  bool operator==(const Literal&) const = default;
};

struct Slot {
  SlotKind kind;
  bool operator==(const Slot&) const = default;
};

using Element = std::variant<Literal, Slot>;

enum class TemplateOrigin { Manual, Auto };

/// Literal text interleaved with typed slots. Literal text is kept verbatim so
/// filling preserves the author's casing and punctuation.
struct Template {
  std::vector<Element> elements;
  TemplateOrigin origin = TemplateOrigin::Manual;
  std::optional<double> loglik;

  std::vector<SlotKind> slots() const;
  bool has_slot(SlotKind kind) const;

  /// Placeholder form, e.g. "<u> in <T1> <v> in <T2>", whitespace collapsed.
  std::string to_string() const;

  /// to_string() lowercased, used to collapse near-duplicates.
  std::string normalized() const;
};

/// Parses text containing <w> <u> <v> <T1> <T2> placeholders (angle brackets
/// or U+27E8/U+27E9, names case-insensitive). <w> may repeat; every other kind
/// appears at most once.
Template parse_template(std::string_view text);

struct FillValues {
  std::string w, u, v, t1, t2;
};

/// Substitutes the slots and collapses whitespace runs to single spaces.
std::string fill(const Template& t, const FillValues& values);
std::string fill(const Template& t, const ScoredTuple& tuple, std::string_view t1_label,
                 std::string_view t2_label);

/// Inverse of fill for known substitution values: re-parses a filled string by
/// locating the values, left to right, in the template's slot order.
Template unfill(std::string_view filled, const FillValues& values,
                std::span<const SlotKind> slot_order);

/// The tokenized literal runs Z1..Z4 of a template in the automatic form
/// Z1 <u> Z2 <T1> Z3 <v> Z4 <T2>; nullopt when the template has another shape.
std::optional<std::array<Tokens, 4>> auto_slots(const Template& t);

Template make_auto_template(const std::array<Tokens, 4>& z, std::optional<double> loglik = {});

/// The pair of context sentences placed around a tuple during search:
/// s1 from C1 contains u, s2 from C2 contains v.
struct ContextPair {
  Tokens s1;
  Tokens s2;
};

/// For each tuple, the shortest sentence containing the anchor in each
/// snapshot (ties: lexicographically smallest rendering).
std::vector<ContextPair> select_context_pairs(const TupleSet& tuples, const Snapshot& c1,
                                              const Snapshot& c2);

struct SearchOptions {
  std::size_t beam_width = 100;
  std::size_t max_slot_len = 5;
  std::size_t top_n = 3;
  /// Candidate slot tokens; defaults to the oracle vocabulary (minus <unk>).
  std::vector<std::string> vocabulary;
  std::size_t threads = 1;
};

/// Beam search over the fillings of Z1..Z4 in
///   S1 Z1 u Z2 T1 Z3 v Z4 T2 S2
/// scoring a filling by the log-likelihood of its slot tokens summed over all
/// tuples. Slots are decoded left to right one token at a time; a slot closes
/// when the summed score of the next boundary token (u, T1, v, T2) is at least
/// the best vocabulary continuation, or when it reaches max_slot_len.
/// Returns up to top_n distinct templates ordered by log-likelihood.
std::vector<Template> search_templates(const TupleSet& tuples, const LikelihoodOracle& oracle,
                                       std::span<const ContextPair> contexts,
                                       const std::string& t1_label, const std::string& t2_label,
                                       const SearchOptions& options = {});

/// Sum over tuples and slot tokens of log P(token | full left context).
double aggregate_loglik(const Template& t, const TupleSet& tuples, const LikelihoodOracle& oracle,
                        std::span<const ContextPair> contexts, const std::string& t1_label,
                        const std::string& t2_label);

/// One template per line in placeholder syntax; auto templates carry
/// `<TAB>loglik`. Blank lines and lines starting with '#' are skipped on read.
void write_templates(std::ostream& out, std::span<const Template> templates);
std::vector<Template> read_templates(std::istream& in, const std::string& source_name = "<templates>");

}  // namespace tempshift
