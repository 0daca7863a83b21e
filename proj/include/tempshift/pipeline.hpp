#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tempshift/corpus.hpp"
#include "tempshift/oracle.hpp"
#include "tempshift/prompts.hpp"
#include "tempshift/templates.hpp"
#include "tempshift/tuples.hpp"

namespace tempshift {

/// Suggested values of k.
inline constexpr std::array<std::size_t, 5> kGridK{500, 1000, 2000, 5000, 10000};

/// The three hand-written templates offered by default for the manual path.
std::vector<Template> builtin_manual_templates();

enum class TemplateSource { Manual, Auto };

struct OracleConfig {
  enum class Kind { NGram, Command, Socket };
  Kind kind = Kind::NGram;
  std::size_t order = 3;
  double alpha = 0.1;
  std::vector<std::string> command;
  std::filesystem::path socket;
  std::int64_t timeout_ms = 30000;
  int max_retries = 0;
};

struct PipelineConfig {
  std::filesystem::path c1, c2;
  std::string t1_label = "T1", t2_label = "T2";
  InputFormat input_format = InputFormat::Lines;

  Method method = Method::Freq;
  TemplateSource template_source = TemplateSource::Manual;
  /// Manual template file; the built-in templates are used when empty.
  std::filesystem::path manual_templates;
  /// Embedding exchange files for the context method.
  std::filesystem::path embeddings_t1, embeddings_t2;

  std::size_t k = 1000;
  std::size_t m = 10;
  std::uint64_t min_anchor_freq = 5;
  std::size_t min_words = 10;
  double train_fraction = 0.7, dev_fraction = 0.1, test_fraction = 0.2;

  std::size_t beam_width = 100;
  std::size_t max_slot_len = 5;
  std::size_t top_n = 3;
  OracleConfig oracle;

  std::size_t masks_per_prompt = 1;
  bool anchors_only = false;

  std::uint64_t split_seed = 123;
  std::uint64_t mask_seed = 123;

  std::size_t threads = 1;
  std::filesystem::path output_dir = "out";

  /// Throws ConfigError on any invalid field or missing input file.
  void validate() const;
};

/// Reads a JSON config. Relative paths resolve against the file's directory.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const std::string& json_text,
                                const std::filesystem::path& base_dir = {});
std::string config_to_json(const PipelineConfig& config);

/// Digest of every field that can change an artifact (excludes output_dir and threads).
std::string config_hash(const PipelineConfig& config);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// A stage failure, naming the stage and the artifact it was producing.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::filesystem::path& artifact,
             const std::string& what)
      : Error("stage '" + stage + "' (" + artifact.string() + "): " + what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ArtifactRecord {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct Manifest {
  std::string config_hash;
  std::uint64_t split_seed = 0;
  std::uint64_t mask_seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // name, sha256
  std::vector<ArtifactRecord> artifacts;
  bool template_cache_hit = false;

  std::string to_json() const;
};

/// Stage-by-stage driver. Each stage is computed on first use and reused.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config, WarningSink warn = {});
  ~Pipeline();

  const PipelineConfig& config() const noexcept { return config_; }

  const SplitResult& split1();
  const SplitResult& split2();
  const CorpusStats& stats1();
  const CorpusStats& stats2();
  const std::vector<AnchorSet>& anchor_sets();
  const TupleSet& tuples();
  const std::vector<Template>& templates();
  const std::vector<Prompt>& prompts();
  const std::vector<MaskedInstance>& instances();

  /// True when the last templates() call was served from the cache.
  bool template_cache_hit() const noexcept { return cache_hit_; }

  void write_splits(const std::filesystem::path& dir);
  void write_stats(const std::filesystem::path& dir);
  void write_pivots(const std::filesystem::path& path);
  void write_tuples(const std::filesystem::path& path);
  void write_templates(const std::filesystem::path& path);
  void write_prompts(const std::filesystem::path& path);
  void write_training(const std::filesystem::path& path);

 private:
  std::unique_ptr<LikelihoodOracle> make_oracle();
  std::string template_cache_key();

  PipelineConfig config_;
  WarningSink warn_;
  std::optional<SplitResult> split1_, split2_;
  std::optional<CorpusStats> stats1_, stats2_;
  std::optional<std::vector<AnchorSet>> anchors_;
  std::optional<TupleSet> tuples_;
  std::optional<std::vector<Template>> templates_;
  std::optional<std::vector<Prompt>> prompts_;
  std::optional<std::vector<MaskedInstance>> instances_;
  bool cache_hit_ = false;
};

/// Runs every stage and writes pivots.tsv, tuples.tsv, templates.txt,
/// prompts.txt, train.jsonl and manifest.json into config.output_dir.
Manifest run_pipeline(const PipelineConfig& config, const WarningSink& warn = {});

struct ResultsRow {
  std::string dataset, model, method, template_source;
  std::size_t k = 0;
  double perplexity = 0.0;
};

/// TSV `dataset model method template k perplexity`; a first line starting
/// with "dataset" is treated as a header.
std::vector<ResultsRow> read_results(std::istream& in, const std::string& source_name = "<results>");

struct Report {
  std::string svg;
  std::string table;
  std::size_t series = 0;
  std::size_t points = 0;
};

/// Perplexity-vs-k line chart with one series per (method, template), plus a
/// TSV pivot table with one column per k.
Report render_report(const std::vector<ResultsRow>& rows);
void render_report(const std::filesystem::path& results, const std::filesystem::path& chart,
                   const std::filesystem::path& table);

}  // namespace tempshift
