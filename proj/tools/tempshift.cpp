#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tempshift/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tempshift;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Overrides {
  std::string config;
  std::optional<std::string> c1, c2, t1, t2, format, method, templates, manual, emb1, emb2, out;
  std::optional<std::size_t> k, m, min_words, beam_width, max_slot_len, top_n, masks, threads;
  std::optional<std::uint64_t> min_anchor_freq, split_seed, mask_seed;
  std::optional<std::string> oracle_cmd, oracle_socket;
  bool anchors_only = false;
};

void add_pipeline_options(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "JSON config file; flags override its fields");
  app->add_option("--c1", o.c1, "corpus file for the first snapshot");
  app->add_option("--c2", o.c2, "corpus file for the second snapshot");
  app->add_option("--t1", o.t1, "label of the first snapshot");
  app->add_option("--t2", o.t2, "label of the second snapshot");
  app->add_option("--format", o.format, "input format: lines or records");
  app->add_option("--method", o.method, "tuple method: freq, div or cont");
  app->add_option("--templates", o.templates, "template source: manual or auto");
  app->add_option("--manual-templates", o.manual, "manual template file");
  app->add_option("--emb1", o.emb1, "embedding table for the first snapshot");
  app->add_option("--emb2", o.emb2, "embedding table for the second snapshot");
  app->add_option("-k,--k", o.k, "number of tuples (suggested: 500 1000 2000 5000 10000)");
  app->add_option("-m,--m", o.m, "anchors per pivot and snapshot");
  app->add_option("--min-anchor-freq", o.min_anchor_freq, "minimum anchor sentence frequency");
  app->add_option("--min-words", o.min_words, "drop documents with fewer words");
  app->add_option("--beam-width", o.beam_width, "template search beam width");
  app->add_option("--max-slot-len", o.max_slot_len, "template search slot length cap");
  app->add_option("--top-n", o.top_n, "automatic templates kept");
  app->add_option("--oracle-cmd", o.oracle_cmd, "external oracle command line (split on spaces)");
  app->add_option("--oracle-socket", o.oracle_socket, "external oracle Unix socket");
  app->add_option("--masks-per-prompt", o.masks, "masked instances per prompt");
  app->add_flag("--anchors-only", o.anchors_only, "mask only pivot and anchor words");
  app->add_option("--split-seed", o.split_seed, "seed of the train/dev/test split");
  app->add_option("--mask-seed", o.mask_seed, "seed of the mask positions");
  app->add_option("-j,--threads", o.threads, "worker threads");
  app->add_option("-o,--out", o.out, "output directory");
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (o.c1) c.c1 = *o.c1;
  if (o.c2) c.c2 = *o.c2;
  if (o.t1) c.t1_label = *o.t1;
  if (o.t2) c.t2_label = *o.t2;
  if (o.format) c.input_format = parse_input_format(*o.format);
  if (o.method) c.method = parse_method(*o.method);
  if (o.templates) {
    if (*o.templates == "manual") {
      c.template_source = TemplateSource::Manual;
    } else if (*o.templates == "auto") {
      c.template_source = TemplateSource::Auto;
    } else {
      throw ConfigError("--templates must be manual or auto");
    }
  }
  if (o.manual) c.manual_templates = *o.manual;
  if (o.emb1) c.embeddings_t1 = *o.emb1;
  if (o.emb2) c.embeddings_t2 = *o.emb2;
  if (o.k) c.k = *o.k;
  if (o.m) c.m = *o.m;
  if (o.min_anchor_freq) c.min_anchor_freq = *o.min_anchor_freq;
  if (o.min_words) c.min_words = *o.min_words;
  if (o.beam_width) c.beam_width = *o.beam_width;
  if (o.max_slot_len) c.max_slot_len = *o.max_slot_len;
  if (o.top_n) c.top_n = *o.top_n;
  if (o.oracle_cmd) {
    c.oracle.kind = OracleConfig::Kind::Command;
    c.oracle.command.clear();
    std::istringstream words(*o.oracle_cmd);
    for (std::string w; words >> w;) c.oracle.command.push_back(w);
  }
  if (o.oracle_socket) {
    c.oracle.kind = OracleConfig::Kind::Socket;
    c.oracle.socket = *o.oracle_socket;
  }
  if (o.masks) c.masks_per_prompt = *o.masks;
  if (o.anchors_only) c.anchors_only = true;
  if (o.split_seed) c.split_seed = *o.split_seed;
  if (o.mask_seed) c.mask_seed = *o.mask_seed;
  if (o.threads) c.threads = *o.threads;
  if (o.out) c.output_dir = *o.out;
  return c;
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mine temporal shift tuples, induce templates and emit masked training prompts."};
  app.require_subcommand(1);

  Overrides o;
  struct Stage {
    const char* name;
    const char* help;
  };
  const std::vector<Stage> stages{
      {"ingest", "load, deduplicate, filter and split both corpora"},
      {"stats", "write frequency and co-occurrence tables"},
      {"tuples", "select pivots, anchors and the top-k tuples"},
      {"templates", "write manual or searched templates"},
      {"prompts", "fill the templates with the tuples"},
      {"emit-train", "write the masked training file"},
      {"all", "run every stage and write the manifest"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& s : stages) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_pipeline_options(sub, o);
    subs.push_back(sub);
  }

  std::string results, chart = "report.svg", table;
  auto* report = app.add_subcommand("report", "chart perplexity against k from a results TSV");
  report->add_option("results", results, "TSV: dataset model method template k perplexity")->required();
  report->add_option("-o,--out", chart, "SVG chart path");
  report->add_option("--table", table, "pivot table TSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (report->parsed()) {
      render_report(results, chart, table);
      std::cout << chart << '\n';
      return 0;
    }
    const PipelineConfig config = resolve(o);
    if (subs.back()->parsed()) {
      const Manifest m = run_pipeline(config, warn);
      std::cout << (config.output_dir / "manifest.json").string() << '\n';
      if (m.template_cache_hit) std::cerr << "templates served from cache\n";
      return 0;
    }
    Pipeline p(config, warn);
    const fs::path& dir = config.output_dir;
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "ingest") {
      p.write_splits(dir / "splits");
      std::cout << (dir / "splits").string() << '\n';
    } else if (name == "stats") {
      p.write_stats(dir / "stats");
      std::cout << (dir / "stats").string() << '\n';
    } else if (name == "tuples") {
      p.write_pivots(dir / "pivots.tsv");
      p.write_tuples(dir / "tuples.tsv");
      std::cout << (dir / "tuples.tsv").string() << '\n';
    } else if (name == "templates") {
      p.write_templates(dir / "templates.txt");
      std::cout << (dir / "templates.txt").string() << '\n';
    } else if (name == "prompts") {
      p.write_prompts(dir / "prompts.txt");
      std::cout << (dir / "prompts.txt").string() << '\n';
    } else if (name == "emit-train") {
      p.write_training(dir / "train.jsonl");
      std::cout << (dir / "train.jsonl").string() << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
}
