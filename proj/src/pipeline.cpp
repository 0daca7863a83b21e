#include "tempshift/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <charconv>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>
#include <openssl/evp.h>

#include "tempshift/common.hpp"

namespace tempshift {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Template> builtin_manual_templates() {
  return {
      parse_template("<w> is associated with <u> in <T1>, whereas it is associated with <v> in <T2>."),
      parse_template("Unlike in <T1>, where <u> was associated with <w>, in <T2> <v> is associated with <w>."),
      parse_template("The meaning of <w> changed from <T1> to <T2> respectively from <u> to <v>."),
  };
}

// ---------------------------------------------------------------------------
// Digests

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << bytes;
    if (!out.flush()) throw Error("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string_view to_string(TemplateSource s) { return s == TemplateSource::Manual ? "manual" : "auto"; }

std::string_view to_string(OracleConfig::Kind k) {
  switch (k) {
    case OracleConfig::Kind::NGram: return "ngram";
    case OracleConfig::Kind::Command: return "command";
    case OracleConfig::Kind::Socket: return "socket";
  }
  return "?";
}

std::string_view to_string(InputFormat f) { return f == InputFormat::Lines ? "lines" : "records"; }

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void read_path(const json& j, const char* key, fs::path& out, const fs::path& base) {
  std::string s;
  read_key(j, key, s);
  if (s.empty()) return;
  fs::path p(s);
  out = p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

PipelineConfig config_from_json(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"c1", "c2", "t1_label", "t2_label", "input_format", "method", "templates",
                  "manual_templates", "embeddings", "k", "m", "min_anchor_freq", "min_words",
                  "split", "beam_width", "max_slot_len", "top_n", "oracle", "masks_per_prompt",
                  "anchors_only", "seeds", "threads", "output_dir"},
                 "config");
  PipelineConfig c;
  read_path(j, "c1", c.c1, base_dir);
  read_path(j, "c2", c.c2, base_dir);
  read_key(j, "t1_label", c.t1_label);
  read_key(j, "t2_label", c.t2_label);
  std::string s;
  if (j.contains("input_format")) {
    read_key(j, "input_format", s);
    c.input_format = parse_input_format(s);
  }
  if (j.contains("method")) {
    read_key(j, "method", s);
    c.method = parse_method(s);
  }
  if (j.contains("templates")) {
    read_key(j, "templates", s);
    if (s == "manual") {
      c.template_source = TemplateSource::Manual;
    } else if (s == "auto") {
      c.template_source = TemplateSource::Auto;
    } else {
      throw ConfigError("templates must be 'manual' or 'auto', got '" + s + "'");
    }
  }
  read_path(j, "manual_templates", c.manual_templates, base_dir);
  if (j.contains("embeddings")) {
    const auto& e = j.at("embeddings");
    if (!e.is_object()) throw ConfigError("'embeddings' must be an object with t1/t2 paths");
    reject_unknown(e, {"t1", "t2"}, "embeddings");
    read_path(e, "t1", c.embeddings_t1, base_dir);
    read_path(e, "t2", c.embeddings_t2, base_dir);
  }
  read_key(j, "k", c.k);
  read_key(j, "m", c.m);
  read_key(j, "min_anchor_freq", c.min_anchor_freq);
  read_key(j, "min_words", c.min_words);
  if (j.contains("split")) {
    const auto& sp = j.at("split");
    if (!sp.is_object()) throw ConfigError("'split' must be an object");
    reject_unknown(sp, {"train", "dev", "test"}, "split");
    read_key(sp, "train", c.train_fraction);
    read_key(sp, "dev", c.dev_fraction);
    read_key(sp, "test", c.test_fraction);
  }
  read_key(j, "beam_width", c.beam_width);
  read_key(j, "max_slot_len", c.max_slot_len);
  read_key(j, "top_n", c.top_n);
  if (j.contains("oracle")) {
    const auto& o = j.at("oracle");
    if (!o.is_object()) throw ConfigError("'oracle' must be an object");
    reject_unknown(o, {"kind", "order", "alpha", "command", "path", "timeout_ms", "max_retries"},
                   "oracle");
    std::string kind = "ngram";
    read_key(o, "kind", kind);
    if (kind == "ngram") {
      c.oracle.kind = OracleConfig::Kind::NGram;
    } else if (kind == "command") {
      c.oracle.kind = OracleConfig::Kind::Command;
    } else if (kind == "socket") {
      c.oracle.kind = OracleConfig::Kind::Socket;
    } else {
      throw ConfigError("oracle.kind must be ngram, command or socket, got '" + kind + "'");
    }
    read_key(o, "order", c.oracle.order);
    read_key(o, "alpha", c.oracle.alpha);
    read_key(o, "command", c.oracle.command);
    read_path(o, "path", c.oracle.socket, base_dir);
    read_key(o, "timeout_ms", c.oracle.timeout_ms);
    read_key(o, "max_retries", c.oracle.max_retries);
  }
  read_key(j, "masks_per_prompt", c.masks_per_prompt);
  read_key(j, "anchors_only", c.anchors_only);
  if (j.contains("seeds")) {
    const auto& sd = j.at("seeds");
    if (!sd.is_object()) throw ConfigError("'seeds' must be an object");
    reject_unknown(sd, {"split", "mask"}, "seeds");
    read_key(sd, "split", c.split_seed);
    read_key(sd, "mask", c.mask_seed);
  }
  read_key(j, "threads", c.threads);
  read_path(j, "output_dir", c.output_dir, base_dir);
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(text, path.parent_path());
}

namespace {

json config_json(const PipelineConfig& c, bool for_hash) {
  json j;
  j["c1"] = c.c1.string();
  j["c2"] = c.c2.string();
  j["t1_label"] = c.t1_label;
  j["t2_label"] = c.t2_label;
  j["input_format"] = to_string(c.input_format);
  j["method"] = to_string(c.method);
  j["templates"] = to_string(c.template_source);
  j["manual_templates"] = c.manual_templates.string();
  j["embeddings"] = {{"t1", c.embeddings_t1.string()}, {"t2", c.embeddings_t2.string()}};
  j["k"] = c.k;
  j["m"] = c.m;
  j["min_anchor_freq"] = c.min_anchor_freq;
  j["min_words"] = c.min_words;
  j["split"] = {{"train", c.train_fraction}, {"dev", c.dev_fraction}, {"test", c.test_fraction}};
  j["beam_width"] = c.beam_width;
  j["max_slot_len"] = c.max_slot_len;
  j["top_n"] = c.top_n;
  j["oracle"] = {{"kind", to_string(c.oracle.kind)},   {"order", c.oracle.order},
                 {"alpha", c.oracle.alpha},            {"command", c.oracle.command},
                 {"path", c.oracle.socket.string()},   {"timeout_ms", c.oracle.timeout_ms},
                 {"max_retries", c.oracle.max_retries}};
  j["masks_per_prompt"] = c.masks_per_prompt;
  j["anchors_only"] = c.anchors_only;
  j["seeds"] = {{"split", c.split_seed}, {"mask", c.mask_seed}};
  if (!for_hash) {
    j["threads"] = c.threads;
    j["output_dir"] = c.output_dir.string();
  }
  return j;
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + " path is not set");
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw ConfigError(what + " not found: " + p.string());
}

}  // namespace

std::string config_to_json(const PipelineConfig& config) { return config_json(config, false).dump(2); }

std::string config_hash(const PipelineConfig& config) {
  return sha256_hex(config_json(config, true).dump());
}

void PipelineConfig::validate() const {
  require_file(c1, "C1 corpus");
  require_file(c2, "C2 corpus");
  if (t1_label.empty() || t2_label.empty()) throw ConfigError("snapshot labels must be non-empty");
  if (t1_label == t2_label) throw ConfigError("snapshot labels must differ");
  if (k < 1) throw ConfigError("k must be a positive integer");
  if (m < 1) throw ConfigError("m must be >= 1");
  SplitSpec{train_fraction, dev_fraction, test_fraction, split_seed}.validate();
  if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
  if (max_slot_len < 1) throw ConfigError("max_slot_len must be >= 1");
  if (top_n < 1) throw ConfigError("top_n must be >= 1");
  if (masks_per_prompt < 1) throw ConfigError("masks_per_prompt must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (method == Method::Cont) {
    if (embeddings_t1.empty()) throw ConfigError("missing embedding table for snapshot T1");
    if (embeddings_t2.empty()) throw ConfigError("missing embedding table for snapshot T2");
    require_file(embeddings_t1, "embedding table for snapshot T1");
    require_file(embeddings_t2, "embedding table for snapshot T2");
  }
  if (template_source == TemplateSource::Manual && !manual_templates.empty()) {
    require_file(manual_templates, "manual template file");
  }
  if (template_source == TemplateSource::Auto) {
    switch (oracle.kind) {
      case OracleConfig::Kind::NGram:
        if (oracle.order < 1) throw ConfigError("oracle.order must be >= 1");
        if (!(oracle.alpha > 0.0)) throw ConfigError("oracle.alpha must be > 0");
        break;
      case OracleConfig::Kind::Command:
        if (oracle.command.empty()) throw ConfigError("oracle.command must name a program");
        break;
      case OracleConfig::Kind::Socket:
        if (oracle.socket.empty()) throw ConfigError("oracle.path must name a socket");
        break;
    }
    if (oracle.timeout_ms < 1) throw ConfigError("oracle.timeout_ms must be >= 1");
    if (oracle.max_retries < 0) throw ConfigError("oracle.max_retries must be >= 0");
  }
}

std::string Manifest::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["seeds"] = {{"split", split_seed}, {"mask", mask_seed}};
  json in = json::array();
  for (const auto& [name, digest] : inputs) in.push_back({{"name", name}, {"sha256", digest}});
  j["inputs"] = in;
  json arts = json::array();
  for (const auto& a : artifacts) {
    arts.push_back({{"name", a.name}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  }
  j["artifacts"] = arts;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Pipeline stages

namespace {

template <typename F>
auto in_stage(const std::string& stage, const fs::path& artifact, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, artifact, e.what());
  }
}

std::size_t tuple_count(const AnchorSet& a) {
  std::set<std::string_view> u;
  for (const auto& x : a.t1) u.insert(x.token);
  std::size_t shared = 0;
  for (const auto& x : a.t2) shared += u.count(x.token);
  return a.t1.size() * a.t2.size() - shared;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, WarningSink warn)
    : config_(std::move(config)), warn_(std::move(warn)) {
  config_.validate();
}

Pipeline::~Pipeline() = default;

const SplitResult& Pipeline::split1() {
  if (!split1_) {
    split1_ = in_stage("ingest", config_.c1, [&] {
      auto snap = load_snapshot(config_.c1, config_.input_format, config_.t1_label);
      return split(preprocess(snap, config_.min_words),
                   SplitSpec{config_.train_fraction, config_.dev_fraction, config_.test_fraction,
                             config_.split_seed});
    });
  }
  return *split1_;
}

const SplitResult& Pipeline::split2() {
  if (!split2_) {
    split2_ = in_stage("ingest", config_.c2, [&] {
      auto snap = load_snapshot(config_.c2, config_.input_format, config_.t2_label);
      return split(preprocess(snap, config_.min_words),
                   SplitSpec{config_.train_fraction, config_.dev_fraction, config_.test_fraction,
                             config_.split_seed});
    });
  }
  return *split2_;
}

const CorpusStats& Pipeline::stats1() {
  if (!stats1_) stats1_ = count(split1().train, config_.threads);
  return *stats1_;
}

const CorpusStats& Pipeline::stats2() {
  if (!stats2_) stats2_ = count(split2().train, config_.threads);
  return *stats2_;
}

const std::vector<AnchorSet>& Pipeline::anchor_sets() {
  if (anchors_) return *anchors_;
  const auto& s1 = stats1();
  const auto& s2 = stats2();
  anchors_ = in_stage("tuples", config_.output_dir / "pivots.tsv", [&] {
    const AnchorOptions opts{config_.m, config_.min_anchor_freq};
    const auto pivots = select_pivots(s1.freq, s2.freq, std::max<std::size_t>(1, s1.vocab().size()));
    std::vector<AnchorSet> sets;
    if (config_.method == Method::Freq) {
      // Pivots in score order until their anchor pairs reach k tuples.
      std::size_t produced = 0;
      for (const auto& p : pivots) {
        if (produced >= config_.k) break;
        sets.push_back(build_anchor_set(p.token, s1, s2, opts));
        produced += tuple_count(sets.back());
      }
    } else {
      // A pool of 5x the pivots needed to fill k tuples, re-ranked by the method.
      const std::size_t per_pivot = config_.m * config_.m;
      const std::size_t pool = 5 * ((config_.k + per_pivot - 1) / per_pivot);
      for (std::size_t i = 0; i < pivots.size() && i < pool; ++i) {
        sets.push_back(build_anchor_set(pivots[i].token, s1, s2, opts));
      }
    }
    return sets;
  });
  return *anchors_;
}

const TupleSet& Pipeline::tuples() {
  if (tuples_) return *tuples_;
  const auto& sets = anchor_sets();
  tuples_ = in_stage("tuples", config_.output_dir / "tuples.tsv", [&] {
    TupleSet out;
    switch (config_.method) {
      case Method::Freq: out = build_freq_tuples(sets, config_.k); break;
      case Method::Div: out = build_div_tuples(sets, config_.k); break;
      case Method::Cont: {
        const auto e1 = load_table(config_.embeddings_t1);
        const auto e2 = load_table(config_.embeddings_t2);
        if (e1.label() != config_.t1_label) {
          throw ConfigError("embedding table " + config_.embeddings_t1.string() + " is labelled '" +
                            e1.label() + "', expected '" + config_.t1_label + "'");
        }
        if (e2.label() != config_.t2_label) {
          throw ConfigError("embedding table " + config_.embeddings_t2.string() + " is labelled '" +
                            e2.label() + "', expected '" + config_.t2_label + "'");
        }
        const auto candidates = build_freq_tuples(sets, std::numeric_limits<std::size_t>::max());
        out = build_cont_tuples(candidates, e1, e2, config_.k, config_.threads);
        break;
      }
    }
    if (out.empty()) {
      throw Error("no tuples could be formed; the snapshots share no pivot with frequent anchors");
    }
    return out;
  });
  return *tuples_;
}

std::unique_ptr<LikelihoodOracle> Pipeline::make_oracle() {
  const auto& o = config_.oracle;
  switch (o.kind) {
    case OracleConfig::Kind::NGram: {
      const std::array<const Snapshot*, 2> snaps{&split1().train, &split2().train};
      return std::make_unique<NGramLM>(train_ngram(snaps, o.order, o.alpha));
    }
    case OracleConfig::Kind::Command:
      return std::make_unique<ExternalOracle>(
          ProcessChannel::spawn(o.command),
          ExternalOracle::Options{std::chrono::milliseconds(o.timeout_ms), o.max_retries});
    case OracleConfig::Kind::Socket:
      return std::make_unique<ExternalOracle>(
          connect_unix_socket(o.socket),
          ExternalOracle::Options{std::chrono::milliseconds(o.timeout_ms), o.max_retries});
  }
  throw ConfigError("unknown oracle kind");
}

std::string Pipeline::template_cache_key() {
  std::ostringstream tsv;
  write_tuples_tsv(tsv, tuples());
  const json cfg = config_json(config_, true);
  json key;
  key["tuples"] = sha256_hex(tsv.str());
  key["c1"] = sha256_file(config_.c1);
  key["c2"] = sha256_file(config_.c2);
  for (const char* field : {"t1_label", "t2_label", "input_format", "min_words", "split", "seeds",
                            "beam_width", "max_slot_len", "top_n", "oracle"}) {
    key[field] = cfg.at(field);
  }
  return sha256_hex(key.dump());
}

const std::vector<Template>& Pipeline::templates() {
  if (templates_) return *templates_;
  const fs::path artifact = config_.output_dir / "templates.txt";
  if (config_.template_source == TemplateSource::Manual) {
    templates_ = in_stage("templates", artifact, [&] {
      std::vector<Template> ts;
      if (config_.manual_templates.empty()) {
        ts = builtin_manual_templates();
      } else {
        std::ifstream in(config_.manual_templates);
        if (!in) throw Error("cannot open " + config_.manual_templates.string());
        ts = read_templates(in, config_.manual_templates.string());
      }
      if (ts.empty()) throw Error("no templates in " + config_.manual_templates.string());
      for (const auto& t : ts) {
        if (t.slots().empty() && warn_) warn_("template has no slots: " + t.to_string());
      }
      return ts;
    });
    return *templates_;
  }
  const auto& tset = tuples();
  templates_ = in_stage("templates", artifact, [&] {
    const fs::path cache = config_.output_dir / "cache" / ("templates-" + template_cache_key() + ".txt");
    if (fs::exists(cache)) {
      std::ifstream in(cache);
      auto ts = read_templates(in, cache.string());
      if (!ts.empty()) {
        cache_hit_ = true;
        return ts;
      }
    }
    cache_hit_ = false;
    const auto contexts = select_context_pairs(tset, split1().train, split2().train);
    auto oracle = make_oracle();
    SearchOptions opts;
    opts.beam_width = config_.beam_width;
    opts.max_slot_len = config_.max_slot_len;
    opts.top_n = config_.top_n;
    opts.threads = config_.threads;
    if (!oracle->info().vocabulary_known) {
      // External oracles do not publish a vocabulary; slot tokens come from the training text.
      std::set<std::string> words;
      for (const Snapshot* s : {&split1().train, &split2().train}) {
        for (const auto& w : s->vocab().tokens()) words.insert(w);
      }
      opts.vocabulary.assign(words.begin(), words.end());
    }
    auto ts = search_templates(tset, *oracle, contexts, config_.t1_label, config_.t2_label, opts);
    if (ts.empty()) throw Error("template search produced no template");
    std::ostringstream out;
    tempshift::write_templates(out, ts);
    write_file(cache, out.str());
    return ts;
  });
  return *templates_;
}

const std::vector<Prompt>& Pipeline::prompts() {
  if (!prompts_) {
    const auto& tset = tuples();
    const auto& ts = templates();
    prompts_ = in_stage("prompts", config_.output_dir / "prompts.txt", [&] {
      return generate_prompts(tset, ts, config_.t1_label, config_.t2_label);
    });
  }
  return *prompts_;
}

const std::vector<MaskedInstance>& Pipeline::instances() {
  if (!instances_) {
    const auto& ps = prompts();
    instances_ = in_stage("emit-train", config_.output_dir / "train.jsonl", [&] {
      return make_instances(ps, MaskOptions{config_.masks_per_prompt, config_.mask_seed, config_.anchors_only},
                            warn_);
    });
  }
  return *instances_;
}

void Pipeline::write_splits(const fs::path& dir) {
  const std::array<std::pair<const SplitResult*, std::string>, 2> sides{
      std::pair{&split1(), config_.t1_label}, std::pair{&split2(), config_.t2_label}};
  for (const auto& [res, label] : sides) {
    const std::array<std::pair<const Snapshot*, const char*>, 3> parts{
        std::pair{&res->train, "train"}, std::pair{&res->dev, "dev"}, std::pair{&res->test, "test"}};
    for (const auto& [part, name] : parts) {
      const fs::path path = dir / (label + "." + name + ".txt");
      const Snapshot* snap = part;
      in_stage("ingest", path, [&] {
        std::string text;
        for (std::size_t i = 0; i < snap->n_sentences(); ++i) {
          text += join(snap->sentence_tokens(i), " ");
          text += '\n';
        }
        write_file(path, text);
      });
    }
  }
}

void Pipeline::write_stats(const fs::path& dir) {
  const std::array<std::pair<const CorpusStats*, std::string>, 2> sides{
      std::pair{&stats1(), config_.t1_label}, std::pair{&stats2(), config_.t2_label}};
  for (const auto& [side, label] : sides) {
    const fs::path fpath = dir / (label + ".freq.tsv");
    const fs::path cpath = dir / (label + ".cooc.tsv");
    const CorpusStats* stats = side;
    in_stage("stats", fpath, [&] {
      std::ostringstream f, c;
      write_frequency_tsv(f, stats->freq);
      write_file(fpath, f.str());
      write_cooc_tsv(c, *stats);
      write_file(cpath, c.str());
    });
  }
}

void Pipeline::write_pivots(const fs::path& path) {
  const auto& sets = anchor_sets();
  in_stage("tuples", path, [&] {
    std::string text;
    auto anchors = [](const std::vector<Anchor>& as) {
      std::vector<std::string> toks;
      for (const auto& a : as) toks.push_back(a.token);
      return join(toks, ",");
    };
    for (const auto& a : sets) {
      text += a.pivot + '\t' + std::to_string(a.pivot_score) + '\t' + anchors(a.t1) + '\t' +
              anchors(a.t2) + '\n';
    }
    write_file(path, text);
  });
}

void Pipeline::write_tuples(const fs::path& path) {
  const auto& t = tuples();
  in_stage("tuples", path, [&] {
    std::ostringstream out;
    write_tuples_tsv(out, t);
    write_file(path, out.str());
  });
}

void Pipeline::write_templates(const fs::path& path) {
  const auto& ts = templates();
  in_stage("templates", path, [&] {
    std::ostringstream out;
    tempshift::write_templates(out, ts);
    write_file(path, out.str());
  });
}

void Pipeline::write_prompts(const fs::path& path) {
  const auto& ps = prompts();
  in_stage("prompts", path, [&] {
    std::ostringstream out;
    tempshift::write_prompts(out, ps);
    write_file(path, out.str());
  });
}

void Pipeline::write_training(const fs::path& path) {
  const auto& is = instances();
  in_stage("emit-train", path, [&] {
    std::ostringstream out;
    write_training_jsonl(out, is);
    write_file(path, out.str());
  });
}

Manifest run_pipeline(const PipelineConfig& config, const WarningSink& warn) {
  Pipeline p(config, warn);
  const fs::path& dir = config.output_dir;
  const std::array<std::string, 5> names{"pivots.tsv", "tuples.tsv", "templates.txt", "prompts.txt",
                                         "train.jsonl"};
  p.write_pivots(dir / names[0]);
  p.write_tuples(dir / names[1]);
  p.write_templates(dir / names[2]);
  p.write_prompts(dir / names[3]);
  p.write_training(dir / names[4]);

  Manifest m;
  m.config_hash = config_hash(config);
  m.split_seed = config.split_seed;
  m.mask_seed = config.mask_seed;
  m.template_cache_hit = p.template_cache_hit();
  m.inputs.emplace_back("c1", sha256_file(config.c1));
  m.inputs.emplace_back("c2", sha256_file(config.c2));
  if (config.template_source == TemplateSource::Manual && !config.manual_templates.empty()) {
    m.inputs.emplace_back("manual_templates", sha256_file(config.manual_templates));
  }
  if (config.method == Method::Cont) {
    m.inputs.emplace_back("embeddings_t1", sha256_file(config.embeddings_t1));
    m.inputs.emplace_back("embeddings_t2", sha256_file(config.embeddings_t2));
  }
  for (const auto& n : names) {
    const std::string bytes = read_file(dir / n);
    m.artifacts.push_back({n, sha256_hex(bytes), bytes.size()});
  }
  in_stage("manifest", dir / "manifest.json", [&] { write_file(dir / "manifest.json", m.to_json()); });
  return m;
}

// ---------------------------------------------------------------------------
// Report

std::vector<ResultsRow> read_results(std::istream& in, const std::string& source_name) {
  std::vector<ResultsRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (rows.empty() && lineno == 1 && f[0] == "dataset") continue;
    if (f.size() != 6) throw FormatError(source_name, lineno, "expected 6 tab-separated fields");
    ResultsRow r{std::string(f[0]), std::string(f[1]), std::string(f[2]), std::string(f[3]), 0, 0.0};
    auto [ptr, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), r.k);
    if (ec != std::errc() || ptr != f[4].data() + f[4].size() || r.k == 0) {
      throw FormatError(source_name, lineno, "k must be a positive integer, got '" + std::string(f[4]) + "'");
    }
    try {
      r.perplexity = parse_double(f[5]);
    } catch (const Error& e) {
      throw FormatError(source_name, lineno, e.what());
    }
    if (!(r.perplexity > 0.0) || !std::isfinite(r.perplexity)) {
      throw FormatError(source_name, lineno, "perplexity must be a positive finite number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

Report render_report(const std::vector<ResultsRow>& rows) {
  if (rows.empty()) throw Error("results file has no rows");
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::map<std::size_t, double>> series;
  std::set<std::size_t> ks;
  std::set<std::string> datasets, models;
  for (const auto& r : rows) {
    auto& points = series[{r.dataset, r.model, r.method, r.template_source}];
    if (!points.emplace(r.k, r.perplexity).second) {
      throw Error("duplicate results row for dataset=" + r.dataset + " model=" + r.model +
                  " method=" + r.method + " template=" + r.template_source +
                  " k=" + std::to_string(r.k));
    }
    ks.insert(r.k);
    datasets.insert(r.dataset);
    models.insert(r.model);
  }
  if (series.size() > 6) {
    throw Error("at most 6 series fit one chart, results have " + std::to_string(series.size()) +
                "; filter the results by dataset or model");
  }

  Report rep;
  rep.series = series.size();
  rep.points = rows.size();

  // Pivot table.
  rep.table = "dataset\tmodel\tmethod\ttemplate";
  for (auto k : ks) rep.table += "\tk=" + std::to_string(k);
  rep.table += '\n';
  for (const auto& [key, points] : series) {
    const auto& [d, mo, me, te] = key;
    rep.table += d + '\t' + mo + '\t' + me + '\t' + te;
    for (auto k : ks) {
      rep.table += '\t';
      if (auto it = points.find(k); it != points.end()) rep.table += format_double(it->second, 6);
    }
    rep.table += '\n';
  }

  // Chart: categorical k axis, linear perplexity axis.
  const double width = 720, height = 440, left = 70, right = 200, top = 30, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : rows) {
    lo = std::min(lo, r.perplexity);
    hi = std::max(hi, r.perplexity);
  }
  const double pad = hi > lo ? 0.05 * (hi - lo) : std::max(0.5, 0.05 * hi);
  lo = std::max(0.0, lo - pad);
  hi += pad;
  const std::vector<std::size_t> kv(ks.begin(), ks.end());
  auto x_of = [&](std::size_t k) {
    const auto i = static_cast<double>(std::lower_bound(kv.begin(), kv.end(), k) - kv.begin());
    return kv.size() == 1 ? left + plot_w / 2 : left + plot_w * i / static_cast<double>(kv.size() - 1);
  };
  auto y_of = [&](double p) { return top + plot_h * (1.0 - (p - lo) / (hi - lo)); };
  static constexpr std::array<const char*, 6> colors{"#1f77b4", "#ff7f0e", "#2ca02c",
                                                     "#d62728", "#9467bd", "#8c564b"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  for (auto k : kv) {
    svg << "<text x=\"" << fixed(x_of(k), 2) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\">" << k << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double p = lo + (hi - lo) * i / 4.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << fixed(y_of(p) + 4, 2)
        << "\" text-anchor=\"end\">" << fixed(p, 2) << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\">k (number of tuples)</text>\n";
  svg << "<text x=\"18\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << top + plot_h / 2 << ")\">perplexity</text>\n";

  std::size_t idx = 0;
  for (const auto& [key, points] : series) {
    const auto& [d, mo, me, te] = key;
    std::string label = me + ", " + te;
    if (datasets.size() > 1) label = d + ": " + label;
    if (models.size() > 1) label = mo + " " + label;
    const char* color = colors[idx];
    svg << "<g class=\"series\" data-label=\"" << xml_escape(label) << "\">\n";
    if (points.size() > 1) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      bool first = true;
      for (const auto& [k, p] : points) {
        svg << (first ? "" : " ") << fixed(x_of(k), 2) << ',' << fixed(y_of(p), 2);
        first = false;
      }
      svg << "\"/>\n";
    }
    for (const auto& [k, p] : points) {
      svg << "<circle cx=\"" << fixed(x_of(k), 2) << "\" cy=\"" << fixed(y_of(p), 2)
          << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    }
    svg << "</g>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(idx);
    svg << "<rect x=\"" << left + plot_w + 15 << "\" y=\"" << ly - 8 << "\" width=\"12\" height=\"12\" fill=\""
        << color << "\"/>\n";
    svg << "<text x=\"" << left + plot_w + 32 << "\" y=\"" << ly + 2 << "\">" << xml_escape(label)
        << "</text>\n";
    ++idx;
  }
  svg << "</svg>\n";
  rep.svg = svg.str();
  return rep;
}

void render_report(const fs::path& results, const fs::path& chart, const fs::path& table) {
  std::ifstream in(results);
  if (!in) throw ConfigError("cannot open results file " + results.string());
  const Report rep = render_report(read_results(in, results.string()));
  write_file(chart, rep.svg);
  if (!table.empty()) write_file(table, rep.table);
}

}  // namespace tempshift
