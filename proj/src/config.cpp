// SPDX-License-Identifier: Apache-2.0

#include "eagle/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eagle/errors.hpp"
#include "eagle/hashing.hpp"

namespace eagle {

using nlohmann::json;

bool TomlValue::as_bool(const std::string& key) const {
  if (!is_bool()) throw ConfigError(key + ": expected a boolean");
  return std::get<bool>(v_);
}

int64_t TomlValue::as_int(const std::string& key) const {
  if (!is_int()) throw ConfigError(key + ": expected an integer");
  return std::get<int64_t>(v_);
}

double TomlValue::as_number(const std::string& key) const {
  if (is_int()) return static_cast<double>(std::get<int64_t>(v_));
  if (is_float()) return std::get<double>(v_);
  throw ConfigError(key + ": expected a number");
}

const std::string& TomlValue::as_string(const std::string& key) const {
  if (!is_string()) throw ConfigError(key + ": expected a string");
  return std::get<std::string>(v_);
}

const TomlValue::Array& TomlValue::as_array(const std::string& key) const {
  if (!is_array()) throw ConfigError(key + ": expected an array");
  return std::get<Array>(v_);
}

namespace {

std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Cuts a trailing comment, respecting double-quoted strings.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (c == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unescape(const std::string& s, const std::string& where) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (++i == s.size()) throw ConfigError(where + ": dangling escape");
    switch (s[i]) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      default:
        throw ConfigError(where + ": unsupported escape \\" + s[i]);
    }
  }
  return out;
}

TomlValue parse_scalar(const std::string& raw, const std::string& where);

TomlValue parse_array(const std::string& raw, const std::string& where) {
  std::string body = trim(raw.substr(1, raw.size() - 2));
  TomlValue::Array items;
  if (body.empty()) return TomlValue(TomlValue::Storage(std::move(items)));
  size_t start = 0;
  bool quoted = false;
  for (size_t i = 0; i <= body.size(); ++i) {
    if (i < body.size() && body[i] == '"' && (i == 0 || body[i - 1] != '\\')) {
      quoted = !quoted;
    }
    if (i == body.size() || (body[i] == ',' && !quoted)) {
      std::string item = trim(body.substr(start, i - start));
      if (item.empty()) throw ConfigError(where + ": empty array element");
      items.push_back(parse_scalar(item, where));
      start = i + 1;
    }
  }
  return TomlValue(TomlValue::Storage(std::move(items)));
}

TomlValue parse_scalar(const std::string& raw, const std::string& where) {
  if (raw.empty()) throw ConfigError(where + ": empty value");
  if (raw.front() == '[') {
    if (raw.back() != ']') throw ConfigError(where + ": unterminated array");
    return parse_array(raw, where);
  }
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') {
      throw ConfigError(where + ": unterminated string");
    }
    return TomlValue(
        TomlValue::Storage(unescape(raw.substr(1, raw.size() - 2), where)));
  }
  if (raw == "true") return TomlValue(TomlValue::Storage(true));
  if (raw == "false") return TomlValue(TomlValue::Storage(false));

  bool looks_float = raw.find_first_of(".eE") != std::string::npos;
  if (!looks_float) {
    int64_t iv = 0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), iv);
    if (ec == std::errc() && p == raw.data() + raw.size()) {
      return TomlValue(TomlValue::Storage(iv));
    }
  }
  try {
    size_t used = 0;
    double dv = std::stod(raw, &used);
    if (used == raw.size()) return TomlValue(TomlValue::Storage(dv));
  } catch (const std::exception&) {
  }
  throw ConfigError(where + ": cannot parse value '" + raw + "'");
}

}  // namespace

TomlDoc parse_toml(const std::string& text, const std::string& what) {
  TomlDoc doc;
  std::string section;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string where = what + ":" + std::to_string(lineno);
    std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + ": bad section header");
      section = trim(body.substr(1, body.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      doc.try_emplace(section);
      continue;
    }
    size_t eq = std::string::npos;
    bool quoted = false;
    for (size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') quoted = !quoted;
      if (body[i] == '=' && !quoted) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key = value");
    }
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    doc[section][key] = parse_scalar(value, where + " (" + key + ")");
  }
  return doc;
}

TomlDoc parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str(), path.string());
}

void apply_overrides(TomlDoc& doc, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override must look like section.key=value: " + item);
    }
    std::string path = trim(item.substr(0, eq));
    std::string value = trim(item.substr(eq + 1));
    size_t dot = path.find('.');
    std::string section = dot == std::string::npos ? "" : path.substr(0, dot);
    std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
    if (key.empty()) throw ConfigError("override has an empty key: " + item);
    doc[section][key] = parse_scalar(value, "override " + path);
  }
}

const char* task_name(Task t) { return t == Task::pairs ? "pairs" : "search"; }

const char* annotator_kind_name(AnnotatorKind k) {
  switch (k) {
    case AnnotatorKind::gt:
      return "gt";
    case AnnotatorKind::simulated:
      return "simulated";
    case AnnotatorKind::llm:
      return "llm";
  }
  return "?";
}

namespace {

class SectionReader {
 public:
  SectionReader(const TomlDoc& doc, const std::string& section)
      : section_(section) {
    auto it = doc.find(section);
    if (it != doc.end()) keys_ = &it->second;
  }

  const TomlValue* get(const std::string& key) {
    seen_.insert(key);
    if (!keys_) return nullptr;
    auto it = keys_->find(key);
    return it == keys_->end() ? nullptr : &it->second;
  }

  std::string where(const std::string& key) const {
    return section_.empty() ? key : section_ + "." + key;
  }

  void finish() const {
    if (!keys_) return;
    for (const auto& [key, _] : *keys_) {
      if (!seen_.count(key)) {
        throw ConfigError("unknown config key: " + where(key));
      }
    }
  }

 private:
  std::string section_;
  const std::map<std::string, TomlValue>* keys_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig experiment_config_from_toml(const TomlDoc& doc) {
  static const std::set<std::string> known_sections = {
      "",         "experiment", "synthetic", "data",  "split",
      "model",    "train",      "sampling",  "annotate", "llm",
      "search"};
  for (const auto& [section, _] : doc) {
    if (!known_sections.count(section)) {
      throw ConfigError("unknown config section: [" + section + "]");
    }
  }

  ExperimentConfig cfg;

  SectionReader exp(doc, "experiment");
  if (const auto* v = exp.get("task")) {
    const std::string& name = v->as_string(exp.where("task"));
    if (name == "pairs") {
      cfg.task = Task::pairs;
    } else if (name == "search") {
      cfg.task = Task::search;
    } else {
      throw ConfigError("experiment.task must be pairs or search");
    }
  }
  if (const auto* v = exp.get("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : v->as_array(exp.where("seeds"))) {
      cfg.seeds.push_back(static_cast<uint64_t>(s.as_int(exp.where("seeds"))));
    }
    if (cfg.seeds.empty()) {
      throw ConfigError("experiment.seeds must name at least one seed");
    }
  }
  if (const auto* v = exp.get("output_dir")) {
    cfg.output_dir = v->as_string(exp.where("output_dir"));
  }
  if (const auto* v = exp.get("parallel_seeds")) {
    cfg.parallel_seeds = v->as_bool(exp.where("parallel_seeds"));
  }
  exp.finish();

  SectionReader synth(doc, "synthetic");
  if (doc.count("synthetic")) {
    cfg.use_synthetic = true;
    if (const auto* v = synth.get("n_pairs")) {
      cfg.synth.n_pairs =
          static_cast<size_t>(v->as_int(synth.where("n_pairs")));
    }
    if (const auto* v = synth.get("vocab_size")) {
      cfg.synth.vocab_size =
          static_cast<size_t>(v->as_int(synth.where("vocab_size")));
    }
    if (const auto* v = synth.get("flip_fraction")) {
      cfg.synth.flip_fraction = v->as_number(synth.where("flip_fraction"));
    }
    if (const auto* v = synth.get("overlap_threshold")) {
      cfg.synth.overlap_threshold =
          v->as_number(synth.where("overlap_threshold"));
    }
    if (const auto* v = synth.get("seed")) {
      cfg.synth.seed = static_cast<uint64_t>(v->as_int(synth.where("seed")));
    }
    if (const auto* v = synth.get("test_pairs")) {
      cfg.synth_test_pairs =
          static_cast<size_t>(v->as_int(synth.where("test_pairs")));
    }
  }
  synth.finish();

  SectionReader data(doc, "data");
  auto read_path = [&](const char* key, std::string& out) {
    if (const auto* v = data.get(key)) out = v->as_string(data.where(key));
  };
  read_path("labeled", cfg.labeled_path);
  read_path("pool", cfg.pool_path);
  read_path("truth", cfg.truth_path);
  read_path("test", cfg.test_path);
  read_path("labels", cfg.labels_path);
  read_path("queries", cfg.queries_path);
  read_path("pool_queries", cfg.pool_queries_path);
  read_path("test_queries", cfg.test_queries_path);
  data.finish();

  SectionReader split(doc, "split");
  if (const auto* v = split.get("fraction")) {
    cfg.split_fraction = v->as_number(split.where("fraction"));
  }
  split.finish();

  SectionReader model(doc, "model");
  if (const auto* v = model.get("base_seed")) {
    cfg.base_seed = static_cast<uint64_t>(v->as_int(model.where("base_seed")));
  }
  model.finish();

  SectionReader train(doc, "train");
  if (const auto* v = train.get("learning_rate")) {
    cfg.train.learning_rate = v->as_number(train.where("learning_rate"));
    if (cfg.train.learning_rate < 0) {
      throw ConfigError("train.learning_rate must be >= 0");
    }
  }
  if (const auto* v = train.get("epochs")) {
    cfg.train.epochs = static_cast<int>(v->as_int(train.where("epochs")));
    if (cfg.train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  }
  if (const auto* v = train.get("batch_size")) {
    cfg.train.batch_size =
        static_cast<int>(v->as_int(train.where("batch_size")));
    if (cfg.train.batch_size < 1) {
      throw ConfigError("train.batch_size must be >= 1");
    }
  }
  train.finish();

  SectionReader sampling(doc, "sampling");
  if (const auto* v = sampling.get("strategy")) {
    cfg.strategy = parse_strategy(v->as_string(sampling.where("strategy")));
  }
  if (const auto* v = sampling.get("budget")) {
    // integer = absolute count, float = fraction of the pool
    if (v->is_int()) {
      cfg.budget_is_fraction = false;
      int64_t b = v->as_int(sampling.where("budget"));
      if (b < 0) throw ConfigError("sampling.budget must be >= 0");
      cfg.budget_value = static_cast<double>(b);
    } else {
      cfg.budget_is_fraction = true;
      cfg.budget_value = v->as_number(sampling.where("budget"));
      if (cfg.budget_value <= 0.0 || cfg.budget_value > 1.0) {
        throw ConfigError("fractional sampling.budget must lie in (0,1]");
      }
    }
  }
  sampling.finish();

  SectionReader annotate(doc, "annotate");
  if (const auto* v = annotate.get("kind")) {
    const std::string& name = v->as_string(annotate.where("kind"));
    if (name == "gt") {
      cfg.annotator = AnnotatorKind::gt;
    } else if (name == "simulated") {
      cfg.annotator = AnnotatorKind::simulated;
    } else if (name == "llm") {
      cfg.annotator = AnnotatorKind::llm;
    } else {
      throw ConfigError("annotate.kind must be gt, simulated or llm");
    }
  }
  if (const auto* v = annotate.get("accuracy")) {
    cfg.noise.default_accuracy = v->as_number(annotate.where("accuracy"));
    if (cfg.noise.default_accuracy < 0.0 || cfg.noise.default_accuracy > 1.0) {
      throw ConfigError("annotate.accuracy must lie in [0,1]");
    }
  }
  if (const auto* v = annotate.get("per_quantile")) {
    const auto& arr = v->as_array(annotate.where("per_quantile"));
    for (size_t i = 0; i < arr.size(); ++i) {
      double a = arr[i].as_number(annotate.where("per_quantile"));
      if (a < 0.0 || a > 1.0) {
        throw ConfigError("annotate.per_quantile entries must lie in [0,1]");
      }
      cfg.noise.per_quantile[static_cast<int>(i) + 1] = a;
    }
  }
  if (const auto* v = annotate.get("n_quantiles")) {
    cfg.n_quantiles =
        static_cast<size_t>(v->as_int(annotate.where("n_quantiles")));
    if (cfg.n_quantiles < 1) {
      throw ConfigError("annotate.n_quantiles must be >= 1");
    }
  }
  annotate.finish();

  SectionReader llm(doc, "llm");
  if (const auto* v = llm.get("endpoint")) {
    cfg.llm.endpoint = v->as_string(llm.where("endpoint"));
  }
  if (const auto* v = llm.get("model")) {
    cfg.llm.model = v->as_string(llm.where("model"));
  }
  if (const auto* v = llm.get("temperature")) {
    cfg.llm.temperature = v->as_number(llm.where("temperature"));
  }
  if (const auto* v = llm.get("max_inflight")) {
    cfg.llm.max_inflight =
        static_cast<int>(v->as_int(llm.where("max_inflight")));
    if (cfg.llm.max_inflight < 1) {
      throw ConfigError("llm.max_inflight must be >= 1");
    }
  }
  if (const auto* v = llm.get("max_attempts")) {
    cfg.llm.max_attempts =
        static_cast<int>(v->as_int(llm.where("max_attempts")));
    if (cfg.llm.max_attempts < 1) {
      throw ConfigError("llm.max_attempts must be >= 1");
    }
  }
  if (const auto* v = llm.get("backoff_ms")) {
    cfg.llm.backoff_base_ms =
        static_cast<int>(v->as_int(llm.where("backoff_ms")));
  }
  if (const auto* v = llm.get("cache_dir")) {
    cfg.llm.cache_dir = v->as_string(llm.where("cache_dir"));
  }
  if (const auto* v = llm.get("template")) {
    cfg.search_template =
        parse_search_template(v->as_string(llm.where("template")));
  }
  llm.finish();

  SectionReader search(doc, "search");
  if (const auto* v = search.get("top_k")) {
    cfg.top_k = static_cast<size_t>(v->as_int(search.where("top_k")));
    if (cfg.top_k < 1 || cfg.top_k > kPairPromptBatch) {
      throw ConfigError("search.top_k must lie in [1,10]");
    }
  }
  search.finish();

  SectionReader top(doc, "");
  top.finish();

  if (cfg.split_fraction < 0.0 || cfg.split_fraction > 1.0) {
    throw ConfigError("split.fraction must lie in [0,1]");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    const std::vector<std::string>& overrides) {
  TomlDoc doc = parse_toml_file(path);
  apply_overrides(doc, overrides);
  return experiment_config_from_toml(doc);
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j;
  j["task"] = task_name(cfg.task);
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  j["parallel_seeds"] = cfg.parallel_seeds;
  j["use_synthetic"] = cfg.use_synthetic;
  j["synthetic"] = {{"n_pairs", cfg.synth.n_pairs},
                    {"vocab_size", cfg.synth.vocab_size},
                    {"flip_fraction", cfg.synth.flip_fraction},
                    {"overlap_threshold", cfg.synth.overlap_threshold},
                    {"seed", cfg.synth.seed},
                    {"test_pairs", cfg.synth_test_pairs}};
  j["split_fraction"] = cfg.split_fraction;
  j["paths"] = {cfg.labeled_path,      cfg.pool_path,
                cfg.truth_path,        cfg.test_path,
                cfg.labels_path,       cfg.queries_path,
                cfg.pool_queries_path, cfg.test_queries_path};
  j["base_seed"] = cfg.base_seed;
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size}};
  j["strategy"] = strategy_name(cfg.strategy);
  j["budget"] = cfg.budget_value;
  j["budget_is_fraction"] = cfg.budget_is_fraction;
  j["annotator"] = annotator_kind_name(cfg.annotator);
  j["noise_default"] = cfg.noise.default_accuracy;
  json pq = json::object();
  for (const auto& [q, a] : cfg.noise.per_quantile) {
    pq[std::to_string(q)] = a;
  }
  j["noise_per_quantile"] = pq;
  j["llm"] = {{"endpoint", cfg.llm.endpoint},
              {"model", cfg.llm.model},
              {"temperature", cfg.llm.temperature},
              {"max_inflight", cfg.llm.max_inflight},
              {"max_attempts", cfg.llm.max_attempts},
              {"backoff_ms", cfg.llm.backoff_base_ms},
              {"cache_dir", cfg.llm.cache_dir.string()}};
  j["search_template"] = search_template_name(cfg.search_template);
  j["top_k"] = cfg.top_k;
  j["n_quantiles"] = cfg.n_quantiles;
  return sha256_hex(j.dump()).substr(0, 16);
}

size_t resolve_budget(const ExperimentConfig& cfg, size_t pool_size) {
  if (!cfg.budget_is_fraction) {
    auto b = static_cast<size_t>(cfg.budget_value);
    if (b > pool_size) {
      throw ConfigError("absolute budget " + std::to_string(b) +
                        " exceeds pool size " + std::to_string(pool_size));
    }
    return b;
  }
  return static_cast<size_t>(cfg.budget_value *
                             static_cast<double>(pool_size));
}

}  // namespace eagle
