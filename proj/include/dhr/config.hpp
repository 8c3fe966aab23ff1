#pragma once

// One flat run configuration collecting every knob; flags override config.
// All randomness downstream flows from the single seed via named sub-seeds.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dhr/corpus.hpp"
#include "dhr/encoder.hpp"
#include "dhr/error.hpp"
#include "dhr/retriever.hpp"
#include "dhr/text.hpp"
#include "json.hpp"

namespace dhr {

struct RunConfig {
  uint64_t seed = 0;
  bool seed_set = false;  // seed is mandatory in config files
  int threads = 1;

  struct Paths {
    std::string corpus;
    std::string train_dataset;
    std::string dev_dataset;
    std::string test_dataset;
    std::string passage_dump;
    std::string doc_instances;
    std::string pass_instances;
    std::string doc_instances_iter2;
    std::string pass_instances_iter2;
    std::string doc_model;
    std::string pass_model;
    std::string doc_model_iter2;
    std::string pass_model_iter2;
    std::string doc_index;
    std::string pass_index;
    std::string results;
    std::string report;
  } paths;

  size_t max_words = 100;
  SepStyle separator_style = SepStyle::comma;

  std::string encoder_kind = "linear";  // "linear" or "hashed"
  uint32_t dim = 64;
  uint32_t buckets = 65536;
  size_t question_cap = 80;
  size_t doc_cap = 512;
  size_t passage_cap = 280;

  double bm25_k1 = 1.2;
  double bm25_b = 0.75;

  size_t batch_size = 32;
  size_t epochs = 20;
  double lr = 0.5;
  size_t warmup_steps = 0;
  size_t eval_steps = 0;
  size_t n_bm25 = 1;
  size_t n_abstract = 1;
  size_t n_alltext = 1;
  size_t cap_in_sec = 2;
  size_t cap_in_doc = 2;
  bool use_bm25 = true;
  bool use_abstract = true;
  bool use_alltext = true;
  bool use_in_sec = true;
  bool use_in_doc = true;
  size_t hard_negative_depth = 30;

  size_t k1 = 100;
  size_t k2 = 100;
  double lambda = 1.0;
  RerankMode mode = RerankMode::serial_rerank;

  std::vector<size_t> cutoffs = {1, 5, 20, 100};

  EncoderCaps caps_for(Level level) const {
    EncoderCaps caps;
    caps.question = question_cap;
    caps.context = level == Level::document ? doc_cap : passage_cap;
    return caps;
  }

  RetrievalConfig retrieval() const { return RetrievalConfig{k1, k2, lambda, mode}; }

  MiningOptions mining() const {
    MiningOptions m;
    m.use_bm25 = use_bm25;
    m.use_abstract = use_abstract;
    m.use_alltext = use_alltext;
    m.use_in_sec = use_in_sec;
    m.use_in_doc = use_in_doc;
    m.n_bm25 = n_bm25;
    m.n_abstract = n_abstract;
    m.n_alltext = n_alltext;
    m.cap_in_sec = cap_in_sec;
    m.cap_in_doc = cap_in_doc;
    m.seed = seed;
    return m;
  }

  void validate() const {
    if (!seed_set) throw DhrError(Err::config, "config requires an explicit seed");
    if (encoder_kind != "linear" && encoder_kind != "hashed")
      throw DhrError(Err::config, "encoder kind must be 'linear' or 'hashed'");
    if (threads < 1) throw DhrError(Err::config, "threads must be >= 1");
    if (max_words < 1) throw DhrError(Err::config, "max_words must be >= 1");
    std::vector<const std::string*> all = {
        &paths.corpus,        &paths.train_dataset,       &paths.dev_dataset,
        &paths.test_dataset,  &paths.passage_dump,        &paths.doc_instances,
        &paths.pass_instances, &paths.doc_instances_iter2, &paths.pass_instances_iter2,
        &paths.doc_model,     &paths.pass_model,          &paths.doc_model_iter2,
        &paths.pass_model_iter2, &paths.doc_index,        &paths.pass_index,
        &paths.results,       &paths.report};
    for (size_t i = 0; i < all.size(); ++i) {
      if (all[i]->empty()) continue;
      for (size_t j = i + 1; j < all.size(); ++j) {
        if (!all[j]->empty() && *all[i] == *all[j])
          throw DhrError(Err::config, "paths must be distinct: '" + *all[i] + "' is reused");
      }
    }
  }
};

namespace detail {

template <typename T>
inline T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline void read_path(const nlohmann::json& j, const char* key, std::string& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    if (j.contains("seed")) {
      cfg.seed = j.at("seed").get<uint64_t>();
      cfg.seed_set = true;
    }
    cfg.threads = detail::get_or(j, "threads", cfg.threads);

    if (j.contains("paths")) {
      const nlohmann::json& p = j.at("paths");
      detail::read_path(p, "corpus", cfg.paths.corpus);
      detail::read_path(p, "train_dataset", cfg.paths.train_dataset);
      detail::read_path(p, "dev_dataset", cfg.paths.dev_dataset);
      detail::read_path(p, "test_dataset", cfg.paths.test_dataset);
      detail::read_path(p, "passage_dump", cfg.paths.passage_dump);
      detail::read_path(p, "doc_instances", cfg.paths.doc_instances);
      detail::read_path(p, "pass_instances", cfg.paths.pass_instances);
      detail::read_path(p, "doc_instances_iter2", cfg.paths.doc_instances_iter2);
      detail::read_path(p, "pass_instances_iter2", cfg.paths.pass_instances_iter2);
      detail::read_path(p, "doc_model", cfg.paths.doc_model);
      detail::read_path(p, "pass_model", cfg.paths.pass_model);
      detail::read_path(p, "doc_model_iter2", cfg.paths.doc_model_iter2);
      detail::read_path(p, "pass_model_iter2", cfg.paths.pass_model_iter2);
      detail::read_path(p, "doc_index", cfg.paths.doc_index);
      detail::read_path(p, "pass_index", cfg.paths.pass_index);
      detail::read_path(p, "results", cfg.paths.results);
      detail::read_path(p, "report", cfg.paths.report);
    }
    if (j.contains("corpus")) {
      const nlohmann::json& c = j.at("corpus");
      cfg.max_words = detail::get_or<size_t>(c, "max_words", cfg.max_words);
      if (c.contains("separator_style"))
        cfg.separator_style = sep_style_from_name(c.at("separator_style").get<std::string>());
    }
    if (j.contains("encoder")) {
      const nlohmann::json& e = j.at("encoder");
      cfg.encoder_kind = detail::get_or<std::string>(e, "kind", cfg.encoder_kind);
      cfg.dim = detail::get_or<uint32_t>(e, "dim", cfg.dim);
      cfg.buckets = detail::get_or<uint32_t>(e, "buckets", cfg.buckets);
      cfg.question_cap = detail::get_or<size_t>(e, "question_cap", cfg.question_cap);
      cfg.doc_cap = detail::get_or<size_t>(e, "doc_cap", cfg.doc_cap);
      cfg.passage_cap = detail::get_or<size_t>(e, "passage_cap", cfg.passage_cap);
    }
    if (j.contains("bm25")) {
      const nlohmann::json& b = j.at("bm25");
      cfg.bm25_k1 = detail::get_or(b, "k1", cfg.bm25_k1);
      cfg.bm25_b = detail::get_or(b, "b", cfg.bm25_b);
    }
    if (j.contains("trainer")) {
      const nlohmann::json& t = j.at("trainer");
      cfg.batch_size = detail::get_or<size_t>(t, "batch_size", cfg.batch_size);
      cfg.epochs = detail::get_or<size_t>(t, "epochs", cfg.epochs);
      cfg.lr = detail::get_or(t, "lr", cfg.lr);
      cfg.warmup_steps = detail::get_or<size_t>(t, "warmup_steps", cfg.warmup_steps);
      cfg.eval_steps = detail::get_or<size_t>(t, "eval_steps", cfg.eval_steps);
      cfg.n_bm25 = detail::get_or<size_t>(t, "n_bm25", cfg.n_bm25);
      cfg.n_abstract = detail::get_or<size_t>(t, "n_abstract", cfg.n_abstract);
      cfg.n_alltext = detail::get_or<size_t>(t, "n_alltext", cfg.n_alltext);
      cfg.cap_in_sec = detail::get_or<size_t>(t, "cap_in_sec", cfg.cap_in_sec);
      cfg.cap_in_doc = detail::get_or<size_t>(t, "cap_in_doc", cfg.cap_in_doc);
      cfg.use_bm25 = detail::get_or(t, "use_bm25", cfg.use_bm25);
      cfg.use_abstract = detail::get_or(t, "use_abstract", cfg.use_abstract);
      cfg.use_alltext = detail::get_or(t, "use_alltext", cfg.use_alltext);
      cfg.use_in_sec = detail::get_or(t, "use_in_sec", cfg.use_in_sec);
      cfg.use_in_doc = detail::get_or(t, "use_in_doc", cfg.use_in_doc);
      cfg.hard_negative_depth =
          detail::get_or<size_t>(t, "hard_negative_depth", cfg.hard_negative_depth);
    }
    if (j.contains("retrieval")) {
      const nlohmann::json& r = j.at("retrieval");
      cfg.k1 = detail::get_or<size_t>(r, "k1", cfg.k1);
      cfg.k2 = detail::get_or<size_t>(r, "k2", cfg.k2);
      cfg.lambda = detail::get_or(r, "lambda", cfg.lambda);
      if (r.contains("mode")) cfg.mode = rerank_mode_from_name(r.at("mode").get<std::string>());
    }
    if (j.contains("eval")) {
      const nlohmann::json& e = j.at("eval");
      if (e.contains("cutoffs")) cfg.cutoffs = e.at("cutoffs").get<std::vector<size_t>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DhrError(Err::config, std::string("bad config value: ") + e.what());
  }
  return cfg;
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  return {
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"paths",
       {{"corpus", cfg.paths.corpus},
        {"train_dataset", cfg.paths.train_dataset},
        {"dev_dataset", cfg.paths.dev_dataset},
        {"test_dataset", cfg.paths.test_dataset},
        {"passage_dump", cfg.paths.passage_dump},
        {"doc_instances", cfg.paths.doc_instances},
        {"pass_instances", cfg.paths.pass_instances},
        {"doc_instances_iter2", cfg.paths.doc_instances_iter2},
        {"pass_instances_iter2", cfg.paths.pass_instances_iter2},
        {"doc_model", cfg.paths.doc_model},
        {"pass_model", cfg.paths.pass_model},
        {"doc_model_iter2", cfg.paths.doc_model_iter2},
        {"pass_model_iter2", cfg.paths.pass_model_iter2},
        {"doc_index", cfg.paths.doc_index},
        {"pass_index", cfg.paths.pass_index},
        {"results", cfg.paths.results},
        {"report", cfg.paths.report}}},
      {"corpus",
       {{"max_words", cfg.max_words},
        {"separator_style", std::string(sep_style_name(cfg.separator_style))}}},
      {"encoder",
       {{"kind", cfg.encoder_kind},
        {"dim", cfg.dim},
        {"buckets", cfg.buckets},
        {"question_cap", cfg.question_cap},
        {"doc_cap", cfg.doc_cap},
        {"passage_cap", cfg.passage_cap}}},
      {"bm25", {{"k1", cfg.bm25_k1}, {"b", cfg.bm25_b}}},
      {"trainer",
       {{"batch_size", cfg.batch_size},
        {"epochs", cfg.epochs},
        {"lr", cfg.lr},
        {"warmup_steps", cfg.warmup_steps},
        {"eval_steps", cfg.eval_steps},
        {"n_bm25", cfg.n_bm25},
        {"n_abstract", cfg.n_abstract},
        {"n_alltext", cfg.n_alltext},
        {"cap_in_sec", cfg.cap_in_sec},
        {"cap_in_doc", cfg.cap_in_doc},
        {"use_bm25", cfg.use_bm25},
        {"use_abstract", cfg.use_abstract},
        {"use_alltext", cfg.use_alltext},
        {"use_in_sec", cfg.use_in_sec},
        {"use_in_doc", cfg.use_in_doc},
        {"hard_negative_depth", cfg.hard_negative_depth}}},
      {"retrieval",
       {{"k1", cfg.k1},
        {"k2", cfg.k2},
        {"lambda", cfg.lambda},
        {"mode", std::string(rerank_mode_name(cfg.mode))}}},
      {"eval", {{"cutoffs", cfg.cutoffs}}}};
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DhrError(Err::config, "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DhrError(Err::config, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

/// Hash of the effective (post-override) config; embedded in every artifact.
inline std::string config_hash(const RunConfig& cfg) {
  uint64_t h = fnv1a64(config_to_json(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace dhr
