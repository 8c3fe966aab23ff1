#pragma once

// Command implementations behind the CLI: each reads its inputs, produces
// deterministic artifacts stamped with the config hash, and prints a
// single-line JSON summary.

#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dhr/config.hpp"
#include "dhr/corpus.hpp"
#include "dhr/encoder.hpp"
#include "dhr/error.hpp"
#include "dhr/eval.hpp"
#include "dhr/index.hpp"
#include "dhr/retriever.hpp"
#include "dhr/sparse.hpp"
#include "dhr/trainer.hpp"
#include "json.hpp"

namespace dhr {

namespace detail {

inline const std::string& require_path(const std::string& path, const char* field) {
  if (path.empty())
    throw DhrError(Err::config, std::string("command needs paths.") + field + " in the config");
  return path;
}

inline Level require_level(const std::optional<Level>& level) {
  if (!level) throw DhrError(Err::config, "command needs --level document|passage");
  return *level;
}

inline std::string model_path(const RunConfig& cfg, Level level, bool iter2) {
  const std::string& base =
      level == Level::document ? cfg.paths.doc_model : cfg.paths.pass_model;
  if (!iter2) return base;
  const std::string& explicit2 =
      level == Level::document ? cfg.paths.doc_model_iter2 : cfg.paths.pass_model_iter2;
  if (!explicit2.empty()) return explicit2;
  return base.empty() ? base : base + ".iter2";
}

inline std::string instances_path(const RunConfig& cfg, Level level, bool iter2) {
  const std::string& base =
      level == Level::document ? cfg.paths.doc_instances : cfg.paths.pass_instances;
  if (!iter2) return base;
  const std::string& explicit2 =
      level == Level::document ? cfg.paths.doc_instances_iter2 : cfg.paths.pass_instances_iter2;
  if (!explicit2.empty()) return explicit2;
  return base.empty() ? base : base + ".iter2";
}

/// Hashed models are constructed from the config; linear models are loaded
/// from their trained checkpoint.
inline EncoderModel resolve_model(const RunConfig& cfg, Level level) {
  if (cfg.encoder_kind == "hashed") {
    uint64_t seed = sub_seed(cfg.seed, std::string("model-") + std::string(level_name(level)));
    return EncoderModel::hashed(cfg.dim, cfg.buckets, seed, cfg.caps_for(level));
  }
  const char* field = level == Level::document ? "doc_model" : "pass_model";
  return load_model(require_path(model_path(cfg, level, false), field));
}

inline TrainerConfig trainer_config(const RunConfig& cfg, Level level) {
  TrainerConfig t;
  t.dim = cfg.dim;
  t.buckets = cfg.buckets;
  t.seed = cfg.seed;
  t.caps = cfg.caps_for(level);
  t.style = cfg.separator_style;
  t.batch_size = cfg.batch_size;
  t.epochs = cfg.epochs;
  t.lr = cfg.lr;
  t.warmup_steps = cfg.warmup_steps;
  t.eval_steps = cfg.eval_steps;
  return t;
}

inline nlohmann::json config_echo(const RunConfig& cfg) {
  return {{"k1", cfg.k1},
          {"k2", cfg.k2},
          {"lambda", cfg.lambda},
          {"mode", std::string(rerank_mode_name(cfg.mode))},
          {"seed", cfg.seed}};
}

inline void print_summary(nlohmann::json j, const RunConfig& cfg) {
  j["config_hash"] = config_hash(cfg);
  std::cout << j.dump() << "\n";
}

}  // namespace detail

inline void cmd_ingest(const RunConfig& cfg) {
  CorpusStore store = load_corpus(detail::require_path(cfg.paths.corpus, "corpus"), cfg.max_words);
  if (!cfg.paths.passage_dump.empty()) {
    std::ofstream out(cfg.paths.passage_dump);
    if (!out) throw DhrError(Err::io, "cannot write passage dump '" + cfg.paths.passage_dump + "'");
    nlohmann::json header = {{"artifact", "passages"}, {"version", 1},
                             {"config_hash", config_hash(cfg)}};
    out << header.dump() << "\n";
    for (const std::string& pid : store.passage_ids()) {
      const Passage& p = store.passage(pid);
      out << nlohmann::json{{"passage_id", p.passage_id},
                            {"doc_id", p.doc_id},
                            {"title_path", p.title_path},
                            {"text", p.text}}
                 .dump()
          << "\n";
    }
  }
  detail::print_summary({{"command", "ingest"},
                         {"docs", store.n_docs()},
                         {"passages", store.n_passages()}},
                        cfg);
}

inline void cmd_mine_negatives(const RunConfig& cfg, std::optional<Level> level_opt) {
  Level level = detail::require_level(level_opt);
  CorpusStore store = load_corpus(detail::require_path(cfg.paths.corpus, "corpus"), cfg.max_words);
  std::vector<QAExample> dataset =
      load_qa_dataset(detail::require_path(cfg.paths.train_dataset, "train_dataset"));

  Bm25Params params{cfg.bm25_k1, cfg.bm25_b};
  Bm25Index passages_idx, abstracts_idx, fulltext_idx;
  SparseIndexes sparse;
  if (level == Level::passage) {
    passages_idx = bm25_over_passages(store, params);
    sparse.passages = &passages_idx;
  } else {
    fulltext_idx = bm25_over_fulltext(store, params);
    sparse.fulltext = &fulltext_idx;
    if (cfg.use_abstract) {
      abstracts_idx = bm25_over_abstracts(store, params);
      sparse.abstracts = &abstracts_idx;
    }
  }

  MiningResult result = build_instances(dataset, store, level, cfg.mining(), sparse);
  for (const DiscardedQuestion& d : result.discarded) {
    std::cerr << nlohmann::json{{"discarded", d.question}, {"reason", d.reason}}.dump() << "\n";
  }
  const char* field = level == Level::document ? "doc_instances" : "pass_instances";
  save_instances(result.instances, detail::require_path(detail::instances_path(cfg, level, false), field),
                 config_hash(cfg));
  detail::print_summary({{"command", "mine-negatives"},
                         {"level", std::string(level_name(level))},
                         {"instances", result.instances.size()},
                         {"discarded", result.discarded.size()}},
                        cfg);
}

inline void cmd_train(const RunConfig& cfg, std::optional<Level> level_opt) {
  Level level = detail::require_level(level_opt);
  if (cfg.encoder_kind != "linear")
    throw DhrError(Err::config, "train requires encoder kind 'linear'");
  CorpusStore store = load_corpus(detail::require_path(cfg.paths.corpus, "corpus"), cfg.max_words);
  const char* field = level == Level::document ? "doc_instances" : "pass_instances";
  std::vector<TrainingInstance> instances =
      load_instances(detail::require_path(detail::instances_path(cfg, level, false), field));
  std::vector<QAExample> dev;
  if (!cfg.paths.dev_dataset.empty()) dev = load_qa_dataset(cfg.paths.dev_dataset);

  TrainOutcome outcome = train(detail::trainer_config(cfg, level), instances, dev, store, level);
  const char* model_field = level == Level::document ? "doc_model" : "pass_model";
  save_model(outcome.model,
             detail::require_path(detail::model_path(cfg, level, false), model_field),
             config_hash(cfg));
  detail::print_summary({{"command", "train"},
                         {"level", std::string(level_name(level))},
                         {"steps", outcome.steps},
                         {"final_epoch_loss", outcome.epoch_loss.back()},
                         {"best_dev_accuracy", outcome.best_dev_accuracy}},
                        cfg);
}

inline void cmd_index(const RunConfig& cfg, std::optional<Level> level_opt) {
  Level level = detail::require_level(level_opt);
  CorpusStore store = load_corpus(detail::require_path(cfg.paths.corpus, "corpus"), cfg.max_words);
  EncoderModel model = detail::resolve_model(cfg, level);
  MipsIndex index = build_index(store, model, level, cfg.separator_style);
  const char* field = level == Level::document ? "doc_index" : "pass_index";
  const std::string& path =
      level == Level::document ? cfg.paths.doc_index : cfg.paths.pass_index;
  save_index(index, detail::require_path(path, field), config_hash(cfg));
  detail::print_summary({{"command", "index"},
                         {"level", std::string(level_name(level))},
                         {"units", index.size()},
                         {"dim", index.dim}},
                        cfg);
}

namespace detail {

struct LoadedPipeline {
  CorpusStore store;
  EncoderModel doc_model;
  EncoderModel pass_model;
  MipsIndex doc_index;
  MipsIndex pass_index;
  Pipeline pipeline;
};

inline LoadedPipeline load_pipeline(const RunConfig& cfg) {
  LoadedPipeline lp;
  lp.store = load_corpus(require_path(cfg.paths.corpus, "corpus"), cfg.max_words);
  lp.doc_model = resolve_model(cfg, Level::document);
  lp.pass_model = resolve_model(cfg, Level::passage);
  lp.doc_index = load_index(require_path(cfg.paths.doc_index, "doc_index"));
  lp.pass_index = load_index(require_path(cfg.paths.pass_index, "pass_index"));
  lp.pipeline = Pipeline::make(lp.store, lp.doc_model, lp.pass_model, lp.doc_index,
                               lp.pass_index, cfg.separator_style);
  return lp;
}

}  // namespace detail

inline void cmd_retrieve(const RunConfig& cfg) {
  detail::LoadedPipeline lp = detail::load_pipeline(cfg);
  std::vector<QAExample> dataset =
      load_qa_dataset(detail::require_path(cfg.paths.test_dataset, "test_dataset"));

  std::vector<QuestionResult> results(dataset.size());
  RetrievalConfig rc = cfg.retrieval();
  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const QAExample& ex = dataset[i];
      QuestionResult qr;
      qr.question = ex.question;
      std::vector<ScoredHit> hits = retrieve_hierarchical(ex.question, rc, lp.pipeline);
      for (size_t r = 0; r < hits.size(); ++r) {
        const Passage& p = lp.store.passage(hits[r].unit_id);
        ResultHit hit;
        hit.passage_id = p.passage_id;
        hit.doc_id = p.doc_id;
        hit.score = hits[r].score;
        hit.passage_score = hits[r].passage_score;
        hit.doc_score = hits[r].doc_score;
        hit.rank = r + 1;
        hit.has_answer = has_answer(p.text, ex.answers);
        qr.hits.push_back(std::move(hit));
      }
      results[i] = std::move(qr);
    }
  };

  size_t n_threads = std::max(1, cfg.threads);
  if (n_threads <= 1 || dataset.size() < 2) {
    work(0, dataset.size());
  } else {
    n_threads = std::min(n_threads, dataset.size());
    std::vector<std::thread> pool;
    size_t chunk = (dataset.size() + n_threads - 1) / n_threads;
    for (size_t t = 0; t < n_threads; ++t) {
      size_t begin = t * chunk;
      size_t end = std::min(begin + chunk, dataset.size());
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (std::thread& th : pool) th.join();
  }

  save_results(results, detail::require_path(cfg.paths.results, "results"), config_hash(cfg));
  detail::print_summary({{"command", "retrieve"},
                         {"questions", results.size()},
                         {"mode", std::string(rerank_mode_name(cfg.mode))}},
                        cfg);
}

inline void cmd_tune_lambda(const RunConfig& cfg) {
  detail::LoadedPipeline lp = detail::load_pipeline(cfg);
  std::vector<QAExample> dev =
      load_qa_dataset(detail::require_path(cfg.paths.dev_dataset, "dev_dataset"));
  double lambda = tune_lambda(dev, lp.pipeline, cfg.k1);
  detail::print_summary({{"command", "tune-lambda"}, {"lambda", lambda}}, cfg);
}

inline void cmd_eval(const RunConfig& cfg) {
  CorpusStore store = load_corpus(detail::require_path(cfg.paths.corpus, "corpus"), cfg.max_words);
  std::vector<QAExample> dataset =
      load_qa_dataset(detail::require_path(cfg.paths.test_dataset, "test_dataset"));
  std::vector<QuestionResult> results =
      load_results(detail::require_path(cfg.paths.results, "results"));

  MetricsReport report = topk_accuracy(results, dataset, cfg.cutoffs, store);
  MetricsReport doc_report = doc_topk_accuracy(results, dataset, cfg.cutoffs, store);
  write_report(report, detail::require_path(cfg.paths.report, "report"),
               detail::config_echo(cfg), config_hash(cfg), &doc_report);

  nlohmann::json per_cutoff = nlohmann::json::object();
  for (const auto& [k, acc] : report.per_cutoff) per_cutoff[std::to_string(k)] = acc;
  detail::print_summary({{"command", "eval"},
                         {"n_questions", report.n_questions},
                         {"per_cutoff", per_cutoff}},
                        cfg);
}

inline void cmd_time(const RunConfig& cfg) {
  detail::LoadedPipeline lp = detail::load_pipeline(cfg);
  std::vector<QAExample> dataset =
      load_qa_dataset(detail::require_path(cfg.paths.test_dataset, "test_dataset"));
  std::vector<std::string> questions;
  questions.reserve(dataset.size());
  for (const QAExample& ex : dataset) questions.push_back(ex.question);

  TimingBlock timing = time_stages(lp.pipeline, questions, cfg.retrieval());
  MetricsReport report;
  report.n_questions = questions.size();
  report.timing = timing;
  if (!cfg.paths.report.empty())
    write_report(report, cfg.paths.report, detail::config_echo(cfg), config_hash(cfg));
  detail::print_summary({{"command", "time"},
                         {"doc_search_ms", timing.doc_search_ms},
                         {"candidate_search_ms", timing.candidate_search_ms},
                         {"flat_search_ms", timing.flat_search_ms},
                         {"speedup", timing.speedup},
                         {"mean_candidate_fraction", timing.mean_candidate_fraction}},
                        cfg);
}

/// Second-iteration scheme: mine hard negatives with the iteration-1 model,
/// union them with the iteration-1 negatives, retrain, and write the
/// iteration-2 instance and model artifacts.
inline void cmd_iterate(const RunConfig& cfg, std::optional<Level> level_opt) {
  Level level = detail::require_level(level_opt);
  if (cfg.encoder_kind != "linear")
    throw DhrError(Err::config, "iterate requires encoder kind 'linear'");
  CorpusStore store = load_corpus(detail::require_path(cfg.paths.corpus, "corpus"), cfg.max_words);
  std::vector<QAExample> dataset =
      load_qa_dataset(detail::require_path(cfg.paths.train_dataset, "train_dataset"));
  const char* inst_field = level == Level::document ? "doc_instances" : "pass_instances";
  std::vector<TrainingInstance> instances =
      load_instances(detail::require_path(detail::instances_path(cfg, level, false), inst_field));
  EncoderModel iter1 = detail::resolve_model(cfg, level);

  std::vector<std::vector<std::string>> hard = mine_iter_hard_negatives(
      iter1, dataset, instances, store, level, cfg.separator_style, cfg.hard_negative_depth);
  std::vector<TrainingInstance> merged = merge_iteration_negatives(instances, hard);
  save_instances(merged, detail::instances_path(cfg, level, true), config_hash(cfg));

  std::vector<QAExample> dev;
  if (!cfg.paths.dev_dataset.empty()) dev = load_qa_dataset(cfg.paths.dev_dataset);
  TrainOutcome outcome = train(detail::trainer_config(cfg, level), merged, dev, store, level);
  save_model(outcome.model, detail::model_path(cfg, level, true), config_hash(cfg));

  size_t mined = 0;
  for (const auto& h : hard) mined += h.size();
  detail::print_summary({{"command", "iterate"},
                         {"level", std::string(level_name(level))},
                         {"hard_negatives", mined},
                         {"best_dev_accuracy", outcome.best_dev_accuracy}},
                        cfg);
}

/// Dispatch by command name; unknown commands are config errors.
inline void run_command(const std::string& name, const RunConfig& cfg,
                        std::optional<Level> level = std::nullopt) {
  cfg.validate();
  if (name == "ingest") return cmd_ingest(cfg);
  if (name == "mine-negatives") return cmd_mine_negatives(cfg, level);
  if (name == "train") return cmd_train(cfg, level);
  if (name == "index") return cmd_index(cfg, level);
  if (name == "retrieve") return cmd_retrieve(cfg);
  if (name == "tune-lambda") return cmd_tune_lambda(cfg);
  if (name == "eval") return cmd_eval(cfg);
  if (name == "time") return cmd_time(cfg);
  if (name == "iterate") return cmd_iterate(cfg, level);
  throw DhrError(Err::config, "unknown command '" + name + "'");
}

}  // namespace dhr
