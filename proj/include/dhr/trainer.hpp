#pragma once

// Training-instance construction (positives plus the five negative
// strategies), the contrastive loss over stored units, the mini-batch
// training loop, and second-iteration hard-negative mining.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dhr/corpus.hpp"
#include "dhr/encoder.hpp"
#include "dhr/error.hpp"
#include "dhr/index.hpp"
#include "dhr/sparse.hpp"
#include "json.hpp"

namespace dhr {

struct QAExample {
  std::string question;
  std::vector<std::string> answers;
  std::optional<std::string> gold_doc_title;
  std::optional<std::string> gold_context;
};

enum class NegStrategy { bm25, abstract, alltext, in_doc, in_sec, iter_hard };

inline std::string_view strategy_name(NegStrategy s) {
  switch (s) {
    case NegStrategy::bm25: return "bm25";
    case NegStrategy::abstract: return "abstract";
    case NegStrategy::alltext: return "alltext";
    case NegStrategy::in_doc: return "in_doc";
    case NegStrategy::in_sec: return "in_sec";
    case NegStrategy::iter_hard: return "iter_hard";
  }
  return "unknown";
}

inline NegStrategy strategy_from_name(std::string_view name) {
  if (name == "bm25") return NegStrategy::bm25;
  if (name == "abstract") return NegStrategy::abstract;
  if (name == "alltext") return NegStrategy::alltext;
  if (name == "in_doc") return NegStrategy::in_doc;
  if (name == "in_sec") return NegStrategy::in_sec;
  if (name == "iter_hard") return NegStrategy::iter_hard;
  throw DhrError(Err::parse, "unknown negative strategy '" + std::string(name) + "'");
}

struct TaggedNegative {
  std::string id;
  NegStrategy tag = NegStrategy::bm25;
};

struct TrainingInstance {
  std::string question;
  std::string positive_id;
  std::vector<TaggedNegative> negatives;
  Level level = Level::passage;
};

// --- QA dataset file ----------------------------------------------------

inline std::vector<QAExample> load_qa_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DhrError(Err::io, "cannot open dataset file '" + path + "'");
  std::vector<QAExample> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (collapse_whitespace(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      QAExample ex;
      ex.question = j.at("question").get<std::string>();
      for (const auto& a : j.at("answers")) ex.answers.push_back(a.get<std::string>());
      if (ex.answers.empty()) throw DhrError(Err::parse, "question has no answers");
      if (j.contains("gold_doc_title") && !j["gold_doc_title"].is_null())
        ex.gold_doc_title = j["gold_doc_title"].get<std::string>();
      if (j.contains("gold_context") && !j["gold_context"].is_null())
        ex.gold_context = j["gold_context"].get<std::string>();
      out.push_back(std::move(ex));
    } catch (const DhrError& e) {
      throw DhrError(Err::parse, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw DhrError(Err::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// --- positive selection ---------------------------------------------------

namespace detail {

/// Map a gold context onto the stored passage containing its first (up to)
/// 100 normalized words. Scans the gold-titled document's passages when a
/// title match exists, the whole store otherwise.
inline std::optional<std::string> map_gold_context(const QAExample& ex, const CorpusStore& store) {
  if (!ex.gold_context) return std::nullopt;
  std::vector<std::string> prefix = normalize_tokens(*ex.gold_context);
  if (prefix.empty()) return std::nullopt;
  if (prefix.size() > 100) prefix.resize(100);

  const std::vector<std::string>* candidates = nullptr;
  if (ex.gold_doc_title) {
    for (const std::string& doc_id : store.doc_ids()) {
      if (store.doc(doc_id).title == *ex.gold_doc_title) {
        candidates = &store.doc_passages(doc_id);
        break;
      }
    }
  }
  if (!candidates) candidates = &store.passage_ids();
  for (const std::string& pid : *candidates) {
    if (contains_subsequence(normalize_tokens(store.passage(pid).text), prefix)) return pid;
  }
  return std::nullopt;
}

inline std::optional<std::string> match_gold_title(const QAExample& ex, const CorpusStore& store) {
  if (!ex.gold_doc_title) return std::nullopt;
  for (const std::string& doc_id : store.doc_ids()) {
    if (store.doc(doc_id).title == *ex.gold_doc_title) return doc_id;
  }
  return std::nullopt;
}

}  // namespace detail

/// Gold mapping first, BM25 fallback second, Discard (nullopt) otherwise.
/// The fallback takes the highest-ranked of the top-100 BM25 hits whose raw
/// text at the level contains the answer.
inline std::optional<TrainingInstance> select_positive(const QAExample& ex,
                                                       const CorpusStore& store,
                                                       const Bm25Index& bm25, Level level) {
  TrainingInstance inst;
  inst.question = ex.question;
  inst.level = level;

  if (level == Level::document) {
    if (auto doc_id = detail::match_gold_title(ex, store)) {
      inst.positive_id = *doc_id;
      return inst;
    }
    if (auto pid = detail::map_gold_context(ex, store)) {
      inst.positive_id = store.passage(*pid).doc_id;
      return inst;
    }
  } else {
    if (auto pid = detail::map_gold_context(ex, store)) {
      inst.positive_id = *pid;
      return inst;
    }
  }

  for (const ScoredHit& hit : bm25_search(bm25, ex.question, 100)) {
    if (has_answer(unit_raw_text(store, level, hit.unit_id), ex.answers)) {
      inst.positive_id = hit.unit_id;
      return inst;
    }
  }
  return std::nullopt;
}

// --- negative mining --------------------------------------------------------

namespace detail {

/// BM25 ranking filtered to answer-free units, positive excluded, first n.
inline std::vector<std::string> mine_bm25_filtered(const QAExample& ex, const CorpusStore& store,
                                                   const Bm25Index& index, Level level, size_t n,
                                                   const std::string& exclude_id) {
  std::vector<std::string> out;
  if (n == 0) return out;
  for (const ScoredHit& hit : bm25_search(index, ex.question, index.size())) {
    if (hit.unit_id == exclude_id) continue;
    if (has_answer(unit_raw_text(store, level, hit.unit_id), ex.answers)) continue;
    out.push_back(hit.unit_id);
    if (out.size() == n) break;
  }
  return out;
}

}  // namespace detail

/// Top-n BM25(abstract) documents whose full text lacks every answer.
inline std::vector<std::string> mine_abstract_negatives(const QAExample& ex,
                                                        const CorpusStore& store,
                                                        const Bm25Index& bm25_abstract, size_t n,
                                                        const std::string& positive_doc_id = "") {
  return detail::mine_bm25_filtered(ex, store, bm25_abstract, Level::document, n, positive_doc_id);
}

/// Top-n BM25(full text) documents whose full text lacks every answer.
inline std::vector<std::string> mine_alltext_negatives(const QAExample& ex,
                                                       const CorpusStore& store,
                                                       const Bm25Index& bm25_fulltext, size_t n,
                                                       const std::string& positive_doc_id = "") {
  return detail::mine_bm25_filtered(ex, store, bm25_fulltext, Level::document, n, positive_doc_id);
}

/// Top-n BM25 passages not containing the answer (the classic DPR negatives).
inline std::vector<std::string> mine_bm25_negatives(const QAExample& ex, const CorpusStore& store,
                                                    const Bm25Index& bm25_passages, size_t n,
                                                    const std::string& positive_passage_id = "") {
  return detail::mine_bm25_filtered(ex, store, bm25_passages, Level::passage, n,
                                    positive_passage_id);
}

/// Answer-free passages sharing the positive's content leaf.
inline std::vector<std::string> mine_insec_negatives(const Passage& positive,
                                                     const CorpusStore& store,
                                                     const std::vector<std::string>& answers) {
  std::vector<std::string> out;
  for (const std::string& pid : store.doc_passages(positive.doc_id)) {
    if (pid == positive.passage_id) continue;
    const Passage& p = store.passage(pid);
    if (p.leaf_index != positive.leaf_index) continue;
    if (has_answer(p.text, answers)) continue;
    out.push_back(pid);
  }
  return out;
}

/// Answer-free passages sharing the positive's document (superset of in-sec).
inline std::vector<std::string> mine_indoc_negatives(const Passage& positive,
                                                     const CorpusStore& store,
                                                     const std::vector<std::string>& answers) {
  std::vector<std::string> out;
  for (const std::string& pid : store.doc_passages(positive.doc_id)) {
    if (pid == positive.passage_id) continue;
    if (has_answer(store.passage(pid).text, answers)) continue;
    out.push_back(pid);
  }
  return out;
}

// --- instance building ------------------------------------------------------

struct MiningOptions {
  bool use_bm25 = true;      // passage level
  bool use_in_sec = true;    // passage level
  bool use_in_doc = true;    // passage level
  bool use_abstract = true;  // document level
  bool use_alltext = true;   // document level
  size_t n_bm25 = 1;
  size_t n_abstract = 1;
  size_t n_alltext = 1;
  size_t cap_in_sec = 2;  // uniform seeded downsampling bound
  size_t cap_in_doc = 2;
  uint64_t seed = 0;
};

struct SparseIndexes {
  const Bm25Index* passages = nullptr;
  const Bm25Index* abstracts = nullptr;
  const Bm25Index* fulltext = nullptr;
};

struct DiscardedQuestion {
  std::string question;
  std::string reason;
};

struct MiningResult {
  std::vector<TrainingInstance> instances;
  std::vector<DiscardedQuestion> discarded;
};

namespace detail {

/// Uniform sample of at most `cap` ids, original order kept.
inline std::vector<std::string> sample_capped(std::vector<std::string> ids, size_t cap,
                                              uint64_t seed, std::string_view question,
                                              std::string_view strategy) {
  if (ids.size() <= cap) return ids;
  std::mt19937_64 rng(sub_seed(seed, "sampling") ^ fnv1a64(question) ^ fnv1a64(strategy));
  std::vector<size_t> idx(ids.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  out.reserve(cap);
  for (size_t i : idx) out.push_back(std::move(ids[i]));
  return out;
}

inline void append_negatives(TrainingInstance& inst, const std::vector<std::string>& ids,
                             NegStrategy tag) {
  for (const std::string& id : ids) {
    if (id == inst.positive_id) continue;
    bool dup = false;
    for (const TaggedNegative& n : inst.negatives) {
      if (n.id == id) {
        dup = true;
        break;
      }
    }
    if (!dup) inst.negatives.push_back(TaggedNegative{id, tag});
  }
}

}  // namespace detail

/// Select positives and mine every enabled strategy for one level.
/// Questions with no usable positive are discarded with a reason.
inline MiningResult build_instances(const std::vector<QAExample>& dataset,
                                    const CorpusStore& store, Level level,
                                    const MiningOptions& options, const SparseIndexes& sparse) {
  const Bm25Index* positive_index =
      level == Level::passage ? sparse.passages : sparse.fulltext;
  if (!positive_index)
    throw DhrError(Err::config, "missing BM25 index for positive selection");

  MiningResult result;
  for (const QAExample& ex : dataset) {
    std::optional<TrainingInstance> inst = select_positive(ex, store, *positive_index, level);
    if (!inst) {
      result.discarded.push_back(
          {ex.question, "no stored unit in the BM25 top-100 contains an answer"});
      continue;
    }
    if (level == Level::document) {
      if (options.use_abstract && sparse.abstracts) {
        detail::append_negatives(
            *inst,
            mine_abstract_negatives(ex, store, *sparse.abstracts, options.n_abstract,
                                    inst->positive_id),
            NegStrategy::abstract);
      }
      if (options.use_alltext && sparse.fulltext) {
        detail::append_negatives(
            *inst,
            mine_alltext_negatives(ex, store, *sparse.fulltext, options.n_alltext,
                                   inst->positive_id),
            NegStrategy::alltext);
      }
    } else {
      if (options.use_bm25 && sparse.passages) {
        detail::append_negatives(
            *inst,
            mine_bm25_negatives(ex, store, *sparse.passages, options.n_bm25, inst->positive_id),
            NegStrategy::bm25);
      }
      const Passage& positive = store.passage(inst->positive_id);
      if (options.use_in_sec) {
        detail::append_negatives(
            *inst,
            detail::sample_capped(mine_insec_negatives(positive, store, ex.answers),
                                  options.cap_in_sec, options.seed, ex.question, "in_sec"),
            NegStrategy::in_sec);
      }
      if (options.use_in_doc) {
        detail::append_negatives(
            *inst,
            detail::sample_capped(mine_indoc_negatives(positive, store, ex.answers),
                                  options.cap_in_doc, options.seed, ex.question, "in_doc"),
            NegStrategy::in_doc);
      }
    }
    result.instances.push_back(std::move(*inst));
  }
  return result;
}

// --- loss over stored units ---------------------------------------------

inline std::vector<ContrastiveBatchItem> resolve_batch(
    const std::vector<TrainingInstance>& batch, const CorpusStore& store, SepStyle style) {
  std::vector<ContrastiveBatchItem> items;
  items.reserve(batch.size());
  for (const TrainingInstance& inst : batch) {
    ContrastiveBatchItem item;
    item.question = inst.question;
    item.positive = unit_text(store, inst.level, inst.positive_id, style);
    for (const TaggedNegative& n : inst.negatives)
      item.negatives.push_back(unit_text(store, inst.level, n.id, style));
    items.push_back(std::move(item));
  }
  return items;
}

/// Mean negative log-likelihood of each positive against the in-batch pool
/// (own positive, own negatives, every other instance's positives and
/// negatives).
inline double contrastive_loss(const std::vector<TrainingInstance>& batch,
                               const EncoderModel& model, const CorpusStore& store,
                               SepStyle style) {
  if (batch.empty()) throw DhrError(Err::empty_batch, "contrastive loss over an empty batch");
  return contrastive_loss_texts(model, resolve_batch(batch, store, style));
}

// --- training loop -------------------------------------------------------

struct TrainerConfig {
  uint32_t dim = 64;
  uint32_t buckets = 65536;
  uint64_t seed = 0;
  EncoderCaps caps;
  SepStyle style = SepStyle::comma;
  size_t batch_size = 32;
  size_t epochs = 20;
  double lr = 0.5;
  size_t warmup_steps = 0;  // linear warmup, then constant
  size_t eval_steps = 0;    // 0 -> evaluate at the end of each epoch
  size_t dev_cutoff = 20;
  double init_scale = 0.1;
};

struct TrainOutcome {
  EncoderModel model;
  std::vector<double> epoch_loss;
  double best_dev_accuracy = -1.0;  // top-`dev_cutoff` answer containment
  size_t best_step = 0;
  size_t steps = 0;
};

/// Top-k answer-containment accuracy of a model over the flat index at its
/// own level; used for dev checkpoint selection.
inline double flat_retrieval_accuracy(const EncoderModel& model, const CorpusStore& store,
                                      Level level, SepStyle style,
                                      const std::vector<QAExample>& examples, size_t cutoff) {
  if (examples.empty()) throw DhrError(Err::empty_dev_set, "no examples to evaluate");
  MipsIndex index = build_index(store, model, level, style);
  size_t hits = 0;
  for (const QAExample& ex : examples) {
    EmbeddingVector qv = encode(model, TextSide::question, ex.question);
    for (const ScoredHit& hit : search(index, qv, cutoff)) {
      if (has_answer(unit_raw_text(store, level, hit.unit_id), ex.answers)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

/// Shuffled mini-batch SGD on the contrastive loss. Deterministic under a
/// fixed seed; returns the checkpoint with the best dev accuracy when a dev
/// set is given, the final model otherwise.
inline TrainOutcome train(const TrainerConfig& cfg,
                          const std::vector<TrainingInstance>& instances,
                          const std::vector<QAExample>& dev, const CorpusStore& store,
                          Level level) {
  if (instances.empty())
    throw DhrError(Err::no_trainable_instances, "no training instances for " +
                                                    std::string(level_name(level)) + " level");

  TrainOutcome out;
  uint64_t model_seed = sub_seed(cfg.seed, std::string("model-") + std::string(level_name(level)));
  out.model = EncoderModel::linear(cfg.dim, cfg.buckets, model_seed, cfg.caps, cfg.init_scale);

  std::mt19937_64 shuffle_rng(sub_seed(cfg.seed, "train-shuffle"));
  std::vector<size_t> order(instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  EncoderModel best = out.model;
  auto maybe_eval = [&](size_t step) {
    if (dev.empty()) return;
    double acc = flat_retrieval_accuracy(out.model, store, level, cfg.style, dev, cfg.dev_cutoff);
    if (acc > out.best_dev_accuracy) {
      out.best_dev_accuracy = acc;
      out.best_step = step;
      best = out.model;
    }
  };

  size_t step = 0;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<TrainingInstance> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) batch.push_back(instances[order[i]]);

      std::vector<ContrastiveBatchItem> items = resolve_batch(batch, store, cfg.style);
      epoch_loss += contrastive_loss_texts(out.model, items);
      ++batches;

      double lr = cfg.lr;
      if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
        lr = cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
      apply_gradient(out.model, grad_linear(out.model, items), lr);
      ++step;

      if (cfg.eval_steps > 0 && step % cfg.eval_steps == 0) maybe_eval(step);
    }
    out.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    if (cfg.eval_steps == 0) maybe_eval(step);
  }
  if (cfg.eval_steps > 0 && step % cfg.eval_steps != 0) maybe_eval(step);

  out.steps = step;
  if (!dev.empty()) out.model = std::move(best);
  return out;
}

// --- iterative training ---------------------------------------------------

/// Retrieve top-`depth` units with the iteration-1 model and keep the
/// answer-free non-positive ones. Aligned with `instances`.
inline std::vector<std::vector<std::string>> mine_iter_hard_negatives(
    const EncoderModel& model, const std::vector<QAExample>& dataset,
    const std::vector<TrainingInstance>& instances, const CorpusStore& store, Level level,
    SepStyle style, size_t depth) {
  std::unordered_map<std::string, const QAExample*> by_question;
  for (const QAExample& ex : dataset) by_question.emplace(ex.question, &ex);

  MipsIndex index = build_index(store, model, level, style);
  std::vector<std::vector<std::string>> out;
  out.reserve(instances.size());
  for (const TrainingInstance& inst : instances) {
    auto it = by_question.find(inst.question);
    if (it == by_question.end())
      throw DhrError(Err::missing_question,
                     "instance question not in dataset: '" + inst.question + "'");
    const QAExample& ex = *it->second;
    std::vector<std::string> hard;
    EmbeddingVector qv = encode(model, TextSide::question, inst.question);
    for (const ScoredHit& hit : search(index, qv, depth)) {
      if (hit.unit_id == inst.positive_id) continue;
      if (has_answer(unit_raw_text(store, level, hit.unit_id), ex.answers)) continue;
      hard.push_back(hit.unit_id);
    }
    out.push_back(std::move(hard));
  }
  return out;
}

/// Union of iteration-1 negatives and mined hard negatives, deduplicated by
/// unit id with the first-seen tag kept.
inline std::vector<TrainingInstance> merge_iteration_negatives(
    const std::vector<TrainingInstance>& instances,
    const std::vector<std::vector<std::string>>& hard_lists) {
  if (instances.size() != hard_lists.size())
    throw DhrError(Err::internal, "hard-negative lists misaligned with instances");
  std::vector<TrainingInstance> out = instances;
  for (size_t i = 0; i < out.size(); ++i)
    detail::append_negatives(out[i], hard_lists[i], NegStrategy::iter_hard);
  return out;
}

// --- instance file ----------------------------------------------------------

inline void save_instances(const std::vector<TrainingInstance>& instances,
                           const std::string& path, std::string_view config_hash = "") {
  std::ofstream out(path);
  if (!out) throw DhrError(Err::io, "cannot write instance file '" + path + "'");
  nlohmann::json header = {{"artifact", "instances"}, {"version", 1},
                           {"config_hash", std::string(config_hash)}};
  out << header.dump() << "\n";
  for (const TrainingInstance& inst : instances) {
    nlohmann::json negs = nlohmann::json::array();
    for (const TaggedNegative& n : inst.negatives)
      negs.push_back({{"id", n.id}, {"tag", std::string(strategy_name(n.tag))}});
    nlohmann::json j = {{"question", inst.question},
                        {"positive_id", inst.positive_id},
                        {"negatives", negs},
                        {"level", std::string(level_name(inst.level))}};
    out << j.dump() << "\n";
  }
  if (!out) throw DhrError(Err::io, "failed writing instance file '" + path + "'");
}

inline std::vector<TrainingInstance> load_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DhrError(Err::io, "cannot open instance file '" + path + "'");
  std::vector<TrainingInstance> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (collapse_whitespace(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (j.contains("artifact")) continue;  // header line
      TrainingInstance inst;
      inst.question = j.at("question").get<std::string>();
      inst.positive_id = j.at("positive_id").get<std::string>();
      inst.level =
          j.at("level").get<std::string>() == "document" ? Level::document : Level::passage;
      for (const auto& n : j.at("negatives")) {
        inst.negatives.push_back(TaggedNegative{
            n.at("id").get<std::string>(), strategy_from_name(n.at("tag").get<std::string>())});
      }
      out.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      throw DhrError(Err::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dhr
