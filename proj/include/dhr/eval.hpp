#pragma once

// Answer-containment retrieval accuracy at multiple cutoffs, document-level
// accuracy over full document text, and search-stage timing.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dhr/corpus.hpp"
#include "dhr/error.hpp"
#include "dhr/retriever.hpp"
#include "dhr/sparse.hpp"
#include "dhr/trainer.hpp"
#include "json.hpp"

namespace dhr {

struct ResultHit {
  std::string passage_id;
  std::string doc_id;
  double score = 0.0;
  std::optional<double> passage_score;
  std::optional<double> doc_score;
  size_t rank = 0;  // 1-based
  bool has_answer = false;
};

struct QuestionResult {
  std::string question;
  std::vector<ResultHit> hits;
};

struct TimingBlock {
  double doc_search_ms = 0.0;        // mean per-question document search
  double candidate_search_ms = 0.0;  // mean per-question candidate passage search
  double flat_search_ms = 0.0;       // mean per-question full-corpus passage scan
  double speedup = 0.0;              // flat / (doc + candidate)
  double mean_candidate_fraction = 0.0;  // candidate pool size / corpus size
  size_t n_questions = 0;
  size_t repeats = 2;
  int threads = 1;
};

struct MetricsReport {
  std::map<size_t, double> per_cutoff;
  size_t n_questions = 0;
  std::optional<TimingBlock> timing;
};

namespace detail {

/// Fold first-answer-bearing ranks into per-cutoff accuracies. `first_rank`
/// holds the 1-based rank of the first qualifying hit per question, 0 when
/// none (including questions missing from the results).
inline MetricsReport accuracy_from_ranks(const std::vector<size_t>& first_rank,
                                         const std::vector<size_t>& cutoffs) {
  MetricsReport report;
  report.n_questions = first_rank.size();
  for (size_t k : cutoffs) {
    size_t hits = 0;
    for (size_t r : first_rank) {
      if (r > 0 && r <= k) ++hits;
    }
    report.per_cutoff[k] =
        first_rank.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(first_rank.size());
  }
  double prev = -1.0;
  for (const auto& [k, acc] : report.per_cutoff) {
    if (acc < prev) throw DhrError(Err::internal, "accuracy decreased with larger cutoff");
    prev = acc;
  }
  return report;
}

template <typename RankFn>
inline MetricsReport topk_metric(const std::vector<QuestionResult>& results,
                                 const std::vector<QAExample>& dataset,
                                 const std::vector<size_t>& cutoffs, RankFn&& first_rank_of) {
  std::unordered_map<std::string, const QAExample*> by_question;
  for (const QAExample& ex : dataset) by_question.emplace(ex.question, &ex);
  for (const QuestionResult& r : results) {
    if (!by_question.count(r.question))
      throw DhrError(Err::missing_question, "result question not in dataset: '" + r.question + "'");
  }
  std::unordered_map<std::string, const QuestionResult*> by_result;
  for (const QuestionResult& r : results) by_result.emplace(r.question, &r);

  // Dataset order; questions without results count as misses.
  std::vector<size_t> first_rank;
  first_rank.reserve(dataset.size());
  for (const QAExample& ex : dataset) {
    auto it = by_result.find(ex.question);
    first_rank.push_back(it == by_result.end() ? 0 : first_rank_of(*it->second, ex));
  }
  return accuracy_from_ranks(first_rank, cutoffs);
}

}  // namespace detail

/// Fraction of questions whose top-k hits include an answer-bearing passage;
/// containment is tested against the stored passage text.
inline MetricsReport topk_accuracy(const std::vector<QuestionResult>& results,
                                   const std::vector<QAExample>& dataset,
                                   const std::vector<size_t>& cutoffs, const CorpusStore& store) {
  return detail::topk_metric(results, dataset, cutoffs,
                             [&store](const QuestionResult& r, const QAExample& ex) -> size_t {
                               for (size_t i = 0; i < r.hits.size(); ++i) {
                                 if (has_answer(store.passage(r.hits[i].passage_id).text,
                                                ex.answers))
                                   return i + 1;
                               }
                               return 0;
                             });
}

/// Document-level variant: containment is tested against the full document
/// text, so an answer anywhere in the document counts.
inline MetricsReport doc_topk_accuracy(const std::vector<QuestionResult>& results,
                                       const std::vector<QAExample>& dataset,
                                       const std::vector<size_t>& cutoffs,
                                       const CorpusStore& store) {
  return detail::topk_metric(
      results, dataset, cutoffs,
      [&store](const QuestionResult& r, const QAExample& ex) -> size_t {
        std::unordered_map<std::string, bool> doc_has;
        for (size_t i = 0; i < r.hits.size(); ++i) {
          const std::string& doc_id = r.hits[i].doc_id;
          auto it = doc_has.find(doc_id);
          if (it == doc_has.end())
            it = doc_has.emplace(doc_id, has_answer(store.full_text(doc_id), ex.answers)).first;
          if (it->second) return i + 1;
        }
        return 0;
      });
}

/// Wall-clock per-question search time for (a) document retrieval, (b)
/// passage scoring over the retrieved documents' candidates, and (c) the
/// flat full-corpus baseline. Questions are encoded up front: this measures
/// index search only. One warm-up pass is discarded, then `repeats` passes
/// are averaged. Runs single-threaded.
inline TimingBlock time_stages(const Pipeline& p, const std::vector<std::string>& questions,
                               const RetrievalConfig& config, size_t repeats = 2) {
  using clock = std::chrono::steady_clock;
  config.validate();

  std::vector<EmbeddingVector> qd, qp;
  qd.reserve(questions.size());
  qp.reserve(questions.size());
  for (const std::string& q : questions) {
    qd.push_back(encode(*p.doc_model, TextSide::question, q));
    qp.push_back(encode(*p.pass_model, TextSide::question, q));
  }

  TimingBlock block;
  block.n_questions = questions.size();
  block.repeats = repeats;
  block.threads = 1;
  if (questions.empty() || p.pass_index->size() == 0) return block;

  double doc_ns = 0.0, cand_ns = 0.0, flat_ns = 0.0;
  double candidate_rows_total = 0.0;
  for (size_t pass = 0; pass <= repeats; ++pass) {
    const bool measured = pass > 0;  // pass 0 is warm-up
    for (size_t i = 0; i < questions.size(); ++i) {
      auto t0 = clock::now();
      std::vector<ScoredHit> doc_hits = search(*p.doc_index, qd[i], config.k1);
      auto t1 = clock::now();
      std::vector<uint32_t> rows;
      for (const ScoredHit& d : doc_hits) {
        const std::vector<uint32_t>& doc_rows = p.doc_rows.at(d.unit_id);
        rows.insert(rows.end(), doc_rows.begin(), doc_rows.end());
      }
      std::vector<ScoredHit> cand_hits = search_rows(*p.pass_index, qp[i], config.k2, rows);
      auto t2 = clock::now();
      std::vector<ScoredHit> flat_hits = search(*p.pass_index, qp[i], config.k2);
      auto t3 = clock::now();
      if (measured) {
        doc_ns += std::chrono::duration<double, std::nano>(t1 - t0).count();
        cand_ns += std::chrono::duration<double, std::nano>(t2 - t1).count();
        flat_ns += std::chrono::duration<double, std::nano>(t3 - t2).count();
        candidate_rows_total += static_cast<double>(rows.size());
      }
    }
  }

  const double per_q = static_cast<double>(repeats) * static_cast<double>(questions.size());
  block.doc_search_ms = doc_ns / per_q / 1e6;
  block.candidate_search_ms = cand_ns / per_q / 1e6;
  block.flat_search_ms = flat_ns / per_q / 1e6;
  const double hier = block.doc_search_ms + block.candidate_search_ms;
  block.speedup = hier > 0.0 ? block.flat_search_ms / hier : 0.0;
  block.mean_candidate_fraction =
      candidate_rows_total / per_q / static_cast<double>(p.pass_index->size());
  return block;
}

// --- results and report files ---------------------------------------------

inline void save_results(const std::vector<QuestionResult>& results, const std::string& path,
                         std::string_view config_hash = "") {
  std::ofstream out(path);
  if (!out) throw DhrError(Err::io, "cannot write results file '" + path + "'");
  nlohmann::json header = {{"artifact", "results"}, {"version", 1},
                           {"config_hash", std::string(config_hash)}};
  out << header.dump() << "\n";
  for (const QuestionResult& r : results) {
    nlohmann::json hits = nlohmann::json::array();
    for (const ResultHit& h : r.hits) {
      nlohmann::json j = {{"passage_id", h.passage_id}, {"doc_id", h.doc_id},
                          {"score", h.score},           {"rank", h.rank},
                          {"has_answer", h.has_answer}};
      if (h.passage_score) j["passage_score"] = *h.passage_score;
      if (h.doc_score) j["doc_score"] = *h.doc_score;
      hits.push_back(std::move(j));
    }
    out << nlohmann::json{{"question", r.question}, {"hits", hits}}.dump() << "\n";
  }
  if (!out) throw DhrError(Err::io, "failed writing results file '" + path + "'");
}

inline std::vector<QuestionResult> load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DhrError(Err::io, "cannot open results file '" + path + "'");
  std::vector<QuestionResult> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (collapse_whitespace(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (j.contains("artifact")) continue;  // header line
      QuestionResult r;
      r.question = j.at("question").get<std::string>();
      for (const auto& h : j.at("hits")) {
        ResultHit hit;
        hit.passage_id = h.at("passage_id").get<std::string>();
        hit.doc_id = h.at("doc_id").get<std::string>();
        hit.score = h.at("score").get<double>();
        hit.rank = h.at("rank").get<size_t>();
        hit.has_answer = h.at("has_answer").get<bool>();
        if (h.contains("passage_score")) hit.passage_score = h["passage_score"].get<double>();
        if (h.contains("doc_score")) hit.doc_score = h["doc_score"].get<double>();
        r.hits.push_back(std::move(hit));
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DhrError(Err::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::json timing_to_json(const TimingBlock& t) {
  return {{"doc_search_ms", t.doc_search_ms},
          {"candidate_search_ms", t.candidate_search_ms},
          {"flat_search_ms", t.flat_search_ms},
          {"speedup", t.speedup},
          {"mean_candidate_fraction", t.mean_candidate_fraction},
          {"n_questions", t.n_questions},
          {"repeats", t.repeats},
          {"threads", t.threads}};
}

/// Versioned report record: per-cutoff accuracies, n, optional document-level
/// accuracies and timing block, and an echo of the retrieval config that
/// produced the results.
inline void write_report(const MetricsReport& report, const std::string& path,
                         const nlohmann::json& config_echo, std::string_view config_hash = "",
                         const MetricsReport* doc_report = nullptr) {
  std::ofstream out(path);
  if (!out) throw DhrError(Err::io, "cannot write report file '" + path + "'");
  auto cutoff_map = [](const MetricsReport& r) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, acc] : r.per_cutoff) m[std::to_string(k)] = acc;
    return m;
  };
  nlohmann::json j = {{"artifact", "report"},
                      {"version", 1},
                      {"config_hash", std::string(config_hash)},
                      {"per_cutoff", cutoff_map(report)},
                      {"doc_per_cutoff", doc_report ? cutoff_map(*doc_report) : nlohmann::json()},
                      {"n_questions", report.n_questions},
                      {"timing", report.timing ? timing_to_json(*report.timing) : nlohmann::json()},
                      {"config", config_echo}};
  out << j.dump(2) << "\n";
  if (!out) throw DhrError(Err::io, "failed writing report file '" + path + "'");
}

}  // namespace dhr
