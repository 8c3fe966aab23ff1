#pragma once

// Hierarchical inference: retrieve top-k1 documents, score their passages,
// fuse the two relevance scores (score = f_psi + lambda * f_phi), return
// top-k2. Includes the no-rerank and parallel-rerank ablation variants and
// the two-pass lambda grid search.

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dhr/corpus.hpp"
#include "dhr/encoder.hpp"
#include "dhr/error.hpp"
#include "dhr/index.hpp"
#include "dhr/sparse.hpp"
#include "dhr/trainer.hpp"
#include "dhr/types.hpp"

namespace dhr {

enum class RerankMode { serial_rerank, no_rerank, parallel_rerank };

inline RerankMode rerank_mode_from_name(std::string_view name) {
  if (name == "serial_rerank") return RerankMode::serial_rerank;
  if (name == "no_rerank") return RerankMode::no_rerank;
  if (name == "parallel_rerank") return RerankMode::parallel_rerank;
  throw DhrError(Err::config, "unknown rerank mode '" + std::string(name) + "'");
}

inline std::string_view rerank_mode_name(RerankMode m) {
  switch (m) {
    case RerankMode::serial_rerank: return "serial_rerank";
    case RerankMode::no_rerank: return "no_rerank";
    case RerankMode::parallel_rerank: return "parallel_rerank";
  }
  return "unknown";
}

struct RetrievalConfig {
  size_t k1 = 100;      // documents to retrieve
  size_t k2 = 100;      // passages to return
  double lambda = 1.0;  // fusion coefficient
  RerankMode mode = RerankMode::serial_rerank;

  void validate() const {
    if (k1 < 1 || k2 < 1 || lambda < 0.0)
      throw DhrError(Err::config, "retrieval requires k1 >= 1, k2 >= 1, lambda >= 0");
  }
};

/// Immutable retrieval state: store, both models, both indexes, and the
/// doc -> passage-row mapping used for candidate restriction. Per-question
/// retrieval is stateless and safe to run concurrently.
struct Pipeline {
  const CorpusStore* store = nullptr;
  const EncoderModel* doc_model = nullptr;
  const EncoderModel* pass_model = nullptr;
  const MipsIndex* doc_index = nullptr;
  const MipsIndex* pass_index = nullptr;
  SepStyle style = SepStyle::comma;
  std::unordered_map<std::string, std::vector<uint32_t>> doc_rows;

  static Pipeline make(const CorpusStore& store, const EncoderModel& doc_model,
                       const EncoderModel& pass_model, const MipsIndex& doc_index,
                       const MipsIndex& pass_index, SepStyle style) {
    Pipeline p;
    p.store = &store;
    p.doc_model = &doc_model;
    p.pass_model = &pass_model;
    p.doc_index = &doc_index;
    p.pass_index = &pass_index;
    p.style = style;
    for (const std::string& doc_id : store.doc_ids()) {
      std::vector<uint32_t> rows;
      for (const std::string& pid : store.doc_passages(doc_id)) {
        size_t row = pass_index.row_of(pid);
        if (row == MipsIndex::npos)
          throw DhrError(Err::internal, "passage '" + pid + "' missing from index");
        rows.push_back(static_cast<uint32_t>(row));
      }
      p.doc_rows.emplace(doc_id, std::move(rows));
    }
    return p;
  }
};

/// Top-k1 documents for a question.
inline std::vector<ScoredHit> retrieve_documents(const std::string& question,
                                                 const MipsIndex& doc_index,
                                                 const EncoderModel& doc_model, size_t k1) {
  return search(doc_index, encode(doc_model, TextSide::question, question), k1);
}

/// Flat passage search over the whole corpus (the DPR-style baseline).
inline std::vector<ScoredHit> retrieve_passages_flat(const std::string& question,
                                                     const MipsIndex& pass_index,
                                                     const EncoderModel& pass_model, size_t k) {
  return search(pass_index, encode(pass_model, TextSide::question, question), k);
}

namespace detail {

struct PassageCandidate {
  uint32_t row = 0;
  double passage_score = 0.0;
  double doc_score = 0.0;
};

/// Candidate passages of the top-k1 documents, with both level scores.
/// The candidate set depends on k1 only, not on lambda.
inline std::vector<PassageCandidate> serial_candidates(const Pipeline& p,
                                                       const EmbeddingVector& qd,
                                                       const EmbeddingVector& qp, size_t k1) {
  std::vector<PassageCandidate> out;
  for (const ScoredHit& doc_hit : search(*p.doc_index, qd, k1)) {
    auto it = p.doc_rows.find(doc_hit.unit_id);
    if (it == p.doc_rows.end()) continue;
    for (uint32_t row : it->second)
      out.push_back(PassageCandidate{row, p.pass_index->dot(row, qp), doc_hit.score});
  }
  return out;
}

/// All passages with both level scores (documents scored exhaustively).
inline std::vector<PassageCandidate> parallel_candidates(const Pipeline& p,
                                                         const EmbeddingVector& qd,
                                                         const EmbeddingVector& qp) {
  std::unordered_map<std::string, double> doc_scores;
  doc_scores.reserve(p.doc_index->size());
  for (size_t i = 0; i < p.doc_index->size(); ++i)
    doc_scores.emplace(p.doc_index->ids[i], p.doc_index->dot(i, qd));

  std::vector<PassageCandidate> out;
  out.reserve(p.pass_index->size());
  for (uint32_t row = 0; row < p.pass_index->size(); ++row) {
    const std::string& doc_id = p.store->passage(p.pass_index->ids[row]).doc_id;
    auto it = doc_scores.find(doc_id);
    if (it == doc_scores.end())
      throw DhrError(Err::internal, "document '" + doc_id + "' missing from index");
    out.push_back(PassageCandidate{row, p.pass_index->dot(row, qp), it->second});
  }
  return out;
}

/// Rank candidates by the given fused scores, ties by ascending passage id,
/// and keep the best k2 (or all candidates when fewer).
inline std::vector<ScoredHit> rank_candidates(const Pipeline& p,
                                              std::vector<PassageCandidate> candidates,
                                              double lambda, bool fuse, size_t k2) {
  std::vector<ScoredHit> hits;
  hits.reserve(candidates.size());
  for (const PassageCandidate& c : candidates) {
    ScoredHit hit;
    hit.unit_id = p.pass_index->ids[c.row];
    hit.passage_score = c.passage_score;
    hit.doc_score = c.doc_score;
    hit.score = fuse ? c.passage_score + lambda * c.doc_score : c.passage_score;
    hits.push_back(std::move(hit));
  }
  auto better = [](const ScoredHit& a, const ScoredHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.unit_id < b.unit_id;
  };
  if (hits.size() > k2) {
    std::nth_element(hits.begin(), hits.begin() + k2, hits.end(), better);
    hits.resize(k2);
  }
  std::sort(hits.begin(), hits.end(), better);
  return hits;
}

}  // namespace detail

/// Hierarchical retrieval in one of the three modes.
inline std::vector<ScoredHit> retrieve_hierarchical(const std::string& question,
                                                    const RetrievalConfig& config,
                                                    const Pipeline& p) {
  config.validate();
  EmbeddingVector qd = encode(*p.doc_model, TextSide::question, question);
  EmbeddingVector qp = encode(*p.pass_model, TextSide::question, question);

  switch (config.mode) {
    case RerankMode::serial_rerank:
      return detail::rank_candidates(p, detail::serial_candidates(p, qd, qp, config.k1),
                                     config.lambda, true, config.k2);
    case RerankMode::no_rerank:
      return detail::rank_candidates(p, detail::serial_candidates(p, qd, qp, config.k1),
                                     config.lambda, false, config.k2);
    case RerankMode::parallel_rerank:
      return detail::rank_candidates(p, detail::parallel_candidates(p, qd, qp), config.lambda,
                                     true, config.k2);
  }
  throw DhrError(Err::internal, "unreachable rerank mode");
}

// --- lambda tuning ---------------------------------------------------------

namespace detail {

struct TuneCandidate {
  double passage_score = 0.0;
  double doc_score = 0.0;
  bool answer_bearing = false;
  const std::string* passage_id = nullptr;
};

/// Whether the top-`cutoff` passages under fused scores at this lambda
/// contain an answer-bearing one.
inline bool hit_at_lambda(std::vector<TuneCandidate>& cands, double lambda, size_t cutoff) {
  auto better = [lambda](const TuneCandidate& a, const TuneCandidate& b) {
    double sa = a.passage_score + lambda * a.doc_score;
    double sb = b.passage_score + lambda * b.doc_score;
    if (sa != sb) return sa > sb;
    return *a.passage_id < *b.passage_id;
  };
  size_t k = std::min(cutoff, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + k, cands.end(), better);
  for (size_t i = 0; i < k; ++i) {
    if (cands[i].answer_bearing) return true;
  }
  return false;
}

}  // namespace detail

/// Dev top-`cutoff` accuracy for each lambda over the serial candidate sets.
/// Shared by tune_lambda and its oracle tests.
inline std::vector<double> lambda_grid_accuracy(const std::vector<QAExample>& dev,
                                                const Pipeline& p, size_t k1,
                                                const std::vector<double>& lambdas,
                                                size_t cutoff = 20) {
  if (dev.empty()) throw DhrError(Err::empty_dev_set, "lambda tuning needs a dev set");
  std::vector<double> hits(lambdas.size(), 0.0);
  for (const QAExample& ex : dev) {
    EmbeddingVector qd = encode(*p.doc_model, TextSide::question, ex.question);
    EmbeddingVector qp = encode(*p.pass_model, TextSide::question, ex.question);
    std::vector<detail::PassageCandidate> raw = detail::serial_candidates(p, qd, qp, k1);
    std::vector<detail::TuneCandidate> cands;
    cands.reserve(raw.size());
    for (const detail::PassageCandidate& c : raw) {
      const std::string& pid = p.pass_index->ids[c.row];
      cands.push_back(detail::TuneCandidate{c.passage_score, c.doc_score,
                                            has_answer(p.store->passage(pid).text, ex.answers),
                                            &p.pass_index->ids[c.row]});
    }
    for (size_t li = 0; li < lambdas.size(); ++li) {
      if (detail::hit_at_lambda(cands, lambdas[li], cutoff)) hits[li] += 1.0;
    }
  }
  for (double& h : hits) h /= static_cast<double>(dev.size());
  return hits;
}

/// Two-pass grid search maximizing dev top-`cutoff` accuracy: step 0.1 over
/// [lo, hi], then step 0.01 over [l1 - 0.05, l1 + 0.05]. Ties go to the
/// smaller lambda.
inline double tune_lambda(const std::vector<QAExample>& dev, const Pipeline& p, size_t k1,
                          size_t cutoff = 20, double lo = 0.0, double hi = 2.0) {
  if (dev.empty()) throw DhrError(Err::empty_dev_set, "lambda tuning needs a dev set");

  std::vector<double> coarse;
  for (int i = 0; lo + 0.1 * i <= hi + 1e-12; ++i) coarse.push_back(lo + 0.1 * i);
  std::vector<double> coarse_acc = lambda_grid_accuracy(dev, p, k1, coarse, cutoff);
  size_t best_i = 0;
  for (size_t i = 1; i < coarse.size(); ++i) {
    if (coarse_acc[i] > coarse_acc[best_i]) best_i = i;
  }
  double l1 = coarse[best_i];

  std::vector<double> fine;
  for (int j = 0; j <= 10; ++j) {
    double l = l1 + 0.01 * (j - 5);
    if (l >= lo - 1e-12 && l <= hi + 1e-12) fine.push_back(l);
  }
  std::vector<double> fine_acc = lambda_grid_accuracy(dev, p, k1, fine, cutoff);
  size_t best_j = 0;
  for (size_t j = 1; j < fine.size(); ++j) {
    if (fine_acc[j] > fine_acc[best_j]) best_j = j;
  }
  return fine[best_j];
}

}  // namespace dhr
