#pragma once

// Independent oracle implementations used to freeze expected values. These
// deliberately avoid the library's index/loss code paths: BM25 is scored by
// direct per-unit scans, top-k by a full sort, the softmax loss without the
// max-shift trick, and gradients by central finite differences.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dhr/encoder.hpp"
#include "dhr/text.hpp"

namespace oracle {

// --- BM25 -----------------------------------------------------------------

struct Bm25Corpus {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> tokens;  // normalized
  double avg_len = 0.0;

  explicit Bm25Corpus(const std::vector<std::pair<std::string, std::string>>& units) {
    size_t total = 0;
    for (const auto& [id, text] : units) {
      ids.push_back(id);
      tokens.push_back(dhr::normalize_tokens(text));
      total += tokens.back().size();
    }
    avg_len = ids.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(ids.size());
  }

  size_t df(const std::string& term) const {
    size_t n = 0;
    for (const auto& unit : tokens) {
      if (std::find(unit.begin(), unit.end(), term) != unit.end()) ++n;
    }
    return n;
  }

  size_t tf(size_t unit, const std::string& term) const {
    return static_cast<size_t>(std::count(tokens[unit].begin(), tokens[unit].end(), term));
  }
};

inline double bm25_score(const Bm25Corpus& corpus, size_t unit, const std::string& query,
                         double k1, double b) {
  double score = 0.0;
  for (const std::string& term : dhr::normalize_tokens(query)) {
    const double df = static_cast<double>(corpus.df(term));
    if (df == 0.0) continue;
    const double tf = static_cast<double>(corpus.tf(unit, term));
    if (tf == 0.0) continue;
    const double n = static_cast<double>(corpus.ids.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double len = static_cast<double>(corpus.tokens[unit].size());
    score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / corpus.avg_len));
  }
  return score;
}

inline std::vector<std::pair<std::string, double>> bm25_rank(
    const std::vector<std::pair<std::string, std::string>>& units, const std::string& query,
    size_t k, double k1, double b) {
  Bm25Corpus corpus(units);
  std::vector<std::pair<std::string, double>> scored;
  for (size_t u = 0; u < corpus.ids.size(); ++u) {
    double s = bm25_score(corpus, u, query, k1, b);
    if (s > 0.0) scored.emplace_back(corpus.ids[u], s);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// --- exact top-k inner product ----------------------------------------------

inline std::vector<std::pair<std::string, double>> mips_topk(
    const std::vector<std::string>& ids, const std::vector<std::vector<double>>& rows,
    const std::vector<double>& query, size_t k,
    const std::optional<std::set<std::string>>& restrict_ids = std::nullopt) {
  std::vector<std::pair<std::string, double>> scored;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (restrict_ids && !restrict_ids->count(ids[i])) continue;
    double acc = 0.0;
    for (size_t j = 0; j < query.size(); ++j) acc += rows[i][j] * query[j];
    scored.emplace_back(ids[i], acc);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// --- contrastive loss -------------------------------------------------------

/// Plain softmax negative log-likelihood from a precomputed score matrix,
/// no max-shift: loss = mean_i of -log(exp(s[i][target_i]) / sum_s exp(s[i][s])).
inline double softmax_loss(const std::vector<std::vector<double>>& scores,
                           const std::vector<size_t>& targets) {
  double total = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    double denom = 0.0;
    for (double s : scores[i]) denom += std::exp(s);
    total += -std::log(std::exp(scores[i][targets[i]]) / denom);
  }
  return total / static_cast<double>(scores.size());
}

/// Score matrix for a batch straight from encode/score, mirroring the pool
/// layout (each instance's positive then its negatives, batch order).
inline std::vector<std::vector<double>> batch_scores(
    const dhr::EncoderModel& model, const std::vector<dhr::ContrastiveBatchItem>& batch,
    std::vector<size_t>& targets) {
  std::vector<dhr::EmbeddingVector> pool;
  targets.clear();
  for (const auto& item : batch) {
    targets.push_back(pool.size());
    pool.push_back(dhr::encode(model, dhr::TextSide::context, item.positive));
    for (const auto& neg : item.negatives)
      pool.push_back(dhr::encode(model, dhr::TextSide::context, neg));
  }
  std::vector<std::vector<double>> scores(batch.size(), std::vector<double>(pool.size()));
  for (size_t i = 0; i < batch.size(); ++i) {
    dhr::EmbeddingVector qv = dhr::encode(model, dhr::TextSide::question, batch[i].question);
    for (size_t s = 0; s < pool.size(); ++s) scores[i][s] = dhr::score(qv, pool[s]);
  }
  return scores;
}

// --- finite differences -----------------------------------------------------

/// Central finite difference of the implemented batch loss w.r.t. one weight
/// entry.
inline double fd_grad_entry(dhr::EncoderModel model,
                            const std::vector<dhr::ContrastiveBatchItem>& batch, bool question_side,
                            size_t flat_index, double step = 1e-4) {
  std::vector<double>& w = question_side ? model.w_question : model.w_context;
  const double original = w[flat_index];
  w[flat_index] = original + step;
  double up = dhr::contrastive_loss_texts(model, batch);
  w[flat_index] = original - step;
  double down = dhr::contrastive_loss_texts(model, batch);
  w[flat_index] = original;
  return (up - down) / (2.0 * step);
}

// --- answer containment -------------------------------------------------

/// Character-level re-implementation: normalize both strings into
/// single-space-joined token strings and look for a word-boundary substring.
inline bool contains_answer(const std::string& text, const std::string& answer) {
  auto flatten = [](const std::string& s) {
    std::string out = " ";
    std::string token;
    auto flush = [&]() {
      if (!token.empty()) {
        out += token;
        out += ' ';
        token.clear();
      }
    };
    for (char c : s) {
      unsigned char u = static_cast<unsigned char>(c);
      if (std::isspace(u)) {
        flush();
      } else if (u < 128 && std::ispunct(u)) {
        // dropped
      } else {
        token.push_back(u < 128 ? static_cast<char>(std::tolower(u)) : c);
      }
    }
    flush();
    return out;
  };
  std::string hay = flatten(text);
  std::string needle = flatten(answer);
  if (needle == " ") return false;
  return hay.find(needle) != std::string::npos;
}

}  // namespace oracle
