#pragma once

// Pluggable text -> vector encoders behind a dual-encoder contract: a
// dependency-free hashed bag-of-words backend and a trainable linear backend
// over the same hashed feature space, plus the dot-product relevance score
// and the contrastive loss/gradient used for training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dhr/error.hpp"
#include "dhr/text.hpp"

namespace dhr {

using EmbeddingVector = std::vector<double>;

enum class EncoderKind { hashed_bow, linear_trainable };
enum class TextSide { question, context };

/// Word-count caps applied before hashing (question 80; context 512 for
/// document-level models, 280 for passage-level).
struct EncoderCaps {
  size_t question = 80;
  size_t context = 512;
};

/// Question-side and context-side parameters are distinct (dual encoder);
/// hashed_bow has no trainable parameters and shares one fixed projection.
struct EncoderModel {
  EncoderKind kind = EncoderKind::hashed_bow;
  uint32_t dim = 64;       // l
  uint32_t buckets = 65536;  // hashed vocabulary size V
  uint64_t seed = 0;
  EncoderCaps caps;
  std::vector<double> w_question;  // dim x buckets, row-major (linear only)
  std::vector<double> w_context;

  static EncoderModel hashed(uint32_t dim, uint32_t buckets, uint64_t seed,
                             EncoderCaps caps = {}) {
    EncoderModel m;
    m.kind = EncoderKind::hashed_bow;
    m.dim = dim;
    m.buckets = buckets;
    m.seed = seed;
    m.caps = caps;
    return m;
  }

  /// Linear model with small seeded Gaussian init (zero init is a saddle of
  /// the contrastive loss: all scores vanish and so do the gradients).
  static EncoderModel linear(uint32_t dim, uint32_t buckets, uint64_t seed,
                             EncoderCaps caps = {}, double init_scale = 0.1) {
    EncoderModel m = hashed(dim, buckets, seed, caps);
    m.kind = EncoderKind::linear_trainable;
    std::mt19937_64 rng(sub_seed(seed, "linear-init"));
    std::normal_distribution<double> dist(0.0, init_scale);
    size_t n = static_cast<size_t>(dim) * buckets;
    m.w_question.resize(n);
    m.w_context.resize(n);
    for (double& w : m.w_question) w = dist(rng);
    for (double& w : m.w_context) w = dist(rng);
    return m;
  }
};

namespace detail {

inline uint32_t token_bucket(const EncoderModel& m, std::string_view token) {
  return static_cast<uint32_t>(splitmix64(fnv1a64(token) ^ sub_seed(m.seed, "hashing")) %
                               m.buckets);
}

/// Fixed random +-1 projection entry, derived on the fly.
inline double projection_sign(const EncoderModel& m, uint32_t row, uint32_t bucket) {
  uint64_t h = splitmix64(sub_seed(m.seed, "projection") ^
                          (static_cast<uint64_t>(row) << 32 | bucket));
  return (h & 1) ? 1.0 : -1.0;
}

}  // namespace detail

/// Shared feature extraction: tokenize, cap, hash each token into V buckets,
/// count, l2-normalize. Returned sparse vector is sorted by bucket.
inline std::vector<std::pair<uint32_t, double>> bucket_features(const EncoderModel& model,
                                                                TextSide side,
                                                                std::string_view text) {
  std::vector<std::string> tokens = split_words(text);
  size_t cap = side == TextSide::question ? model.caps.question : model.caps.context;
  if (tokens.size() > cap) tokens.resize(cap);

  std::map<uint32_t, double> counts;
  for (const std::string& t : tokens) counts[detail::token_bucket(model, t)] += 1.0;

  double norm_sq = 0.0;
  for (const auto& [bucket, c] : counts) norm_sq += c * c;
  std::vector<std::pair<uint32_t, double>> features(counts.begin(), counts.end());
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& [bucket, c] : features) c *= inv;
  }
  return features;
}

/// Deterministic for a fixed seed; empty text yields the zero vector.
inline EmbeddingVector encode(const EncoderModel& model, TextSide side, std::string_view text) {
  std::vector<std::pair<uint32_t, double>> features = bucket_features(model, side, text);
  EmbeddingVector out(model.dim, 0.0);
  if (model.kind == EncoderKind::hashed_bow) {
    for (uint32_t j = 0; j < model.dim; ++j) {
      double acc = 0.0;
      for (const auto& [bucket, v] : features) acc += detail::projection_sign(model, j, bucket) * v;
      out[j] = acc;
    }
  } else {
    const std::vector<double>& w =
        side == TextSide::question ? model.w_question : model.w_context;
    for (uint32_t j = 0; j < model.dim; ++j) {
      const double* row = w.data() + static_cast<size_t>(j) * model.buckets;
      double acc = 0.0;
      for (const auto& [bucket, v] : features) acc += row[bucket] * v;
      out[j] = acc;
    }
  }
  return out;
}

/// Dot-product relevance score.
inline double score(const EmbeddingVector& qv, const EmbeddingVector& cv) {
  if (qv.size() != cv.size())
    throw DhrError(Err::dimension_mismatch, "vector lengths " + std::to_string(qv.size()) +
                                                " vs " + std::to_string(cv.size()));
  double acc = 0.0;
  for (size_t i = 0; i < qv.size(); ++i) acc += qv[i] * cv[i];
  return acc;
}

/// Cosine similarity, available for experiments; dot product stays the
/// default everywhere.
inline double cosine(const EmbeddingVector& qv, const EmbeddingVector& cv) {
  double dot = score(qv, cv);
  double nq = std::sqrt(score(qv, qv));
  double nc = std::sqrt(score(cv, cv));
  if (nq == 0.0 || nc == 0.0) return 0.0;
  return dot / (nq * nc);
}

// --- contrastive loss and gradient ------------------------------------------

/// One resolved training instance: encoder input texts, positive first.
struct ContrastiveBatchItem {
  std::string question;
  std::string positive;
  std::vector<std::string> negatives;
};

namespace detail {

struct BatchScores {
  std::vector<EmbeddingVector> question_vecs;            // per instance
  std::vector<EmbeddingVector> slot_vecs;                // per pool slot
  std::vector<std::vector<std::pair<uint32_t, double>>> question_feats;
  std::vector<std::vector<std::pair<uint32_t, double>>> slot_feats;
  std::vector<size_t> target_slot;                       // per instance
  std::vector<std::vector<double>> scores;               // [instance][slot]
};

/// Pool slots are every instance's positive followed by its explicit
/// negatives, batch order, no dedup: the in-batch pool of every instance.
inline BatchScores score_batch(const EncoderModel& model,
                               const std::vector<ContrastiveBatchItem>& batch) {
  BatchScores out;
  for (const ContrastiveBatchItem& item : batch) {
    out.question_feats.push_back(bucket_features(model, TextSide::question, item.question));
    out.question_vecs.push_back(encode(model, TextSide::question, item.question));
    out.target_slot.push_back(out.slot_vecs.size());
    out.slot_feats.push_back(bucket_features(model, TextSide::context, item.positive));
    out.slot_vecs.push_back(encode(model, TextSide::context, item.positive));
    for (const std::string& neg : item.negatives) {
      out.slot_feats.push_back(bucket_features(model, TextSide::context, neg));
      out.slot_vecs.push_back(encode(model, TextSide::context, neg));
    }
  }
  out.scores.resize(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    out.scores[i].resize(out.slot_vecs.size());
    for (size_t s = 0; s < out.slot_vecs.size(); ++s)
      out.scores[i][s] = score(out.question_vecs[i], out.slot_vecs[s]);
  }
  return out;
}

/// loss_i = (max_i - s_pos) + ln(sum_s exp(s_s - max_i)); exact ln(pool size)
/// when all scores tie.
inline double instance_loss(const std::vector<double>& scores, size_t target) {
  double max_score = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - max_score);
  return (max_score - scores[target]) + std::log(sum);
}

}  // namespace detail

/// Mean over the batch of the negative log-likelihood of each positive
/// against the full in-batch pool.
inline double contrastive_loss_texts(const EncoderModel& model,
                                     const std::vector<ContrastiveBatchItem>& batch) {
  if (batch.empty()) throw DhrError(Err::empty_batch, "contrastive loss over an empty batch");
  detail::BatchScores bs = detail::score_batch(model, batch);
  double total = 0.0;
  for (size_t i = 0; i < batch.size(); ++i)
    total += detail::instance_loss(bs.scores[i], bs.target_slot[i]);
  return total / static_cast<double>(batch.size());
}

/// Column-sparse parameter gradient: bucket -> d(loss)/d(W[:, bucket]).
struct LinearGradient {
  uint32_t dim = 0;
  std::map<uint32_t, std::vector<double>> w_question;
  std::map<uint32_t, std::vector<double>> w_context;
};

/// Exact gradient of contrastive_loss_texts w.r.t. both weight matrices.
inline LinearGradient grad_linear(const EncoderModel& model,
                                  const std::vector<ContrastiveBatchItem>& batch) {
  if (model.kind != EncoderKind::linear_trainable)
    throw DhrError(Err::config, "grad_linear requires a linear_trainable model");
  if (batch.empty()) throw DhrError(Err::empty_batch, "gradient over an empty batch");

  detail::BatchScores bs = detail::score_batch(model, batch);
  const size_t m = batch.size();
  const size_t pool = bs.slot_vecs.size();
  const double inv_m = 1.0 / static_cast<double>(m);

  // dL/ds[i][s] = (softmax_i(s) - [s == target_i]) / m
  std::vector<std::vector<double>> dscore(m, std::vector<double>(pool, 0.0));
  for (size_t i = 0; i < m; ++i) {
    const std::vector<double>& row = bs.scores[i];
    double max_score = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double s : row) denom += std::exp(s - max_score);
    for (size_t s = 0; s < pool; ++s) dscore[i][s] = std::exp(row[s] - max_score) / denom * inv_m;
    dscore[i][bs.target_slot[i]] -= inv_m;
  }

  LinearGradient grad;
  grad.dim = model.dim;

  // dL/dWq = sum_i (sum_s dL/ds[i][s] * c_s) x_qi^T
  for (size_t i = 0; i < m; ++i) {
    std::vector<double> g(model.dim, 0.0);
    for (size_t s = 0; s < pool; ++s) {
      const double d = dscore[i][s];
      if (d == 0.0) continue;
      for (uint32_t j = 0; j < model.dim; ++j) g[j] += d * bs.slot_vecs[s][j];
    }
    for (const auto& [bucket, v] : bs.question_feats[i]) {
      auto [it, inserted] = grad.w_question.try_emplace(bucket, model.dim, 0.0);
      for (uint32_t j = 0; j < model.dim; ++j) it->second[j] += v * g[j];
    }
  }

  // dL/dWc = sum_s (sum_i dL/ds[i][s] * q_i) x_s^T
  for (size_t s = 0; s < pool; ++s) {
    std::vector<double> h(model.dim, 0.0);
    for (size_t i = 0; i < m; ++i) {
      const double d = dscore[i][s];
      if (d == 0.0) continue;
      for (uint32_t j = 0; j < model.dim; ++j) h[j] += d * bs.question_vecs[i][j];
    }
    for (const auto& [bucket, v] : bs.slot_feats[s]) {
      auto [it, inserted] = grad.w_context.try_emplace(bucket, model.dim, 0.0);
      for (uint32_t j = 0; j < model.dim; ++j) it->second[j] += v * h[j];
    }
  }
  return grad;
}

/// One SGD step: W -= lr * grad.
inline void apply_gradient(EncoderModel& model, const LinearGradient& grad, double lr) {
  if (model.kind != EncoderKind::linear_trainable)
    throw DhrError(Err::config, "apply_gradient requires a linear_trainable model");
  for (const auto& [bucket, col] : grad.w_question)
    for (uint32_t j = 0; j < model.dim; ++j)
      model.w_question[static_cast<size_t>(j) * model.buckets + bucket] -= lr * col[j];
  for (const auto& [bucket, col] : grad.w_context)
    for (uint32_t j = 0; j < model.dim; ++j)
      model.w_context[static_cast<size_t>(j) * model.buckets + bucket] -= lr * col[j];
}

// --- checkpoint file --------------------------------------------------------

namespace detail {

inline void write_bytes(std::ostream& out, const void* data, size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
inline void write_pod(std::ostream& out, T value) {
  write_bytes(out, &value, sizeof(T));
}

inline void write_string(std::ostream& out, std::string_view s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

inline void read_bytes(std::istream& in, void* data, size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in) throw DhrError(Err::parse, "truncated binary file");
}

template <typename T>
inline T read_pod(std::istream& in) {
  T value;
  read_bytes(in, &value, sizeof(T));
  return value;
}

inline std::string read_string(std::istream& in) {
  uint32_t n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  if (n > 0) read_bytes(in, s.data(), n);
  return s;
}

}  // namespace detail

/// Versioned little-endian binary: kind, dim, V, seed, caps, config hash,
/// and for trainable models both weight matrices row-major (float64).
inline void save_model(const EncoderModel& model, const std::string& path,
                       std::string_view config_hash = "") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DhrError(Err::io, "cannot write model file '" + path + "'");
  detail::write_bytes(out, "DHRM", 4);
  detail::write_pod<uint32_t>(out, 1);  // version
  detail::write_pod<uint8_t>(out, model.kind == EncoderKind::hashed_bow ? 0 : 1);
  detail::write_pod<uint32_t>(out, model.dim);
  detail::write_pod<uint32_t>(out, model.buckets);
  detail::write_pod<uint64_t>(out, model.seed);
  detail::write_pod<uint64_t>(out, model.caps.question);
  detail::write_pod<uint64_t>(out, model.caps.context);
  detail::write_string(out, config_hash);
  if (model.kind == EncoderKind::linear_trainable) {
    detail::write_bytes(out, model.w_question.data(), model.w_question.size() * sizeof(double));
    detail::write_bytes(out, model.w_context.data(), model.w_context.size() * sizeof(double));
  }
  if (!out) throw DhrError(Err::io, "failed writing model file '" + path + "'");
}

inline EncoderModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DhrError(Err::io, "cannot open model file '" + path + "'");
  char magic[4];
  detail::read_bytes(in, magic, 4);
  if (std::string_view(magic, 4) != "DHRM")
    throw DhrError(Err::parse, "not a model file: '" + path + "'");
  uint32_t version = detail::read_pod<uint32_t>(in);
  if (version != 1)
    throw DhrError(Err::parse, "unsupported model version " + std::to_string(version));
  EncoderModel model;
  model.kind = detail::read_pod<uint8_t>(in) == 0 ? EncoderKind::hashed_bow
                                                  : EncoderKind::linear_trainable;
  model.dim = detail::read_pod<uint32_t>(in);
  model.buckets = detail::read_pod<uint32_t>(in);
  model.seed = detail::read_pod<uint64_t>(in);
  model.caps.question = detail::read_pod<uint64_t>(in);
  model.caps.context = detail::read_pod<uint64_t>(in);
  detail::read_string(in);  // config hash, informational
  if (model.kind == EncoderKind::linear_trainable) {
    size_t n = static_cast<size_t>(model.dim) * model.buckets;
    model.w_question.resize(n);
    model.w_context.resize(n);
    detail::read_bytes(in, model.w_question.data(), n * sizeof(double));
    detail::read_bytes(in, model.w_context.data(), n * sizeof(double));
  }
  return model;
}

}  // namespace dhr
