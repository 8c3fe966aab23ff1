#pragma once

// Exact flat maximum-inner-product indexes over document and passage
// embeddings. No approximation: search equals a brute-force scan with
// deterministic tie-breaking on ascending unit id.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "dhr/corpus.hpp"
#include "dhr/encoder.hpp"
#include "dhr/error.hpp"
#include "dhr/types.hpp"

namespace dhr {

/// Row i is the embedding of ids[i]; ids are unique and sorted
/// lexicographically. Immutable after build; searches are lock-free reads.
struct MipsIndex {
  Level level = Level::document;
  uint32_t dim = 0;
  std::vector<std::string> ids;
  std::vector<double> matrix;  // ids.size() x dim, row-major

  size_t size() const { return ids.size(); }

  const double* row(size_t i) const { return matrix.data() + i * dim; }

  double dot(size_t row_idx, const EmbeddingVector& q) const {
    const double* r = row(row_idx);
    double acc = 0.0;
    for (uint32_t j = 0; j < dim; ++j) acc += r[j] * q[j];
    return acc;
  }

  /// Row index of a unit id, or npos.
  size_t row_of(const std::string& id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return npos;
    return static_cast<size_t>(it - ids.begin());
  }

  static constexpr size_t npos = static_cast<size_t>(-1);
};

/// Encode every unit at the given level; rows in lexicographic unit-id order.
inline MipsIndex build_index(const CorpusStore& store, const EncoderModel& model, Level level,
                             SepStyle style) {
  MipsIndex index;
  index.level = level;
  index.dim = model.dim;
  index.ids = level == Level::document ? store.doc_ids() : store.passage_ids();
  std::sort(index.ids.begin(), index.ids.end());
  index.matrix.resize(index.ids.size() * static_cast<size_t>(model.dim));
  for (size_t i = 0; i < index.ids.size(); ++i) {
    EmbeddingVector v = encode(model, TextSide::context, unit_text(store, level, index.ids[i], style));
    std::copy(v.begin(), v.end(), index.matrix.begin() + i * model.dim);
  }
  return index;
}

namespace detail {

/// Top-k of the given rows by dot product; ties break by ascending unit id.
inline std::vector<ScoredHit> top_k_rows(const MipsIndex& index, const EmbeddingVector& q,
                                         size_t k, const std::vector<uint32_t>& rows) {
  std::vector<std::pair<double, uint32_t>> scored;
  scored.reserve(rows.size());
  for (uint32_t r : rows) scored.emplace_back(index.dot(r, q), r);

  auto better = [&index](const std::pair<double, uint32_t>& a,
                         const std::pair<double, uint32_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    return index.ids[a.second] < index.ids[b.second];
  };
  if (scored.size() > k) {
    std::nth_element(scored.begin(), scored.begin() + k, scored.end(), better);
    scored.resize(k);
  }
  std::sort(scored.begin(), scored.end(), better);

  std::vector<ScoredHit> hits;
  hits.reserve(scored.size());
  for (const auto& [s, r] : scored) hits.push_back(ScoredHit{index.ids[r], s, {}, {}});
  return hits;
}

inline std::vector<uint32_t> all_rows(const MipsIndex& index) {
  std::vector<uint32_t> rows(index.size());
  for (uint32_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

}  // namespace detail

/// Exact top-k by inner product, optionally restricted to a set of unit ids.
/// An empty restriction returns an empty list.
inline std::vector<ScoredHit> search(
    const MipsIndex& index, const EmbeddingVector& q, size_t k,
    const std::optional<std::unordered_set<std::string>>& restrict_ids = std::nullopt) {
  if (q.size() != index.dim)
    throw DhrError(Err::dimension_mismatch, "query dim " + std::to_string(q.size()) +
                                                " vs index dim " + std::to_string(index.dim));
  if (k < 1) throw DhrError(Err::config, "search requires k >= 1");

  std::vector<uint32_t> rows;
  if (restrict_ids) {
    rows.reserve(restrict_ids->size());
    for (uint32_t i = 0; i < index.size(); ++i) {
      if (restrict_ids->count(index.ids[i])) rows.push_back(i);
    }
  } else {
    rows = detail::all_rows(index);
  }
  return detail::top_k_rows(index, q, k, rows);
}

/// Fast path for callers that already hold row indexes (hierarchical
/// candidate restriction); same results as `search` over the matching ids.
inline std::vector<ScoredHit> search_rows(const MipsIndex& index, const EmbeddingVector& q,
                                          size_t k, const std::vector<uint32_t>& rows) {
  if (q.size() != index.dim)
    throw DhrError(Err::dimension_mismatch, "query dim " + std::to_string(q.size()) +
                                                " vs index dim " + std::to_string(index.dim));
  if (k < 1) throw DhrError(Err::config, "search requires k >= 1");
  return detail::top_k_rows(index, q, k, rows);
}

// --- index file ---------------------------------------------------------

/// Layout (little-endian): magic "DHRX", version u32, level u8, dim u32,
/// count u64, config-hash string, id table (length-prefixed strings),
/// row-major float32 matrix.
inline void save_index(const MipsIndex& index, const std::string& path,
                       std::string_view config_hash = "") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DhrError(Err::io, "cannot write index file '" + path + "'");
  detail::write_bytes(out, "DHRX", 4);
  detail::write_pod<uint32_t>(out, 1);
  detail::write_pod<uint8_t>(out, index.level == Level::document ? 0 : 1);
  detail::write_pod<uint32_t>(out, index.dim);
  detail::write_pod<uint64_t>(out, index.ids.size());
  detail::write_string(out, config_hash);
  for (const std::string& id : index.ids) detail::write_string(out, id);
  std::vector<float> row(index.dim);
  for (size_t i = 0; i < index.ids.size(); ++i) {
    const double* src = index.row(i);
    for (uint32_t j = 0; j < index.dim; ++j) row[j] = static_cast<float>(src[j]);
    detail::write_bytes(out, row.data(), row.size() * sizeof(float));
  }
  if (!out) throw DhrError(Err::io, "failed writing index file '" + path + "'");
}

/// Loads the float32 matrix back into the in-memory double layout.
inline MipsIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DhrError(Err::io, "cannot open index file '" + path + "'");
  char magic[4];
  detail::read_bytes(in, magic, 4);
  if (std::string_view(magic, 4) != "DHRX")
    throw DhrError(Err::parse, "not an index file: '" + path + "'");
  uint32_t version = detail::read_pod<uint32_t>(in);
  if (version != 1)
    throw DhrError(Err::parse, "unsupported index version " + std::to_string(version));
  MipsIndex index;
  index.level = detail::read_pod<uint8_t>(in) == 0 ? Level::document : Level::passage;
  index.dim = detail::read_pod<uint32_t>(in);
  uint64_t count = detail::read_pod<uint64_t>(in);
  detail::read_string(in);  // config hash, informational
  index.ids.reserve(count);
  for (uint64_t i = 0; i < count; ++i) index.ids.push_back(detail::read_string(in));
  index.matrix.resize(count * static_cast<size_t>(index.dim));
  std::vector<float> row(index.dim);
  for (uint64_t i = 0; i < count; ++i) {
    detail::read_bytes(in, row.data(), row.size() * sizeof(float));
    for (uint32_t j = 0; j < index.dim; ++j) index.matrix[i * index.dim + j] = row[j];
  }
  return index;
}

}  // namespace dhr
