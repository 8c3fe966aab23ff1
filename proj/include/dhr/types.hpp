#pragma once

#include <optional>
#include <string>

namespace dhr {

enum class Level { document, passage };

inline std::string_view level_name(Level l) {
  return l == Level::document ? "document" : "passage";
}

/// Ranked result. BM25 and single-index searches fill only `score`; fused
/// hierarchical hits also carry the per-level scores, with
/// score = passage_score + lambda * doc_score as computed.
struct ScoredHit {
  std::string unit_id;
  double score = 0.0;
  std::optional<double> doc_score;
  std::optional<double> passage_score;
};

}  // namespace dhr
