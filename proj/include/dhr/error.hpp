#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dhr {

enum class Err {
  malformed_record,
  empty_document,
  io,
  parse,
  duplicate_doc_id,
  duplicate_unit_id,
  dimension_mismatch,
  empty_batch,
  no_trainable_instances,
  empty_dev_set,
  missing_question,
  config,
  internal,
};

inline std::string_view err_name(Err e) {
  switch (e) {
    case Err::malformed_record: return "MalformedRecord";
    case Err::empty_document: return "EmptyDocument";
    case Err::io: return "IoError";
    case Err::parse: return "ParseError";
    case Err::duplicate_doc_id: return "DuplicateDocId";
    case Err::duplicate_unit_id: return "DuplicateUnitId";
    case Err::dimension_mismatch: return "DimensionMismatch";
    case Err::empty_batch: return "EmptyBatch";
    case Err::no_trainable_instances: return "NoTrainableInstances";
    case Err::empty_dev_set: return "EmptyDevSet";
    case Err::missing_question: return "MissingQuestion";
    case Err::config: return "ConfigError";
    case Err::internal: return "InternalError";
  }
  return "UnknownError";
}

class DhrError : public std::runtime_error {
 public:
  DhrError(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}

  Err code() const { return code_; }

  // Process exit code contract: 0 ok, 2 config error, 3 data error,
  // 4 internal invariant violation.
  int exit_code() const {
    switch (code_) {
      case Err::config: return 2;
      case Err::internal: return 4;
      default: return 3;
    }
  }

 private:
  Err code_;
};

}  // namespace dhr
