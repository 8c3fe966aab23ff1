// dhr — hierarchical dense retrieval pipelines driven by one config file.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dhr/commands.hpp"
#include "dhr/config.hpp"
#include "json.hpp"

namespace {

constexpr const char* kFormatsFooter = R"(File formats (all UTF-8, one JSON record per line unless noted):
  corpus        {"doc_id", "title", "abstract", "sections": [{"level", "title", "text"}]}
  dataset       {"question", "answers": [..], "gold_doc_title"?, "gold_context"?}
  passage dump  header line, then {"passage_id", "doc_id", "title_path", "text"}
  instances     header line, then {"question", "positive_id", "negatives": [{"id", "tag"}], "level"}
  results       header line, then {"question", "hits": [{"passage_id", "doc_id", "score",
                "passage_score", "doc_score", "rank", "has_answer"}]}
  report        single JSON object with per-cutoff accuracies, n, timing, config echo
  model/index   versioned little-endian binaries (see README)
Every artifact embeds the hash of the effective config. Exit codes:
  0 ok, 2 config error, 3 data error, 4 internal invariant violation.)";

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::optional<size_t> k1, k2, max_words;
  std::optional<double> lambda;
  std::optional<std::string> mode;
  std::optional<std::string> corpus, train_dataset, dev_dataset, test_dataset;
  std::optional<std::string> doc_model, pass_model, doc_index, pass_index;
  std::optional<std::string> results, report;
  std::string level;
};

void add_common_options(CLI::App* cmd, std::string& config_path, Overrides& ov,
                        bool with_level) {
  cmd->add_option("--config", config_path, "JSON config file")->required();
  cmd->add_option("--seed", ov.seed, "override config seed");
  cmd->add_option("--threads", ov.threads, "global parallelism cap");
  cmd->add_option("--k1", ov.k1, "documents to retrieve");
  cmd->add_option("--k2", ov.k2, "passages to return");
  cmd->add_option("--lambda", ov.lambda, "score fusion coefficient");
  cmd->add_option("--mode", ov.mode, "serial_rerank | no_rerank | parallel_rerank");
  cmd->add_option("--max-words", ov.max_words, "passage split bound");
  cmd->add_option("--corpus", ov.corpus, "corpus file override");
  cmd->add_option("--train-dataset", ov.train_dataset, "training dataset override");
  cmd->add_option("--dev-dataset", ov.dev_dataset, "dev dataset override");
  cmd->add_option("--test-dataset", ov.test_dataset, "test dataset override");
  cmd->add_option("--doc-model", ov.doc_model, "document model checkpoint override");
  cmd->add_option("--pass-model", ov.pass_model, "passage model checkpoint override");
  cmd->add_option("--doc-index", ov.doc_index, "document index file override");
  cmd->add_option("--pass-index", ov.pass_index, "passage index file override");
  cmd->add_option("--results", ov.results, "results file override");
  cmd->add_option("--report", ov.report, "report file override");
  if (with_level) {
    cmd->add_option("--level", ov.level, "document | passage")
        ->check(CLI::IsMember({"document", "passage", "doc", "pass"}));
  }
}

void apply_overrides(dhr::RunConfig& cfg, const Overrides& ov) {
  if (ov.seed) {
    cfg.seed = *ov.seed;
    cfg.seed_set = true;
  }
  if (ov.threads) cfg.threads = *ov.threads;
  if (ov.k1) cfg.k1 = *ov.k1;
  if (ov.k2) cfg.k2 = *ov.k2;
  if (ov.lambda) cfg.lambda = *ov.lambda;
  if (ov.mode) cfg.mode = dhr::rerank_mode_from_name(*ov.mode);
  if (ov.max_words) cfg.max_words = *ov.max_words;
  if (ov.corpus) cfg.paths.corpus = *ov.corpus;
  if (ov.train_dataset) cfg.paths.train_dataset = *ov.train_dataset;
  if (ov.dev_dataset) cfg.paths.dev_dataset = *ov.dev_dataset;
  if (ov.test_dataset) cfg.paths.test_dataset = *ov.test_dataset;
  if (ov.doc_model) cfg.paths.doc_model = *ov.doc_model;
  if (ov.pass_model) cfg.paths.pass_model = *ov.pass_model;
  if (ov.doc_index) cfg.paths.doc_index = *ov.doc_index;
  if (ov.pass_index) cfg.paths.pass_index = *ov.pass_index;
  if (ov.results) cfg.paths.results = *ov.results;
  if (ov.report) cfg.paths.report = *ov.report;
}

int fail(std::string_view error, std::string_view message, int code) {
  std::cerr << nlohmann::json{{"error", std::string(error)}, {"message", std::string(message)}}
                   .dump()
            << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dhr — hierarchical dense retrieval: documents first, passages second,\n"
               "fused ranking third."};
  app.footer(kFormatsFooter);
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  struct CommandSpec {
    const char* name;
    const char* help;
    bool with_level;
  };
  const CommandSpec specs[] = {
      {"ingest", "parse the corpus and dump the passage table", false},
      {"mine-negatives", "select positives and mine negatives into an instance file", true},
      {"train", "train a dual encoder on an instance file", true},
      {"index", "encode all units at one level into an index file", true},
      {"retrieve", "run hierarchical retrieval for the test dataset", false},
      {"tune-lambda", "grid-search the fusion coefficient on the dev set", false},
      {"eval", "score a results file at the configured cutoffs", false},
      {"time", "measure per-stage search time and the pruning speedup", false},
      {"iterate", "mine hard negatives with the current model and retrain", true},
  };
  for (const CommandSpec& spec : specs) {
    CLI::App* cmd = app.add_subcommand(spec.name, spec.help);
    add_common_options(cmd, config_path, ov, spec.with_level);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << nlohmann::json{{"error", "ConfigError"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    dhr::RunConfig cfg = dhr::load_config(config_path);
    apply_overrides(cfg, ov);
    std::optional<dhr::Level> level;
    if (!ov.level.empty())
      level = (ov.level == "document" || ov.level == "doc") ? dhr::Level::document
                                                            : dhr::Level::passage;
    dhr::run_command(app.get_subcommands().front()->get_name(), cfg, level);
    return 0;
  } catch (const dhr::DhrError& e) {
    return fail(dhr::err_name(e.code()), e.what(), e.exit_code());
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), 4);
  }
}
