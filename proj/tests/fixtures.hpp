#pragma once

// Shared test fixtures: temp directories, the DNA-sequencing document, random
// document generation for property tests, and the planted retrieval corpora.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dhr/corpus.hpp"
#include "dhr/trainer.hpp"
#include "json.hpp"

namespace fixtures {

class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "dhr_test_XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// --- hand-built fixtures ------------------------------------------------

/// The DNA-sequencing article skeleton: root title, abstract, a level-1
/// section and a nested level-2 section.
inline dhr::RawRecord dna_record() {
  dhr::RawRecord rec;
  rec.doc_id = "dna_seq";
  rec.title = "DNA sequencing";
  rec.abstract =
      "DNA sequencing is the process of determining the order of nucleotides in DNA.";
  rec.sections = {
      {1, "History", "Early sequencing efforts used two-dimensional chromatography."},
      {2, "Discovery of DNA structure and function",
       "Deoxyribonucleic acid (DNA) was first discovered and isolated by Friedrich Miescher "
       "in 1869. In 1953, James Watson and Francis Crick put forward their double-helix model "
       "of DNA."},
  };
  return rec;
}

inline std::string words_of(size_t n, const std::string& prefix, size_t start = 0) {
  std::string out;
  for (size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += prefix + std::to_string(start + i);
  }
  return out;
}

// --- random documents for property tests -------------------------------

inline dhr::RawRecord random_record(std::mt19937_64& rng, size_t doc_idx) {
  std::uniform_int_distribution<size_t> n_sections(0, 6);
  std::uniform_int_distribution<size_t> n_words(0, 260);
  std::uniform_int_distribution<int> level_step(1, 3);
  std::uniform_int_distribution<size_t> vocab(0, 400);

  auto sentence = [&](size_t n) {
    std::string out;
    for (size_t i = 0; i < n; ++i) {
      if (!out.empty()) out += ' ';
      out += "w" + std::to_string(vocab(rng));
    }
    return out;
  };

  dhr::RawRecord rec;
  rec.doc_id = "rand" + std::to_string(doc_idx);
  rec.title = "Random article " + std::to_string(doc_idx);
  rec.abstract = sentence(n_words(rng));
  int level = 1;
  size_t sections = n_sections(rng);
  for (size_t s = 0; s < sections; ++s) {
    // Random walk over heading levels, including illegal +2/+3 jumps the
    // parser must clamp.
    int step = level_step(rng) - 2;  // -1, 0, +1 .. occasionally bumped below
    if (vocab(rng) % 7 == 0) step = 3;
    level = std::max(1, level + step);
    rec.sections.push_back(
        {level, "Section " + std::to_string(doc_idx) + "." + std::to_string(s),
         sentence(n_words(rng))});
  }
  return rec;
}

// --- planted retrieval corpus ---------------------------------------------

struct PlantedOptions {
  size_t n_docs = 200;
  size_t sections_per_doc = 2;
  size_t words_per_section = 450;  // ~5 passages per section at max_words=100
  size_t questions_per_doc = 2;
  double distractor_fraction = 0.0;  // inject same-term wrong-document passages
  bool noise_doc_summaries = false;  // titles/abstracts/tocs carry no signal
  bool gold_annotations = true;      // attach gold_doc_title/gold_context
  uint64_t seed = 7;
};

struct PlantedCorpus {
  std::vector<dhr::RawRecord> records;
  std::vector<dhr::QAExample> train;
  std::vector<dhr::QAExample> dev;
  std::vector<dhr::QAExample> test;

  void write_corpus(const std::string& path) const {
    std::ofstream out(path);
    for (const dhr::RawRecord& rec : records) {
      nlohmann::json sections = nlohmann::json::array();
      for (const dhr::RawSection& s : rec.sections)
        sections.push_back({{"level", s.level}, {"title", s.title}, {"text", s.text}});
      out << nlohmann::json{{"doc_id", rec.doc_id},
                            {"title", rec.title},
                            {"abstract", rec.abstract},
                            {"sections", sections}}
                 .dump()
          << "\n";
    }
  }

  static void write_dataset(const std::vector<dhr::QAExample>& examples,
                            const std::string& path) {
    std::ofstream out(path);
    for (const dhr::QAExample& ex : examples) {
      nlohmann::json j = {{"question", ex.question}, {"answers", ex.answers}};
      if (ex.gold_doc_title) j["gold_doc_title"] = *ex.gold_doc_title;
      if (ex.gold_context) j["gold_context"] = *ex.gold_context;
      out << j.dump() << "\n";
    }
  }
};

/// Synthetic corpus with per-document topic vocabulary and per-passage
/// content words. Questions copy a gold passage's distinctive tokens and the
/// answer token is planted only in that passage. Optional distractors put the
/// question's content tokens (but not the answer) into a different document,
/// reproducing the similar-passage/wrong-document failure mode.
inline PlantedCorpus make_planted(const PlantedOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<size_t> filler(0, 199);
  PlantedCorpus out;

  auto topic_word = [&](size_t doc, size_t j) {
    return "topic" + std::to_string(doc) + "x" + std::to_string(j);
  };
  auto content_word = [&](size_t doc, size_t sec, size_t j) {
    return "body" + std::to_string(doc) + "s" + std::to_string(sec) + "w" + std::to_string(j);
  };
  auto filler_word = [&]() { return "filler" + std::to_string(filler(rng)); };

  struct GoldQuestion {
    size_t doc = 0;
    std::string question;
    std::string answer;
    std::string context;
  };
  std::vector<GoldQuestion> questions;

  for (size_t d = 0; d < opt.n_docs; ++d) {
    dhr::RawRecord rec;
    rec.doc_id = "doc" + (std::string(3 - std::min<size_t>(3, std::to_string(d).size()), '0') +
                          std::to_string(d));
    if (opt.noise_doc_summaries) {
      rec.title = "article " + std::to_string(d);
      rec.abstract = filler_word() + " " + filler_word() + " " + filler_word();
    } else {
      rec.title = "Guide to " + topic_word(d, 0) + " and " + topic_word(d, 1);
      rec.abstract = "Overview of " + topic_word(d, 0) + " " + topic_word(d, 1) + " " +
                     topic_word(d, 2) + " with " + filler_word() + " " + filler_word();
    }

    for (size_t s = 0; s < opt.sections_per_doc; ++s) {
      std::string section_title = opt.noise_doc_summaries
                                      ? "part " + std::to_string(s)
                                      : "Aspects of " + topic_word(d, 3 + s);
      std::string text;
      for (size_t w = 0; w < opt.words_per_section; ++w) {
        if (!text.empty()) text += ' ';
        if (w % 11 == 0 && !opt.noise_doc_summaries) {
          text += topic_word(d, w % 3);
        } else if (w % 3 == 0) {
          text += content_word(d, s, w);
        } else {
          text += filler_word();
        }
      }
      rec.sections.push_back({1, section_title, text});
    }
    out.records.push_back(std::move(rec));
  }

  // Questions: pick a 100-word window inside a section so the whole window
  // lands in one passage, quote its distinctive tokens, and plant the answer.
  std::uniform_int_distribution<size_t> pick_section(0, opt.sections_per_doc - 1);
  for (size_t d = 0; d < opt.n_docs; ++d) {
    for (size_t q = 0; q < opt.questions_per_doc; ++q) {
      size_t s = pick_section(rng);
      size_t block = 1 + (q % 3);  // passage ordinal inside the section
      std::vector<std::string> words = dhr::split_words(out.records[d].sections[s].text);
      size_t start = block * 100;
      if (start + 100 > words.size()) start = 0;

      GoldQuestion gq;
      gq.doc = d;
      gq.answer = "answer" + std::to_string(d) + "q" + std::to_string(q);
      words[start + 50] = gq.answer;  // plant inside the block

      std::string question = "what about";
      size_t used = 0;
      for (size_t w = start; w < start + 100 && used < 6; ++w) {
        if (words[w].rfind("body", 0) == 0) {
          question += " " + words[w];
          ++used;
        }
      }
      if (!opt.noise_doc_summaries)
        question += " " + (std::string("topic") + std::to_string(d) + "x0");
      gq.question = question;

      // Refresh section text with the planted answer.
      std::string text;
      for (const std::string& w : words) {
        if (!text.empty()) text += ' ';
        text += w;
      }
      out.records[d].sections[s].text = text;
      gq.context = dhr::join({words.begin() + start, words.begin() + start + 100}, " ");
      questions.push_back(std::move(gq));
    }
  }

  // Distractors: copy a question's content tokens into a different document,
  // answer absent, twice as dense as in the gold passage.
  if (opt.distractor_fraction > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (size_t qi = 0; qi < questions.size(); ++qi) {
      if (coin(rng) > opt.distractor_fraction) continue;
      const GoldQuestion& gq = questions[qi];
      size_t other = (gq.doc + 1 + qi % (opt.n_docs - 1)) % opt.n_docs;
      std::vector<std::string> qwords = dhr::split_words(gq.question);
      std::string text;
      for (int rep = 0; rep < 6; ++rep) {
        for (size_t w = 2; w < qwords.size(); ++w) {  // skip "what about"
          if (qwords[w].rfind("topic", 0) == 0) continue;
          if (!text.empty()) text += ' ';
          text += qwords[w];
        }
      }
      out.records[other].sections.push_back(
          {1, "Miscellany " + std::to_string(qi), text});
    }
  }

  for (size_t qi = 0; qi < questions.size(); ++qi) {
    const GoldQuestion& gq = questions[qi];
    dhr::QAExample ex;
    ex.question = gq.question;
    ex.answers = {gq.answer};
    if (opt.gold_annotations && qi % 2 == 0) {
      ex.gold_doc_title = out.records[gq.doc].title;
      ex.gold_context = gq.context;
    }
    switch (qi % 5) {
      case 0:
      case 1:
      case 2:
        out.train.push_back(std::move(ex));
        break;
      case 3:
        out.dev.push_back(std::move(ex));
        break;
      default:
        out.test.push_back(std::move(ex));
        break;
    }
  }
  return out;
}

}  // namespace fixtures
