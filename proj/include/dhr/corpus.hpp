#pragma once

// Structured documents as title trees: parsing, document summaries,
// in-section splitting into passages, and the immutable corpus store.

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dhr/error.hpp"
#include "dhr/text.hpp"
#include "dhr/types.hpp"
#include "json.hpp"

namespace dhr {

/// Separator used when linearizing title structure: the literal "[SEP]"
/// marker or a plain comma.
enum class SepStyle { sep_token, comma };

inline std::string_view sep_string(SepStyle s) {
  return s == SepStyle::sep_token ? " [SEP] " : ", ";
}

inline SepStyle sep_style_from_name(std::string_view name) {
  if (name == "sep") return SepStyle::sep_token;
  if (name == "comma") return SepStyle::comma;
  throw DhrError(Err::config, "unknown separator_style '" + std::string(name) + "'");
}

inline std::string_view sep_style_name(SepStyle s) {
  return s == SepStyle::sep_token ? "sep" : "comma";
}

// --- domain types -----------------------------------------------------------

struct TitleNode {
  int id = 0;
  std::string title;
  std::vector<int> children;        // TitleNode ids, source order
  std::vector<int> content_leaves;  // ContentLeaf ids, source order
};

struct ContentLeaf {
  int id = 0;
  int parent_title = 0;
  std::string text;  // whitespace-canonicalized at parse time
  size_t word_count = 0;
};

/// One root title node (the document title); every node id appears exactly
/// once. Nodes/leaves are stored in creation order, which equals source order.
struct TitleTree {
  std::vector<TitleNode> nodes;
  std::vector<ContentLeaf> leaves;
  int root = 0;
};

struct Passage {
  std::string passage_id;
  std::string doc_id;
  std::vector<std::string> title_path;  // root title first
  std::string text;
  size_t word_count = 0;
  int leaf_index = 0;  // which ContentLeaf this block came from
};

struct Document {
  std::string doc_id;
  std::string title;
  std::string abstract;  // content of the first leaf directly under the root
  TitleTree tree;
  std::vector<std::string> passages;  // filled when registered in a store
};

/// Input record: title, optional abstract, ordered (level, title, text)
/// sections.
struct RawSection {
  int level = 1;
  std::string title;
  std::string text;
};

struct RawRecord {
  std::string doc_id;
  std::string title;
  std::string abstract;
  std::vector<RawSection> sections;
};

// --- parsing ----------------------------------------------------------------

/// Build the title tree for one record. Sections nest by heading level with
/// level jumps > +1 clamped to parent+1; body text becomes a content leaf
/// under its nearest heading; text before the first heading becomes the
/// abstract leaf under the root. Leaf text is whitespace-canonicalized so the
/// split round-trip is well defined.
inline Document parse_document(const RawRecord& record) {
  const std::string title = collapse_whitespace(record.title);
  const std::string abstract = collapse_whitespace(record.abstract);

  if (title.empty()) {
    bool any_text = !abstract.empty();
    for (const auto& s : record.sections) {
      if (!collapse_whitespace(s.text).empty() || !collapse_whitespace(s.title).empty())
        any_text = true;
    }
    if (!any_text) throw DhrError(Err::empty_document, "record has no title and no text");
    throw DhrError(Err::malformed_record, "record is missing a title");
  }

  Document doc;
  doc.doc_id = record.doc_id;
  doc.title = title;
  doc.abstract = abstract;

  TitleTree& tree = doc.tree;
  tree.nodes.push_back(TitleNode{0, title, {}, {}});
  tree.root = 0;

  auto add_leaf = [&tree](int node_id, const std::string& text) {
    int leaf_id = static_cast<int>(tree.leaves.size());
    tree.leaves.push_back(ContentLeaf{leaf_id, node_id, text, count_words(text)});
    tree.nodes[node_id].content_leaves.push_back(leaf_id);
  };

  if (!abstract.empty()) add_leaf(0, abstract);

  // Stack of (declared heading level, node id); the root sits at level 0.
  std::vector<std::pair<int, int>> stack{{0, 0}};
  for (const auto& section : record.sections) {
    if (section.level < 1) {
      throw DhrError(Err::malformed_record,
                     "section '" + section.title + "' has level " + std::to_string(section.level));
    }
    while (stack.back().first >= section.level) stack.pop_back();
    int parent = stack.back().second;
    int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TitleNode{node_id, collapse_whitespace(section.title), {}, {}});
    tree.nodes[parent].children.push_back(node_id);
    stack.emplace_back(section.level, node_id);

    std::string body = collapse_whitespace(section.text);
    if (!body.empty()) add_leaf(node_id, body);
  }
  return doc;
}

namespace detail {

template <typename Fn>
inline void preorder_titles(const TitleTree& tree, int node_id, Fn&& fn) {
  fn(tree.nodes[node_id]);
  for (int child : tree.nodes[node_id].children) preorder_titles(tree, child, fn);
}

}  // namespace detail

/// T_table: pre-order concatenation of title-node titles excluding the root.
inline std::string linearize_toc(const Document& doc, SepStyle style) {
  std::vector<std::string> titles;
  detail::preorder_titles(doc.tree, doc.tree.root, [&](const TitleNode& node) {
    if (node.id != doc.tree.root) titles.push_back(node.title);
  });
  return join(titles, sep_string(style));
}

/// "[CLS] T_d <sep> W_ab <sep> T_table [SEP]" — the DHR-D encoder input.
/// [CLS]/[SEP] are literal markers; encoders may use or ignore them.
inline std::string document_summary(const Document& doc, SepStyle style) {
  std::string_view sep = sep_string(style);
  std::string out = "[CLS] ";
  out += doc.title;
  out += sep;
  out += doc.abstract;
  out += sep;
  out += linearize_toc(doc, style);
  out += " [SEP]";
  return out;
}

/// "[CLS] T_d <sep> T_i1 <sep> ... <sep> W_p [SEP]" — the DHR-P encoder input.
inline std::string passage_representation(const Passage& p, SepStyle style) {
  std::string_view sep = sep_string(style);
  std::string out = "[CLS] ";
  out += join(p.title_path, sep);
  out += sep;
  out += p.text;
  out += " [SEP]";
  return out;
}

/// Greedy in-section split: per content leaf, consecutive blocks of exactly
/// max_words words plus a shorter final remainder. Blocks never cross leaf
/// boundaries and remainders are kept, so concatenating a leaf's passages
/// reproduces the leaf text. Passage ids are "<doc_id>#<ordinal>".
inline std::vector<Passage> split_sections(const Document& doc, size_t max_words = 100) {
  if (max_words < 1) throw DhrError(Err::config, "max_words must be >= 1");

  // Root-to-node title paths.
  std::vector<std::vector<std::string>> paths(doc.tree.nodes.size());
  {
    std::vector<std::string> path;
    auto walk = [&](auto&& self, int node_id) -> void {
      path.push_back(doc.tree.nodes[node_id].title);
      paths[node_id] = path;
      for (int child : doc.tree.nodes[node_id].children) self(self, child);
      path.pop_back();
    };
    walk(walk, doc.tree.root);
  }

  std::vector<Passage> out;
  size_t ordinal = 0;
  for (const ContentLeaf& leaf : doc.tree.leaves) {
    std::vector<std::string> words = split_words(leaf.text);
    for (size_t start = 0; start < words.size(); start += max_words) {
      size_t len = std::min(max_words, words.size() - start);
      Passage p;
      p.passage_id = doc.doc_id + "#" + std::to_string(ordinal++);
      p.doc_id = doc.doc_id;
      p.title_path = paths[leaf.parent_title];
      p.text = join({words.begin() + start, words.begin() + start + len}, " ");
      p.word_count = len;
      p.leaf_index = leaf.id;
      out.push_back(std::move(p));
    }
  }
  return out;
}

// --- corpus store -----------------------------------------------------------

/// Immutable-after-load corpus: N documents, M passages, and the
/// doc -> ordered passage ids mapping. Safe for concurrent readers once built.
class CorpusStore {
 public:
  void add_document(Document doc, std::vector<Passage> passages) {
    if (documents_.count(doc.doc_id))
      throw DhrError(Err::duplicate_doc_id, "duplicate doc_id '" + doc.doc_id + "'");
    std::vector<std::string> ids;
    ids.reserve(passages.size());
    for (Passage& p : passages) {
      if (passages_.count(p.passage_id))
        throw DhrError(Err::duplicate_unit_id, "duplicate passage_id '" + p.passage_id + "'");
      ids.push_back(p.passage_id);
      passage_order_.push_back(p.passage_id);
      passages_.emplace(p.passage_id, std::move(p));
    }
    doc.passages = ids;
    doc_to_passages_.emplace(doc.doc_id, std::move(ids));
    doc_order_.push_back(doc.doc_id);
    documents_.emplace(doc.doc_id, std::move(doc));
  }

  size_t n_docs() const { return documents_.size(); }
  size_t n_passages() const { return passages_.size(); }

  bool has_doc(const std::string& id) const { return documents_.count(id) > 0; }
  bool has_passage(const std::string& id) const { return passages_.count(id) > 0; }

  const Document& doc(const std::string& id) const {
    auto it = documents_.find(id);
    if (it == documents_.end()) throw DhrError(Err::parse, "unknown doc_id '" + id + "'");
    return it->second;
  }

  const Passage& passage(const std::string& id) const {
    auto it = passages_.find(id);
    if (it == passages_.end()) throw DhrError(Err::parse, "unknown passage_id '" + id + "'");
    return it->second;
  }

  const std::vector<std::string>& doc_passages(const std::string& doc_id) const {
    auto it = doc_to_passages_.find(doc_id);
    if (it == doc_to_passages_.end()) throw DhrError(Err::parse, "unknown doc_id '" + doc_id + "'");
    return it->second;
  }

  /// Document ids in load order.
  const std::vector<std::string>& doc_ids() const { return doc_order_; }
  /// Passage ids in load order (document order, then ordinal).
  const std::vector<std::string>& passage_ids() const { return passage_order_; }

  /// Whole document content: leaf texts in tree order. Titles are structure,
  /// not content, so they are not part of the full text.
  std::string full_text(const std::string& doc_id) const {
    const Document& d = doc(doc_id);
    std::vector<std::string> parts;
    parts.reserve(d.tree.leaves.size());
    for (const ContentLeaf& leaf : d.tree.leaves) parts.push_back(leaf.text);
    return join(parts, " ");
  }

 private:
  std::unordered_map<std::string, Document> documents_;
  std::unordered_map<std::string, Passage> passages_;
  std::unordered_map<std::string, std::vector<std::string>> doc_to_passages_;
  std::vector<std::string> doc_order_;
  std::vector<std::string> passage_order_;
};

/// Encoder input text for a unit at the given level.
inline std::string unit_text(const CorpusStore& store, Level level, const std::string& id,
                             SepStyle style) {
  if (level == Level::document) return document_summary(store.doc(id), style);
  return passage_representation(store.passage(id), style);
}

/// Raw text used for answer containment at the given level.
inline std::string unit_raw_text(const CorpusStore& store, Level level, const std::string& id) {
  if (level == Level::document) return store.full_text(id);
  return store.passage(id).text;
}

// --- corpus file ------------------------------------------------------------

inline RawRecord raw_record_from_json(const nlohmann::json& j) {
  RawRecord rec;
  if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string())
    throw DhrError(Err::parse, "record needs a string 'doc_id'");
  rec.doc_id = j["doc_id"].get<std::string>();
  if (j.contains("title")) {
    if (!j["title"].is_string()) throw DhrError(Err::parse, "'title' must be a string");
    rec.title = j["title"].get<std::string>();
  }
  if (j.contains("abstract")) {
    if (!j["abstract"].is_string()) throw DhrError(Err::parse, "'abstract' must be a string");
    rec.abstract = j["abstract"].get<std::string>();
  }
  if (j.contains("sections")) {
    if (!j["sections"].is_array()) throw DhrError(Err::parse, "'sections' must be an array");
    for (const auto& s : j["sections"]) {
      if (!s.is_object() || !s.contains("level") || !s["level"].is_number_integer() ||
          !s.contains("title") || !s["title"].is_string() || !s.contains("text") ||
          !s["text"].is_string())
        throw DhrError(Err::parse, "section needs {level:int, title:string, text:string}");
      rec.sections.push_back(
          RawSection{s["level"].get<int>(), s["title"].get<std::string>(), s["text"].get<std::string>()});
    }
  }
  return rec;
}

/// Load a line-delimited corpus file (one JSON record per line, UTF-8).
inline CorpusStore load_corpus(const std::string& path, size_t max_words = 100) {
  std::ifstream in(path);
  if (!in) throw DhrError(Err::io, "cannot open corpus file '" + path + "'");

  CorpusStore store;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (collapse_whitespace(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      Document doc = parse_document(raw_record_from_json(j));
      std::vector<Passage> passages = split_sections(doc, max_words);
      store.add_document(std::move(doc), std::move(passages));
    } catch (const DhrError& e) {
      if (e.code() == Err::duplicate_doc_id) throw;
      throw DhrError(Err::parse, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw DhrError(Err::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

}  // namespace dhr
