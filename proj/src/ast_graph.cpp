#include "plmgnn/ast_graph.hpp"

#include <tree_sitter/api.h>

#include <algorithm>
#include <memory>
#include <set>

#include "plmgnn/binary_io.hpp"
#include "plmgnn/checksum.hpp"
#include "plmgnn/error.hpp"

extern "C" {
const TSLanguage* tree_sitter_c(void);
const TSLanguage* tree_sitter_java(void);
}

namespace plmgnn {
namespace {

const TSLanguage* grammar(Language lang) {
  const TSLanguage* g = nullptr;
  switch (lang) {
    case Language::c: g = tree_sitter_c(); break;
    case Language::java: g = tree_sitter_java(); break;
  }
  if (g == nullptr) throw Error(ErrorCode::grammar_unavailable, std::string(to_string(lang)));
  return g;
}

struct ParserDeleter {
  void operator()(TSParser* p) const { ts_parser_delete(p); }
};
struct TreeDeleter {
  void operator()(TSTree* t) const { ts_tree_delete(t); }
};

// One parser per thread and language; tree-sitter parsers are not reentrant.
TSParser* thread_parser(Language lang) {
  thread_local std::unique_ptr<TSParser, ParserDeleter> parsers[2];
  auto& slot = parsers[static_cast<int>(lang)];
  if (!slot) {
    slot.reset(ts_parser_new());
    if (!ts_parser_set_language(slot.get(), grammar(lang)))
      throw Error(ErrorCode::grammar_unavailable, "incompatible grammar ABI for " +
                                                      std::string(to_string(lang)));
  }
  return slot.get();
}

constexpr char kGraphMagic[5] = "PGAG";
constexpr std::uint16_t kGraphVersion = 1;

}  // namespace

Language parse_language(std::string_view name) {
  if (name == "c" || name == "C") return Language::c;
  if (name == "java" || name == "Java") return Language::java;
  throw Error(ErrorCode::grammar_unavailable, "unknown language '" + std::string(name) + "'");
}

std::string_view to_string(Language lang) {
  return lang == Language::c ? "c" : "java";
}

EdgeKind reverse_of(EdgeKind k) {
  switch (k) {
    case EdgeKind::parent_child: return EdgeKind::reverse_parent_child;
    case EdgeKind::sibling: return EdgeKind::reverse_sibling;
    case EdgeKind::reverse_parent_child: return EdgeKind::parent_child;
    case EdgeKind::reverse_sibling: return EdgeKind::sibling;
  }
  return k;
}

std::vector<std::uint32_t> AstGraph::parents() const {
  std::vector<std::uint32_t> p(nodes.size());
  for (std::uint32_t i = 0; i < p.size(); ++i) p[i] = i;
  for (const auto& e : edges)
    if (e.kind == EdgeKind::parent_child) p[e.dst] = e.src;
  return p;
}

std::vector<std::vector<std::uint32_t>> AstGraph::children() const {
  std::vector<std::vector<std::uint32_t>> c(nodes.size());
  for (const auto& e : edges)
    if (e.kind == EdgeKind::parent_child) c[e.src].push_back(e.dst);
  for (auto& v : c) std::sort(v.begin(), v.end());
  return c;
}

TypeVocabulary::TypeVocabulary(Language lang) : language_(lang) {
  names_.push_back("<unk>");
  auto add = [this](const std::string& n) {
    if (ids_.emplace(n, static_cast<std::uint32_t>(names_.size())).second) names_.push_back(n);
  };
  const TSLanguage* g = grammar(lang);
  const std::uint32_t count = ts_language_symbol_count(g);
  for (std::uint32_t s = 0; s < count; ++s) {
    auto sym = static_cast<TSSymbol>(s);
    auto kind = ts_language_symbol_type(g, sym);
    if (kind != TSSymbolTypeRegular && kind != TSSymbolTypeAnonymous) continue;
    add(ts_language_symbol_name(g, sym));
  }
  add("ERROR");
}

const TypeVocabulary& TypeVocabulary::for_language(Language lang) {
  static const TypeVocabulary c(Language::c);
  static const TypeVocabulary java(Language::java);
  return lang == Language::c ? c : java;
}

std::uint32_t TypeVocabulary::id(std::string_view type_name) const {
  auto it = ids_.find(std::string(type_name));
  return it == ids_.end() ? kUnknown : it->second;
}

const std::string& TypeVocabulary::name(std::uint32_t id) const {
  return id < names_.size() ? names_[id] : names_[kUnknown];
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  const auto n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      return false;
    i += len;
  }
  return true;
}

AstGraph parse_source(std::string_view source, Language lang, const ParseOptions& opts) {
  if (!is_valid_utf8(source)) throw Error(ErrorCode::encoding, "source is not valid UTF-8");
  if (source.size() > UINT32_MAX) throw Error(ErrorCode::invalid_argument, "source too large");

  TSParser* parser = thread_parser(lang);
  std::unique_ptr<TSTree, TreeDeleter> tree(ts_parser_parse_string(
      parser, nullptr, source.data(), static_cast<std::uint32_t>(source.size())));
  if (!tree) throw Error(ErrorCode::parse_failure, "parser returned no tree");

  const auto& vocab = TypeVocabulary::for_language(lang);
  AstGraph g;
  g.language = lang;
  g.source_ref = to_hex(sha256(source));

  auto child_count = [&](TSNode n) {
    return opts.named_only ? ts_node_named_child_count(n) : ts_node_child_count(n);
  };
  auto child_at = [&](TSNode n, std::uint32_t i) {
    return opts.named_only ? ts_node_named_child(n, i) : ts_node_child(n, i);
  };

  std::vector<Edge> forward;
  struct Frame {
    TSNode node;
    std::uint32_t parent;
    bool has_parent;
  };
  // Pre-order traversal; children pushed in reverse so they pop in source order.
  std::vector<Frame> stack{{ts_tree_root_node(tree.get()), 0, false}};
  std::vector<std::vector<std::uint32_t>> kids;
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    const auto id = static_cast<std::uint32_t>(g.nodes.size());
    AstNode node;
    node.id = id;
    node.type_name = ts_node_type(f.node);
    node.type_id = vocab.id(node.type_name);
    node.span_start = ts_node_start_byte(f.node);
    node.span_end = ts_node_end_byte(f.node);
    node.is_error = ts_node_is_error(f.node) || ts_node_is_missing(f.node);
    if (!f.has_parent) {
      node.span_start = 0;
      node.span_end = static_cast<std::uint32_t>(source.size());
    }
    g.nodes.push_back(std::move(node));
    kids.emplace_back();
    if (f.has_parent) kids[f.parent].push_back(id);

    const auto n = child_count(f.node);
    for (std::uint32_t i = n; i-- > 0;) stack.push_back({child_at(f.node, i), id, true});
  }

  for (std::uint32_t p = 0; p < kids.size(); ++p) {
    const auto& c = kids[p];
    for (auto child : c) forward.push_back({p, child, EdgeKind::parent_child});
    if (opts.siblings == SiblingMode::consecutive) {
      for (std::size_t i = 1; i < c.size(); ++i)
        forward.push_back({c[i - 1], c[i], EdgeKind::sibling});
    } else {
      for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j)
          forward.push_back({c[i], c[j], EdgeKind::sibling});
    }
  }
  g.edges = add_reverse_edges(forward);
  return g;
}

std::vector<Edge> add_reverse_edges(std::span<const Edge> forward) {
  std::set<Edge> seen;
  for (const auto& e : forward) {
    if (is_reverse(e.kind))
      throw Error(ErrorCode::duplicate_edge, "input already contains reverse edges");
    if (!seen.insert(e).second)
      throw Error(ErrorCode::duplicate_edge, "edge " + std::to_string(e.src) + "->" +
                                                 std::to_string(e.dst) + " appears twice");
  }
  std::vector<Edge> out(forward.begin(), forward.end());
  out.reserve(2 * forward.size());
  for (const auto& e : forward) out.push_back({e.dst, e.src, reverse_of(e.kind)});
  return out;
}

std::string serialize_graph(const AstGraph& g) {
  ByteWriter body;
  body.magic(kGraphMagic);
  body.u16(kGraphVersion);
  body.u8(static_cast<std::uint8_t>(g.language));
  body.u32(static_cast<std::uint32_t>(g.nodes.size()));
  for (const auto& n : g.nodes) {
    body.u32(n.type_id);
    body.u32(n.span_start);
    body.u32(n.span_end);
    body.u8(n.is_error ? 1 : 0);
  }
  body.u32(static_cast<std::uint32_t>(g.edges.size()));
  for (const auto& e : g.edges) {
    body.u32(e.src);
    body.u32(e.dst);
    body.u8(static_cast<std::uint8_t>(e.kind));
  }
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(body.size()));
  out.bytes(body.str());
  return std::move(out).take();
}

AstGraph deserialize_graph(std::string_view record) {
  ByteReader outer(record);
  const auto len = outer.u32();
  ByteReader r(outer.bytes(len));
  r.expect_magic(kGraphMagic);
  if (const auto v = r.u16(); v != kGraphVersion)
    throw Error(ErrorCode::format, "unsupported PGAG version " + std::to_string(v));
  const auto lang_byte = r.u8();
  if (lang_byte > 1) throw Error(ErrorCode::format, "bad language tag");
  AstGraph g;
  g.language = static_cast<Language>(lang_byte);
  const auto& vocab = TypeVocabulary::for_language(g.language);
  const auto n = r.u32();
  g.nodes.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& node = g.nodes[i];
    node.id = i;
    node.type_id = r.u32();
    node.type_name = vocab.name(node.type_id);
    node.span_start = r.u32();
    node.span_end = r.u32();
    node.is_error = (r.u8() & 1) != 0;
  }
  const auto m = r.u32();
  g.edges.resize(m);
  for (auto& e : g.edges) {
    e.src = r.u32();
    e.dst = r.u32();
    const auto k = r.u8();
    if (k > 3) throw Error(ErrorCode::format, "bad edge kind");
    e.kind = static_cast<EdgeKind>(k);
    if (e.src >= n || e.dst >= n) throw Error(ErrorCode::format, "edge endpoint out of range");
  }
  if (!r.done()) throw Error(ErrorCode::format, "trailing bytes in PGAG record");
  return g;
}

}  // namespace plmgnn
