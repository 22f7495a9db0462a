#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace plmgnn {

enum class Language : std::uint8_t { java = 0, c = 1 };

Language parse_language(std::string_view name);
std::string_view to_string(Language lang);

enum class EdgeKind : std::uint8_t {
  parent_child = 0,
  sibling = 1,
  reverse_parent_child = 2,
  reverse_sibling = 3,
};

inline bool is_reverse(EdgeKind k) {
  return k == EdgeKind::reverse_parent_child || k == EdgeKind::reverse_sibling;
}
EdgeKind reverse_of(EdgeKind k);

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  EdgeKind kind = EdgeKind::parent_child;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct AstNode {
  std::uint32_t id = 0;
  std::uint32_t type_id = 0;
  std::string type_name;
  std::uint32_t span_start = 0;  // byte offset, inclusive
  std::uint32_t span_end = 0;    // byte offset, exclusive
  bool is_error = false;

  friend bool operator==(const AstNode&, const AstNode&) = default;
};

/// Typed AST with structural edges and their reverses. Node ids are pre-order
/// indices; node 0 is the root and spans the whole source.
struct AstGraph {
  std::vector<AstNode> nodes;
  std::vector<Edge> edges;
  std::uint32_t root = 0;
  std::string source_ref;  // hex SHA-256 of the parsed source bytes
  Language language = Language::c;

  std::size_t num_nodes() const { return nodes.size(); }
  std::vector<std::uint32_t> parents() const;  // root maps to itself
  std::vector<std::vector<std::uint32_t>> children() const;

  friend bool operator==(const AstGraph&, const AstGraph&) = default;
};

enum class SiblingMode { consecutive, all_pairs };

struct ParseOptions {
  SiblingMode siblings = SiblingMode::consecutive;
  bool named_only = false;  // drop anonymous (punctuation/keyword) nodes
};

/// Dense node-kind vocabulary built from a grammar's symbol inventory.
/// Id 0 is reserved for kinds the grammar does not know.
class TypeVocabulary {
 public:
  static constexpr std::uint32_t kUnknown = 0;

  static const TypeVocabulary& for_language(Language lang);

  std::uint32_t id(std::string_view type_name) const;
  const std::string& name(std::uint32_t id) const;
  std::size_t size() const { return names_.size(); }
  Language language() const { return language_; }

 private:
  explicit TypeVocabulary(Language lang);
  Language language_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

/// Parses `source` with the tree-sitter grammar for `lang`. Syntax errors do
/// not abort; affected nodes carry is_error. Throws on invalid UTF-8.
AstGraph parse_source(std::string_view source, Language lang, const ParseOptions& opts = {});

/// Returns `forward` followed by one reverse edge per input edge, in order.
std::vector<Edge> add_reverse_edges(std::span<const Edge> forward);

bool is_valid_utf8(std::string_view s);

/// Length-prefixed PGAG record.
std::string serialize_graph(const AstGraph& g);
/// Reads one PGAG record (including its u32 length prefix); type names are
/// restored from the language vocabulary.
AstGraph deserialize_graph(std::string_view record);

}  // namespace plmgnn
