#include "plmgnn/obfuscate.hpp"

#include <json.hpp>

#include <array>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "plmgnn/error.hpp"

namespace plmgnn {
namespace {

using Kids = std::vector<std::vector<std::uint32_t>>;

struct Tree {
  const AstGraph& g;
  std::string_view src;
  Kids kids;
  std::vector<std::uint32_t> parent;

  const std::string& type(std::uint32_t v) const { return g.nodes[v].type_name; }
  std::string_view text(std::uint32_t v) const {
    return src.substr(g.nodes[v].span_start, g.nodes[v].span_end - g.nodes[v].span_start);
  }
  bool is(std::uint32_t v, std::string_view t) const { return type(v) == t; }
};

bool renamable_leaf(const std::string& t) { return t == "identifier" || t == "type_identifier"; }

bool identifier_like(const std::string& t) {
  return renamable_leaf(t) || t == "field_identifier" || t == "statement_identifier";
}

// Java contextual keywords are lexed as identifiers.
const std::set<std::string, std::less<>> kJavaReserved{"var", "record", "yield", "sealed", "permits", "non-sealed"};

const std::set<std::string, std::less<>> kCTypeNodes{
    "primitive_type",  "type_identifier",  "sized_type_specifier",   "struct_specifier", "union_specifier",
    "enum_specifier",  "type_qualifier",   "storage_class_specifier", "macro_type_specifier",
    "attribute_specifier", "ms_declspec_modifier", "attribute_declaration"};

struct Declarations {
  std::vector<std::pair<std::uint32_t, IdentifierKind>> sites;  // pre-order
  void add(std::uint32_t leaf, IdentifierKind k) { sites.emplace_back(leaf, k); }
};

// Follows a C declarator down to the declared name.
void c_declarator(const Tree& t, std::uint32_t v, Declarations& out, bool typedef_name) {
  const auto& ty = t.type(v);
  const auto& k = t.kids[v];
  if (ty == "identifier" || ty == "type_identifier") {
    const bool in_function = t.is(t.parent[v], "function_declarator");
    out.add(v, typedef_name ? IdentifierKind::type : in_function ? IdentifierKind::func : IdentifierKind::var);
    return;
  }
  if (k.empty()) return;
  if (ty == "pointer_declarator") {
    c_declarator(t, k.back(), out, typedef_name);
  } else if (ty == "array_declarator" || ty == "function_declarator" || ty == "init_declarator" ||
             ty == "parenthesized_declarator" || ty == "attributed_declarator") {
    c_declarator(t, k.front(), out, typedef_name);
  }
}

void collect_c(const Tree& t, Declarations& out) {
  for (std::uint32_t v = 0; v < t.g.num_nodes(); ++v) {
    const auto& ty = t.type(v);
    const auto& k = t.kids[v];
    if (ty == "function_definition" || ty == "declaration" || ty == "parameter_declaration") {
      for (auto c : k)
        if (!kCTypeNodes.count(t.type(c)) && !t.is(c, "compound_statement")) c_declarator(t, c, out, false);
    } else if (ty == "type_definition") {
      bool seen_type = false;
      for (auto c : k) {
        if (t.is(c, "type_qualifier")) continue;
        if (!seen_type) {
          seen_type = true;
          continue;
        }
        c_declarator(t, c, out, true);
      }
    } else if (ty == "struct_specifier" || ty == "union_specifier" || ty == "enum_specifier") {
      bool has_body = false;
      for (auto c : k) has_body |= t.is(c, "field_declaration_list") || t.is(c, "enumerator_list");
      if (has_body)
        for (auto c : k)
          if (t.is(c, "type_identifier")) out.add(c, IdentifierKind::type);
    } else if (ty == "enumerator") {
      if (!k.empty() && t.is(k.front(), "identifier")) out.add(k.front(), IdentifierKind::var);
    }
  }
}

void collect_java(const Tree& t, Declarations& out) {
  auto first_identifier = [&](std::uint32_t v) -> std::optional<std::uint32_t> {
    for (auto c : t.kids[v])
      if (t.is(c, "identifier")) return c;
    return std::nullopt;
  };
  for (std::uint32_t v = 0; v < t.g.num_nodes(); ++v) {
    const auto& ty = t.type(v);
    std::optional<IdentifierKind> kind;
    if (ty == "class_declaration" || ty == "interface_declaration" || ty == "enum_declaration" ||
        ty == "record_declaration" || ty == "annotation_type_declaration") {
      kind = IdentifierKind::type;
    } else if (ty == "method_declaration" || ty == "constructor_declaration") {
      kind = IdentifierKind::func;
    } else if (ty == "formal_parameter" || ty == "catch_formal_parameter" || ty == "enhanced_for_statement" ||
               ty == "resource" || ty == "variable_declarator" || ty == "enum_constant") {
      kind = IdentifierKind::var;
    } else if (ty == "lambda_expression") {
      if (!t.kids[v].empty() && t.is(t.kids[v].front(), "identifier")) out.add(t.kids[v].front(), IdentifierKind::var);
    } else if (ty == "inferred_parameters") {
      for (auto c : t.kids[v])
        if (t.is(c, "identifier")) out.add(c, IdentifierKind::var);
    } else if (ty == "type_parameter") {
      for (auto c : t.kids[v])
        if (t.is(c, "type_identifier")) {
          out.add(c, IdentifierKind::type);
          break;
        }
    }
    if (kind)
      if (auto id = first_identifier(v)) out.add(*id, *kind);
  }
}

IdentifierKind external_kind(const Tree& t, std::uint32_t leaf, Language lang) {
  if (t.is(leaf, "type_identifier")) return IdentifierKind::type;
  const auto p = t.parent[leaf];
  const auto& sib = t.kids[p];
  if (lang == Language::c && t.is(p, "call_expression") && sib.front() == leaf) return IdentifierKind::func;
  if (lang == Language::java && t.is(p, "method_invocation")) {
    for (std::size_t i = 0; i + 1 < sib.size(); ++i)
      if (sib[i] == leaf && t.is(sib[i + 1], "argument_list")) return IdentifierKind::func;
  }
  return IdentifierKind::var;
}

}  // namespace

std::string_view placeholder_prefix(IdentifierKind k) {
  switch (k) {
    case IdentifierKind::var: return "VAR";
    case IdentifierKind::func: return "FUNC";
    case IdentifierKind::type: return "TYPE";
  }
  return "VAR";
}

std::optional<std::string> RenameMap::find(std::string_view original) const {
  for (const auto& e : entries)
    if (e.original == original) return e.placeholder;
  return std::nullopt;
}

bool RenameMap::is_bijective() const {
  std::unordered_set<std::string> keys, values;
  for (const auto& e : entries)
    if (!keys.insert(e.original).second || !values.insert(e.placeholder).second) return false;
  return true;
}

std::string RenameMap::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries)
    arr.push_back({{"original", e.original}, {"placeholder", e.placeholder}, {"kind", placeholder_prefix(e.kind)}});
  return arr.dump();
}

Obfuscated obfuscate_function(std::string_view source, Language lang, const ObfuscateOptions& opts) {
  const auto g = parse_source(source, lang, {SiblingMode::consecutive, true});
  for (const auto& n : g.nodes)
    if (n.is_error)
      throw Error(ErrorCode::parse_failure, "syntax error at byte " + std::to_string(n.span_start));
  Tree t{g, source, g.children(), g.parents()};

  Declarations decl;
  if (lang == Language::c)
    collect_c(t, decl);
  else
    collect_java(t, decl);

  // First declaration of a name decides its kind.
  std::unordered_map<std::string, IdentifierKind> declared;
  for (const auto& [leaf, kind] : decl.sites) declared.emplace(std::string(t.text(leaf)), kind);

  std::unordered_set<std::string> taken;
  for (std::uint32_t v = 0; v < g.num_nodes(); ++v)
    if (t.kids[v].empty() && identifier_like(t.type(v))) taken.emplace(t.text(v));

  Obfuscated out;
  std::unordered_map<std::string, std::string> rename;
  std::array<int, 3> counters{0, 0, 0};
  std::vector<std::pair<std::uint32_t, const std::string*>> edits;
  for (std::uint32_t v = 0; v < g.num_nodes(); ++v) {
    if (!t.kids[v].empty() || !renamable_leaf(t.type(v))) continue;
    std::string name(t.text(v));
    auto it = rename.find(name);
    if (it == rename.end()) {
      std::optional<IdentifierKind> kind;
      if (auto d = declared.find(name); d != declared.end())
        kind = d->second;
      else if (opts.rename_externals)
        kind = external_kind(t, v, lang);
      if (!kind || (lang == Language::java && kJavaReserved.count(name))) continue;
      std::string placeholder = std::string(placeholder_prefix(*kind)) + std::to_string(++counters[static_cast<int>(*kind)]);
      if (taken.count(placeholder)) {
        int suffix = 1;
        while (taken.count(placeholder + "_" + std::to_string(suffix))) ++suffix;
        placeholder += "_" + std::to_string(suffix);
      }
      taken.insert(placeholder);
      out.map.entries.push_back({name, placeholder, *kind});
      it = rename.emplace(name, placeholder).first;
    }
    edits.emplace_back(v, &it->second);
  }

  std::size_t pos = 0;
  for (const auto& [v, placeholder] : edits) {
    const auto& n = g.nodes[v];
    out.source.append(source.substr(pos, n.span_start - pos));
    out.source.append(*placeholder);
    pos = n.span_end;
  }
  out.source.append(source.substr(pos));
  return out;
}

}  // namespace plmgnn
