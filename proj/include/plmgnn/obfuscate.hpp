#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plmgnn/ast_graph.hpp"

namespace plmgnn {

enum class IdentifierKind { var, func, type };

std::string_view placeholder_prefix(IdentifierKind k);  // "VAR", "FUNC", "TYPE"

struct RenameEntry {
  std::string original;
  std::string placeholder;
  IdentifierKind kind = IdentifierKind::var;
};

/// Original -> placeholder, in numbering order.
struct RenameMap {
  std::vector<RenameEntry> entries;

  std::optional<std::string> find(std::string_view original) const;
  bool is_bijective() const;
  std::string to_json() const;
};

struct ObfuscateOptions {
  bool rename_externals = false;  // also rename identifiers with no declaration in the input
};

struct Obfuscated {
  std::string source;
  RenameMap map;
};

/// Replaces identifiers declared in the input (parameters, locals, function
/// names, local types) with VAR/FUNC/TYPE placeholders numbered by first
/// occurrence. Everything outside identifier tokens is copied byte for byte.
/// Throws parse_failure when the input has syntax errors.
Obfuscated obfuscate_function(std::string_view source, Language lang, const ObfuscateOptions& opts = {});

}  // namespace plmgnn
