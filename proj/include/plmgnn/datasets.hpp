#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plmgnn/ast_graph.hpp"

namespace plmgnn {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2, test_ood = 3 };

Split parse_split(std::string_view s);
std::string_view to_string(Split s);

/// Shared by all model families so they see identical splits.
inline constexpr std::uint64_t kDefaultSplitSeed = 20240601;

struct Sample {
  std::string sample_id;
  std::string source;
  int label = 0;
  Split split = Split::train;
  Language language = Language::c;
};

/// One subdirectory per class (labels follow sorted directory order), every
/// regular file inside is a solution. Per-class 3:1:1 split under `split_seed`.
std::vector<Sample> load_java250(const std::string& root_dir, std::uint64_t split_seed = kDefaultSplitSeed);

struct DevignOptions {
  std::string code_field = "func";
  std::string label_field = "target";
  std::string id_field = "idx";  // optional in records; line number otherwise
  std::uint64_t split_seed = kDefaultSplitSeed;
  // Directory with train.txt / val.txt / test.txt listing sample ids; when
  // empty, an 8:1:1 split is drawn with split_seed.
  std::string split_dir;
  bool lenient = false;  // skip malformed records instead of failing
};

/// JSON-lines reader. Malformed lines are reported as "line N: reason" in
/// `skipped` when lenient.
std::vector<Sample> load_devign(const std::string& jsonl_path, const DevignOptions& opts = {},
                                std::vector<std::string>* skipped = nullptr);

/// Sizes of an n-sample 8:1:1 partition (train, val, test).
std::array<std::size_t, 3> devign_split_sizes(std::size_t n);

/// Per-class 3:1:1 partition sizes for m solutions.
std::array<std::size_t, 3> java250_split_sizes(std::size_t m);

/// {"seed":..,"splits":{"train":[ids..],...}}
std::string split_manifest_json(std::span<const Sample> samples, std::uint64_t split_seed);

}  // namespace plmgnn
