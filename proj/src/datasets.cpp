#include "plmgnn/datasets.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "plmgnn/binary_io.hpp"
#include "plmgnn/error.hpp"

namespace plmgnn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void assign(std::vector<Sample*>& members, const std::array<std::size_t, 3>& sizes, std::uint64_t seed,
            std::uint64_t stream) {
  const auto order = shuffled(members.size(), seed, stream);
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto* s = members[order[r]];
    s->split = r < sizes[0] ? Split::train : r < sizes[0] + sizes[1] ? Split::val : Split::test;
  }
}

std::vector<std::string> read_id_list(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::io, "cannot open split file " + p.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

}  // namespace

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "valid" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  if (s == "test_ood" || s == "ood") return Split::test_ood;
  throw Error(ErrorCode::invalid_argument, "unknown split '" + std::string(s) + "'");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::test_ood: return "test_ood";
  }
  return "train";
}

std::array<std::size_t, 3> java250_split_sizes(std::size_t m) {
  const auto train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(m)));
  const auto val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(m)));
  return {train, val, m - train - val};
}

std::array<std::size_t, 3> devign_split_sizes(std::size_t n) {
  const auto train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(n)));
  const auto val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  return {train, std::min(val, n - train), n - train - std::min(val, n - train)};
}

std::vector<Sample> load_java250(const std::string& root_dir, std::uint64_t split_seed) {
  std::error_code ec;
  if (!fs::is_directory(root_dir, ec)) throw Error(ErrorCode::io, root_dir + " is not a directory");
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(root_dir))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());

  std::vector<Sample> out;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[c]))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.size() < 5)
      throw Error(ErrorCode::empty_split, "class " + classes[c].filename().string() + " has " +
                                              std::to_string(files.size()) + " solutions, need at least 5");
    const auto first = out.size();
    for (const auto& f : files) {
      Sample s;
      s.sample_id = classes[c].filename().string() + "/" + f.filename().string();
      s.source = read_file(f.string());
      s.label = static_cast<int>(c);
      s.language = Language::java;
      out.push_back(std::move(s));
    }
    std::vector<Sample*> members;
    for (auto i = first; i < out.size(); ++i) members.push_back(&out[i]);
    assign(members, java250_split_sizes(members.size()), split_seed, c);
  }
  return out;
}

std::vector<Sample> load_devign(const std::string& jsonl_path, const DevignOptions& opts,
                                std::vector<std::string>* skipped) {
  std::ifstream in(jsonl_path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + jsonl_path);
  std::vector<Sample> out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      const auto msg = jsonl_path + " line " + std::to_string(line_no) + ": " + why;
      if (!opts.lenient) throw Error(ErrorCode::format, msg);
      if (skipped) skipped->push_back(msg);
    };
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(std::string("invalid JSON (") + e.what() + ")");
      continue;
    }
    if (!rec.is_object() || !rec.contains(opts.code_field) || !rec[opts.code_field].is_string()) {
      fail("missing string field '" + opts.code_field + "'");
      continue;
    }
    if (!rec.contains(opts.label_field)) {
      fail("missing label field '" + opts.label_field + "'");
      continue;
    }
    const auto& lab = rec[opts.label_field];
    int label = -1;
    if (lab.is_number_integer() || lab.is_boolean()) label = lab.is_boolean() ? lab.get<bool>() : lab.get<int>();
    if (label != 0 && label != 1) {
      fail("label must be 0 or 1");
      continue;
    }
    Sample s;
    if (rec.contains(opts.id_field))
      s.sample_id = rec[opts.id_field].is_string() ? rec[opts.id_field].get<std::string>() : rec[opts.id_field].dump();
    else
      s.sample_id = "line" + std::to_string(line_no);
    if (!seen.insert(s.sample_id).second) {
      fail("duplicate sample id " + s.sample_id);
      continue;
    }
    s.source = rec[opts.code_field].get<std::string>();
    s.label = label;
    s.language = Language::c;
    out.push_back(std::move(s));
  }

  if (opts.split_dir.empty()) {
    std::vector<Sample*> all;
    for (auto& s : out) all.push_back(&s);
    assign(all, devign_split_sizes(all.size()), opts.split_seed, 0);
    return out;
  }
  std::unordered_map<std::string, Split> split_of;
  for (auto sp : {Split::train, Split::val, Split::test}) {
    for (auto& id : read_id_list(fs::path(opts.split_dir) / (std::string(to_string(sp)) + ".txt")))
      if (!split_of.emplace(id, sp).second) throw Error(ErrorCode::format, "sample " + id + " listed in two splits");
  }
  std::vector<Sample> kept;
  for (auto& s : out) {
    auto it = split_of.find(s.sample_id);
    if (it == split_of.end()) continue;  // not part of any split
    s.split = it->second;
    kept.push_back(std::move(s));
  }
  return kept;
}

std::string split_manifest_json(std::span<const Sample> samples, std::uint64_t split_seed) {
  nlohmann::ordered_json splits;
  for (auto sp : {Split::train, Split::val, Split::test, Split::test_ood}) splits[std::string(to_string(sp))] = json::array();
  for (const auto& s : samples) splits[std::string(to_string(s.split))].push_back(s.sample_id);
  nlohmann::ordered_json j;
  j["seed"] = split_seed;
  j["splits"] = std::move(splits);
  return j.dump();
}

}  // namespace plmgnn
