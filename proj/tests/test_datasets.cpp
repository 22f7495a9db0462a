#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "c_corpus.hpp"
#include "plmgnn/error.hpp"
#include "plmgnn/preprocess.hpp"
#include "test_util.hpp"

using namespace plmgnn;
using plmgnn::testing::temp_path;

namespace fs = std::filesystem;

namespace {

std::string make_java_tree(const std::string& name, const std::vector<int>& per_class) {
  const fs::path root = temp_path(name);
  fs::remove_all(root);
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto dir = root / ("p0" + std::to_string(per_class.size() - 1 - c));  // reverse creation order
    fs::create_directories(dir);
    for (int i = 0; i < per_class[c]; ++i)
      std::ofstream(dir / ("s" + std::to_string(i) + ".java")) << "class Main { int v = " << i << "; }";
  }
  return root.string();
}

std::string write_jsonl(const std::string& name, const std::vector<std::string>& lines) {
  const auto path = temp_path(name);
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
  return path;
}

std::map<Split, int> split_counts(const std::vector<Sample>& s) {
  std::map<Split, int> out;
  for (const auto& x : s) ++out[x.split];
  return out;
}

}  // namespace

TEST_CASE("split size arithmetic") {
  CHECK(java250_split_sizes(300) == std::array<std::size_t, 3>{180, 60, 60});
  CHECK(java250_split_sizes(5) == std::array<std::size_t, 3>{3, 1, 1});
  CHECK(devign_split_sizes(27318) == std::array<std::size_t, 3>{21854, 2732, 2732});
  for (std::size_t m = 5; m < 400; ++m) {
    auto s = java250_split_sizes(m);
    CHECK(s[0] + s[1] + s[2] == m);
    CHECK(std::abs(static_cast<double>(s[0]) - 0.6 * m) <= 1.0);
  }
  // full-size corpus: 250 classes of 300 solutions
  auto one = java250_split_sizes(300);
  CHECK(250 * one[0] == 45000);
  CHECK(250 * one[1] == 15000);
  CHECK(250 * one[2] == 15000);
}

TEST_CASE("java250 loader") {
  const auto root = make_java_tree("java250_small", {5, 9, 7});
  auto a = load_java250(root, 3);
  REQUIRE(a.size() == 21);
  // labels follow sorted directory names: p00 -> 0, p01 -> 1, p02 -> 2
  for (const auto& s : a) {
    CHECK(s.language == Language::java);
    const int expect = s.sample_id.starts_with("p00") ? 0 : s.sample_id.starts_with("p01") ? 1 : 2;
    CHECK(s.label == expect);
  }
  std::map<int, std::map<Split, int>> per_class;
  for (const auto& s : a) ++per_class[s.label][s.split];
  CHECK(per_class[2][Split::train] == 3);  // p02 has 5 files
  CHECK(per_class[2][Split::val] == 1);
  CHECK(per_class[2][Split::test] == 1);
  for (auto& [label, counts] : per_class) {
    const int m = counts[Split::train] + counts[Split::val] + counts[Split::test];
    CHECK(std::abs(counts[Split::train] - 0.6 * m) <= 1.0);
  }

  auto b = load_java250(root, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sample_id == b[i].sample_id);
    CHECK(a[i].split == b[i].split);
  }
  auto c = load_java250(root, 4);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].split != c[i].split;
  CHECK(differs);
}

TEST_CASE("java250 rejects classes with fewer than five solutions") {
  const auto root = make_java_tree("java250_tiny", {5, 4});
  CHECK_THROWS_AS(load_java250(root, 1), Error);
  CHECK_THROWS_AS(load_java250(temp_path("does_not_exist"), 1), Error);
}

TEST_CASE("devign loader field mapping and splits") {
  std::vector<std::string> lines;
  for (int i = 0; i < 100; ++i)
    lines.push_back(R"({"idx": )" + std::to_string(i) + R"(, "func": "int f(){return )" + std::to_string(i) +
                    R"(;}", "target": )" + std::to_string(i % 2) + "}");
  const auto path = write_jsonl("devign.jsonl", lines);
  auto s = load_devign(path);
  REQUIRE(s.size() == 100);
  CHECK(s[3].sample_id == "3");
  CHECK(s[3].label == 1);
  CHECK(s[3].source == "int f(){return 3;}");
  auto counts = split_counts(s);
  CHECK(counts[Split::train] == 80);
  CHECK(counts[Split::val] == 10);
  CHECK(counts[Split::test] == 10);

  auto again = load_devign(path);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].split == again[i].split);

  const auto manifest = split_manifest_json(s, kDefaultSplitSeed);
  CHECK(manifest.find("\"train\":[") != std::string::npos);

  const fs::path dir = temp_path("devign_splits");
  fs::create_directories(dir);
  std::ofstream(dir / "train.txt") << "0\n1\n2\n";
  std::ofstream(dir / "val.txt") << "3\n";
  std::ofstream(dir / "test.txt") << "4\r\n5\n";
  DevignOptions opts;
  opts.split_dir = dir.string();
  auto fixed = load_devign(path, opts);
  REQUIRE(fixed.size() == 6);
  CHECK(fixed[3].split == Split::val);
  CHECK(fixed[5].split == Split::test);
}

TEST_CASE("devign malformed records") {
  const auto path = write_jsonl("devign_bad.jsonl", {R"({"func": "int f(){}", "target": 1})", R"({"func": "int g(){}"})",
                                                     "not json", R"({"code": "x", "label": 0})"});
  CHECK_THROWS_AS(load_devign(path), Error);
  try {
    load_devign(path);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  DevignOptions lenient;
  lenient.lenient = true;
  std::vector<std::string> skipped;
  auto s = load_devign(path, lenient, &skipped);
  CHECK(s.size() == 1);
  CHECK(s[0].label == 1);
  CHECK(skipped.size() == 3);

  DevignOptions renamed;
  renamed.code_field = "code";
  renamed.label_field = "label";
  renamed.lenient = true;
  auto r = load_devign(path, renamed);
  REQUIRE(r.size() == 1);
  CHECK(r[0].source == "x");
}

TEST_CASE("preprocess and sample archive round trip") {
  testing::CFunctionGenerator gen(5);
  std::vector<Sample> samples;
  std::vector<TokenTable> tables;
  for (int i = 0; i < 12; ++i) {
    Sample s;
    s.sample_id = "fn" + std::to_string(i);
    s.source = gen.function(i, 4);
    s.label = i % 2;
    s.split = static_cast<Split>(i % 3);
    tables.push_back(testing::whitespace_tokens(s.source, 6, s.sample_id, i));
    samples.push_back(std::move(s));
  }
  const auto cache = temp_path("pre.pgec");
  write_cache(cache, tables);

  PreprocessOptions opts;
  opts.k = 8;
  opts.cache_path = cache;
  opts.workers = 3;
  auto res = preprocess(samples, opts);
  CHECK(res.errors.empty());
  REQUIRE(res.samples.size() == 12);
  CHECK(res.timing.samples == 12);
  CHECK(res.timing.ast_seconds > 0);
  CHECK(res.timing.pe_seconds > 0);
  CHECK(res.timing.align_seconds > 0);
  for (std::size_t i = 0; i < 12; ++i) {
    const auto& p = res.samples[i];
    CHECK(p.sample_id == samples[i].sample_id);
    CHECK(p.pe.values.rows() == static_cast<Eigen::Index>(p.graph.num_nodes()));
    CHECK(p.semantic.rows() == static_cast<Eigen::Index>(p.graph.num_nodes()));
    CHECK(p.pooled.size() == 6);
  }

  const auto archive = temp_path("pre.pgsa");
  save_samples(archive, res.samples);
  auto back = load_samples(archive);
  REQUIRE(back.size() == res.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].graph == res.samples[i].graph);
    CHECK(back[i].pe.values == res.samples[i].pe.values);
    CHECK(back[i].semantic == res.samples[i].semantic);
    CHECK(back[i].pooled == res.samples[i].pooled);
    CHECK(back[i].split == res.samples[i].split);
    CHECK(back[i].label == res.samples[i].label);
  }
  CHECK(serialize_samples(back) == serialize_samples(res.samples));

  auto ex = to_example(back[0]);
  CHECK(ex.num_nodes == back[0].graph.num_nodes());
  CHECK(ex.semantic.cols() == 6);
}

TEST_CASE("preprocess reports per-sample failures") {
  std::vector<Sample> samples(2);
  samples[0].sample_id = "a";
  samples[0].source = "int f(){return 1;}";
  samples[1].sample_id = "b";
  samples[1].source = "int g(){return 2;}";
  // cache built from different text: checksum mismatch for "b", "a" missing
  std::vector<TokenTable> tables{testing::whitespace_tokens("int g(){return 3;}", 4, "b")};
  const auto cache = temp_path("mismatch.pgec");
  write_cache(cache, tables);
  PreprocessOptions opts;
  opts.k = 4;
  opts.cache_path = cache;
  auto res = preprocess(samples, opts);
  CHECK(res.samples.empty());
  REQUIRE(res.errors.size() == 2);
  CHECK(res.errors[0].starts_with("a: "));
  CHECK(res.errors[1].find("checksum") != std::string::npos);

  auto empty = preprocess(std::span<const Sample>{}, opts);
  CHECK(empty.samples.empty());
  CHECK(empty.timing.pe_seconds == 0);
  CHECK(serialize_samples(empty.samples).size() == 10);
}
