#pragma once

#include <span>
#include <string>
#include <vector>

#include "plmgnn/ast_graph.hpp"
#include "plmgnn/datasets.hpp"
#include "plmgnn/embed_cache.hpp"
#include "plmgnn/graph_batch.hpp"
#include "plmgnn/spectral.hpp"

namespace plmgnn {

/// Everything the models need for one sample, as stored on disk.
struct ProcessedSample {
  std::string sample_id;
  int label = 0;
  Split split = Split::train;
  AstGraph graph;
  PositionalEncoding pe;
  RowMatrixXf semantic;    // empty without an embedding cache
  Eigen::VectorXf pooled;  // valid-token mean, empty without a cache
};

GraphExample to_example(const ProcessedSample& s);

/// PGSA archive: magic, version u16, count u32, then per sample: id, source digest, label
/// i32, split u8, PGAG record, PGPE block, semantic rows/cols + f32 payload,
/// pooled length + f32 payload.
std::string serialize_samples(std::span<const ProcessedSample> samples);
std::vector<ProcessedSample> deserialize_samples(std::string_view bytes);
void save_samples(const std::string& path, std::span<const ProcessedSample> samples);
std::vector<ProcessedSample> load_samples(const std::string& path);

struct PreprocessOptions {
  PeKind pe_kind = PeKind::laplacian;
  int k = 32;
  ParseOptions parse;
  std::string cache_path;  // empty = no semantic features
  int workers = 1;
};

/// Stage times are summed over samples, so they do not depend on the worker count.
struct StageTiming {
  double ast_seconds = 0;
  double pe_seconds = 0;
  double align_seconds = 0;
  std::size_t samples = 0;

  std::string to_json() const;
};

struct PreprocessResult {
  std::vector<ProcessedSample> samples;  // input order, failed samples left out
  std::vector<std::string> errors;       // "sample_id: message"
  std::vector<std::string> warnings;
  StageTiming timing;
};

PreprocessResult preprocess(std::span<const Sample> samples, const PreprocessOptions& opts);

}  // namespace plmgnn
