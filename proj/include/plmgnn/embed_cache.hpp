#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "plmgnn/checksum.hpp"

namespace plmgnn {

/// Offset value the extractor writes for special tokens (BOS/EOS/padding).
inline constexpr std::uint32_t kSpecialTokenOffset = 0xFFFFFFFFu;

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TokenOffsets = Eigen::Matrix<std::uint32_t, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct WindowMeta {
  std::uint32_t length = 0;
  std::uint32_t stride = 0;
  std::uint32_t count = 0;
  friend bool operator==(const WindowMeta&, const WindowMeta&) = default;
};

/// Tokenizer output for one sample: byte offsets plus one merged embedding row per token.
struct TokenTable {
  std::string sample_id;
  TokenOffsets offsets;     // L x 2, (start, end-exclusive)
  RowMatrixXf embeddings;   // L x h
  Sha256 source_checksum{};
  std::optional<WindowMeta> window_meta;

  Eigen::Index token_count() const { return offsets.rows(); }
  Eigen::Index hidden_dim() const { return embeddings.cols(); }
  bool is_special(Eigen::Index j) const {
    return offsets(j, 0) == kSpecialTokenOffset && offsets(j, 1) == kSpecialTokenOffset;
  }

  friend bool operator==(const TokenTable& a, const TokenTable& b) {
    return a.sample_id == b.sample_id && a.offsets == b.offsets &&
           a.embeddings.rows() == b.embeddings.rows() &&
           a.embeddings.cols() == b.embeddings.cols() &&
           std::equal(a.embeddings.data(), a.embeddings.data() + a.embeddings.size(),
                      b.embeddings.data(),
                      [](float x, float y) { return std::bit_cast<std::uint32_t>(x) ==
                                                    std::bit_cast<std::uint32_t>(y); }) &&
           a.source_checksum == b.source_checksum && a.window_meta == b.window_meta;
  }
};

struct CacheEntry {
  std::string sample_id;
  std::uint64_t offset = 0;  // byte offset of the record in the archive
  std::uint64_t length = 0;
  std::uint32_t token_count = 0;
  std::uint32_t hidden_dim = 0;
  Sha256 source_sha256{};
  Sha256 record_sha256{};
  std::optional<WindowMeta> window_meta;
};

struct CacheManifest {
  std::uint32_t hidden_dim = 0;
  std::vector<CacheEntry> records;

  std::string to_json() const;
  static CacheManifest from_json(const std::string& text);
};

inline std::string manifest_path(const std::string& archive_path) {
  return archive_path + ".manifest.json";
}

/// PGEC record bytes for one table (no outer framing).
std::string serialize_token_table(const TokenTable& t);
TokenTable deserialize_token_table(std::string_view record);

/// Single-writer archive builder. Records are appended as they arrive; the
/// manifest is written by finish().
class CacheWriter {
 public:
  explicit CacheWriter(std::string path);
  void add(const TokenTable& table);
  CacheManifest finish();

 private:
  std::string path_;
  std::string archive_;
  CacheManifest manifest_;
  std::unordered_map<std::string, std::size_t> index_;
  bool finished_ = false;
};

CacheManifest write_cache(const std::string& path, std::span<const TokenTable> tables);

/// Read-only view of an archive; safe to share between threads.
class CacheReader {
 public:
  explicit CacheReader(std::string path);

  const CacheManifest& manifest() const { return manifest_; }
  bool contains(const std::string& sample_id) const { return index_.count(sample_id) != 0; }

  /// Verifies the record digest, and the source checksum when one is given.
  TokenTable read(const std::string& sample_id,
                  const std::optional<Sha256>& expected_source = std::nullopt) const;

 private:
  std::string path_;
  CacheManifest manifest_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline TokenTable read_cache(const std::string& path, const std::string& sample_id,
                             const std::optional<Sha256>& expected_source = std::nullopt) {
  return CacheReader(path).read(sample_id, expected_source);
}

enum class MergeStrategy { most_interior, first, mean };

/// Start token of each window: i*stride, except the last, which is
/// right-aligned so that it ends at token L.
std::vector<Eigen::Index> window_starts(Eigen::Index token_count, Eigen::Index window_count,
                                        Eigen::Index window_rows, Eigen::Index stride);

/// Merges per-window hidden states into one row per token. Every window has
/// the same row count l (or exactly L rows when a single window covers all).
RowMatrixXf merge_windows(std::span<const RowMatrixXf> windows, Eigen::Index token_count,
                          Eigen::Index stride,
                          MergeStrategy strategy = MergeStrategy::most_interior);

}  // namespace plmgnn
