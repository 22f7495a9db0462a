#include "plmgnn/embed_cache.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>

#include "plmgnn/binary_io.hpp"
#include "plmgnn/error.hpp"

namespace plmgnn {
namespace {

constexpr char kCacheMagic[5] = "PGEC";
constexpr std::uint16_t kCacheVersion = 1;

using nlohmann::json;

json window_to_json(const std::optional<WindowMeta>& w) {
  if (!w) return nullptr;
  return json{{"length", w->length}, {"stride", w->stride}, {"count", w->count}};
}

std::optional<WindowMeta> window_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return WindowMeta{j.at("length").get<std::uint32_t>(), j.at("stride").get<std::uint32_t>(),
                    j.at("count").get<std::uint32_t>()};
}

}  // namespace

std::string CacheManifest::to_json() const {
  json recs = json::array();
  for (const auto& r : records) {
    recs.push_back({{"sample_id", r.sample_id},
                    {"offset", r.offset},
                    {"length", r.length},
                    {"L", r.token_count},
                    {"h", r.hidden_dim},
                    {"source_sha256", plmgnn::to_hex(r.source_sha256)},
                    {"record_sha256", plmgnn::to_hex(r.record_sha256)},
                    {"window", window_to_json(r.window_meta)}});
  }
  json j{{"format", "PGEC"}, {"version", kCacheVersion}, {"hidden_dim", hidden_dim},
         {"records", recs}};
  return j.dump(2) + "\n";
}

CacheManifest CacheManifest::from_json(const std::string& text) {
  CacheManifest m;
  try {
    auto j = json::parse(text);
    if (j.at("format") != "PGEC") throw Error(ErrorCode::format, "not a PGEC manifest");
    m.hidden_dim = j.at("hidden_dim").get<std::uint32_t>();
    for (const auto& r : j.at("records")) {
      CacheEntry e;
      e.sample_id = r.at("sample_id").get<std::string>();
      e.offset = r.at("offset").get<std::uint64_t>();
      e.length = r.at("length").get<std::uint64_t>();
      e.token_count = r.at("L").get<std::uint32_t>();
      e.hidden_dim = r.at("h").get<std::uint32_t>();
      e.source_sha256 = from_hex(r.at("source_sha256").get<std::string>());
      e.record_sha256 = from_hex(r.at("record_sha256").get<std::string>());
      e.window_meta = window_from_json(r.value("window", json(nullptr)));
      m.records.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::format, std::string("bad cache manifest: ") + ex.what());
  }
  return m;
}

std::string serialize_token_table(const TokenTable& t) {
  if (t.embeddings.rows() != t.offsets.rows())
    throw Error(ErrorCode::dimension_mismatch, "offsets and embeddings disagree on L");
  if (t.sample_id.size() > std::numeric_limits<std::uint16_t>::max())
    throw Error(ErrorCode::invalid_argument, "sample id too long");
  ByteWriter w;
  w.magic(kCacheMagic);
  w.u16(kCacheVersion);
  w.u16(static_cast<std::uint16_t>(t.sample_id.size()));
  w.bytes(t.sample_id);
  w.u32(static_cast<std::uint32_t>(t.token_count()));
  w.u32(static_cast<std::uint32_t>(t.hidden_dim()));
  for (Eigen::Index j = 0; j < t.offsets.rows(); ++j) {
    w.u32(t.offsets(j, 0));
    w.u32(t.offsets(j, 1));
  }
  for (Eigen::Index i = 0; i < t.embeddings.size(); ++i) w.f32(t.embeddings.data()[i]);
  w.bytes(std::span<const std::uint8_t>(t.source_checksum));
  return std::move(w).take();
}

TokenTable deserialize_token_table(std::string_view record) {
  ByteReader r(record);
  r.expect_magic(kCacheMagic);
  if (r.u16() != kCacheVersion) throw Error(ErrorCode::format, "unsupported PGEC version");
  TokenTable t;
  t.sample_id = std::string(r.bytes(r.u16()));
  const auto L = r.u32();
  const auto h = r.u32();
  t.offsets.resize(L, 2);
  for (std::uint32_t j = 0; j < L; ++j) {
    t.offsets(j, 0) = r.u32();
    t.offsets(j, 1) = r.u32();
  }
  t.embeddings.resize(L, h);
  for (Eigen::Index i = 0; i < t.embeddings.size(); ++i) t.embeddings.data()[i] = r.f32();
  auto digest = r.bytes(32);
  std::copy(digest.begin(), digest.end(), reinterpret_cast<char*>(t.source_checksum.data()));
  if (!r.done()) throw Error(ErrorCode::format, "trailing bytes in PGEC record");
  return t;
}

CacheWriter::CacheWriter(std::string path) : path_(std::move(path)) {}

void CacheWriter::add(const TokenTable& table) {
  if (finished_) throw Error(ErrorCode::invalid_argument, "cache writer already finished");
  if (index_.count(table.sample_id))
    throw Error(ErrorCode::duplicate_sample, table.sample_id);
  const auto h = static_cast<std::uint32_t>(table.hidden_dim());
  if (!manifest_.records.empty() && h != manifest_.hidden_dim)
    throw Error(ErrorCode::dimension_mismatch, "hidden_dim " + std::to_string(h) +
                                                   " differs from archive hidden_dim " +
                                                   std::to_string(manifest_.hidden_dim));
  for (Eigen::Index j = 1; j < table.token_count(); ++j)
    if (!table.is_special(j) && !table.is_special(j - 1) &&
        table.offsets(j, 0) < table.offsets(j - 1, 0))
      throw Error(ErrorCode::invalid_argument, table.sample_id + ": token offsets not sorted");
  for (Eigen::Index j = 0; j < table.token_count(); ++j)
    if (table.offsets(j, 0) > table.offsets(j, 1))
      throw Error(ErrorCode::invalid_argument, table.sample_id + ": token start after end");

  manifest_.hidden_dim = h;
  auto record = serialize_token_table(table);
  CacheEntry e;
  e.sample_id = table.sample_id;
  e.offset = archive_.size();
  e.length = record.size();
  e.token_count = static_cast<std::uint32_t>(table.token_count());
  e.hidden_dim = h;
  e.source_sha256 = table.source_checksum;
  e.record_sha256 = sha256(record);
  e.window_meta = table.window_meta;
  index_.emplace(e.sample_id, manifest_.records.size());
  manifest_.records.push_back(std::move(e));
  archive_ += record;
}

CacheManifest CacheWriter::finish() {
  if (!finished_) {
    write_file(path_, archive_);
    write_file(manifest_path(path_), manifest_.to_json());
    finished_ = true;
  }
  return manifest_;
}

CacheManifest write_cache(const std::string& path, std::span<const TokenTable> tables) {
  CacheWriter w(path);
  for (const auto& t : tables) w.add(t);
  return w.finish();
}

CacheReader::CacheReader(std::string path)
    : path_(std::move(path)), manifest_(CacheManifest::from_json(read_file(manifest_path(path_)))) {
  for (std::size_t i = 0; i < manifest_.records.size(); ++i)
    index_.emplace(manifest_.records[i].sample_id, i);
}

TokenTable CacheReader::read(const std::string& sample_id,
                             const std::optional<Sha256>& expected_source) const {
  auto it = index_.find(sample_id);
  if (it == index_.end()) throw Error(ErrorCode::missing_sample, sample_id);
  const auto& entry = manifest_.records[it->second];

  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path_);
  std::string record(entry.length, '\0');
  in.seekg(static_cast<std::streamoff>(entry.offset));
  in.read(record.data(), static_cast<std::streamsize>(entry.length));
  if (!in) throw Error(ErrorCode::format, sample_id + ": archive truncated");
  if (sha256(record) != entry.record_sha256)
    throw Error(ErrorCode::checksum_mismatch, sample_id + ": record digest mismatch");

  TokenTable t = deserialize_token_table(record);
  t.window_meta = entry.window_meta;
  if (expected_source && *expected_source != t.source_checksum)
    throw Error(ErrorCode::checksum_mismatch,
                sample_id + ": cached source checksum differs from parsed source");
  return t;
}

std::vector<Eigen::Index> window_starts(Eigen::Index token_count, Eigen::Index window_count,
                                        Eigen::Index window_rows, Eigen::Index stride) {
  std::vector<Eigen::Index> starts(static_cast<std::size_t>(window_count));
  for (Eigen::Index i = 0; i < window_count; ++i) starts[i] = i * stride;
  if (window_count > 0) starts.back() = std::max<Eigen::Index>(0, token_count - window_rows);
  return starts;
}

RowMatrixXf merge_windows(std::span<const RowMatrixXf> windows, Eigen::Index token_count,
                          Eigen::Index stride, MergeStrategy strategy) {
  if (windows.empty()) {
    if (token_count == 0) return {};
    throw Error(ErrorCode::coverage_gap, "no windows for a non-empty token sequence");
  }
  const auto rows = windows.front().rows();
  const auto h = windows.front().cols();
  for (const auto& w : windows)
    if (w.rows() != rows || w.cols() != h)
      throw Error(ErrorCode::dimension_mismatch, "windows differ in shape");
  if (windows.size() > 1 && stride <= 0)
    throw Error(ErrorCode::invalid_argument, "stride must be positive");

  const auto K = static_cast<Eigen::Index>(windows.size());
  const auto starts = window_starts(token_count, K, rows, stride);

  RowMatrixXf out = RowMatrixXf::Zero(token_count, h);
  std::vector<Eigen::Index> best_window(token_count, -1);
  std::vector<Eigen::Index> best_score(token_count, -1);
  std::vector<int> hits(token_count, 0);
  for (Eigen::Index w = 0; w < K; ++w) {
    const auto limit = std::min(rows, token_count - starts[w]);
    for (Eigen::Index pos = 0; pos < limit; ++pos) {
      const auto tok = starts[w] + pos;
      ++hits[tok];
      switch (strategy) {
        case MergeStrategy::most_interior: {
          const auto score = std::min(pos, rows - 1 - pos);
          if (score > best_score[tok]) {  // strict: ties keep the earlier window
            best_score[tok] = score;
            best_window[tok] = w;
            out.row(tok) = windows[w].row(pos);
          }
          break;
        }
        case MergeStrategy::first:
          if (best_window[tok] < 0) {
            best_window[tok] = w;
            out.row(tok) = windows[w].row(pos);
          }
          break;
        case MergeStrategy::mean:
          out.row(tok) += windows[w].row(pos);
          break;
      }
    }
  }
  for (Eigen::Index tok = 0; tok < token_count; ++tok) {
    if (hits[tok] == 0)
      throw Error(ErrorCode::coverage_gap, "token " + std::to_string(tok) + " is in no window");
    if (strategy == MergeStrategy::mean) out.row(tok) /= static_cast<float>(hits[tok]);
  }
  return out;
}

}  // namespace plmgnn
