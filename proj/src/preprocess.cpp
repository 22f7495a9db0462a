#include "plmgnn/preprocess.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <optional>
#include <thread>

#include "plmgnn/align.hpp"
#include "plmgnn/binary_io.hpp"
#include "plmgnn/error.hpp"

namespace plmgnn {
namespace {

constexpr char kSampleMagic[5] = "PGSA";
constexpr std::uint16_t kSampleVersion = 1;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void write_string(ByteWriter& w, std::string_view s) {
  w.u32(static_cast<std::uint32_t>(s.size()));
  w.bytes(s);
}

struct Outcome {
  std::optional<ProcessedSample> sample;
  std::string error;
  std::string warning;
  double ast = 0, pe = 0, align = 0;
};

Outcome process_one(const Sample& in, const PreprocessOptions& opts, const CacheReader* cache) {
  Outcome out;
  try {
    ProcessedSample s;
    s.sample_id = in.sample_id;
    s.label = in.label;
    s.split = in.split;

    auto t = Clock::now();
    s.graph = parse_source(in.source, in.language, opts.parse);
    out.ast = seconds_since(t);

    t = Clock::now();
    s.pe = positional_encoding(s.graph, opts.pe_kind, opts.k);
    out.pe = seconds_since(t);
    if (s.pe.failed) out.warning = in.sample_id + ": eigensolver did not converge, PE set to zero";

    if (cache) {
      t = Clock::now();
      const auto tokens = cache->read(in.sample_id, sha256(in.source));
      auto sem = align_sample(s.graph, tokens);
      s.semantic = std::move(sem.h);
      s.pooled = valid_token_mean(tokens);
      out.align = seconds_since(t);
    }
    out.sample = std::move(s);
  } catch (const std::exception& e) {
    out.error = in.sample_id + ": " + e.what();
  }
  return out;
}

}  // namespace

GraphExample to_example(const ProcessedSample& s) {
  auto ex = make_example(s.graph, s.sample_id, s.label);
  ex.pe = s.pe.values;
  ex.semantic = s.semantic;
  ex.pooled = s.pooled;
  return ex;
}

std::string serialize_samples(std::span<const ProcessedSample> samples) {
  ByteWriter w;
  w.magic(kSampleMagic);
  w.u16(kSampleVersion);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    write_string(w, s.sample_id);
    write_string(w, s.graph.source_ref);
    w.u32(static_cast<std::uint32_t>(s.label));
    w.u8(static_cast<std::uint8_t>(s.split));
    w.bytes(serialize_graph(s.graph));
    w.bytes(serialize_pe(s.pe));
    w.u32(static_cast<std::uint32_t>(s.semantic.rows()));
    w.u32(static_cast<std::uint32_t>(s.semantic.cols()));
    for (Eigen::Index i = 0; i < s.semantic.size(); ++i) w.f32(s.semantic.data()[i]);
    w.u32(static_cast<std::uint32_t>(s.pooled.size()));
    for (Eigen::Index i = 0; i < s.pooled.size(); ++i) w.f32(s.pooled[i]);
  }
  return std::move(w).take();
}

std::vector<ProcessedSample> deserialize_samples(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kSampleMagic);
  if (const auto v = r.u16(); v != kSampleVersion)
    throw Error(ErrorCode::format, "unsupported sample archive version " + std::to_string(v));
  const auto count = r.u32();
  std::vector<ProcessedSample> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ProcessedSample s;
    s.sample_id = std::string(r.bytes(r.u32()));
    const std::string source_ref(r.bytes(r.u32()));
    s.label = static_cast<std::int32_t>(r.u32());
    const auto split = r.u8();
    if (split > static_cast<std::uint8_t>(Split::test_ood)) throw Error(ErrorCode::format, "bad split tag");
    s.split = static_cast<Split>(split);

    const auto rest = bytes.substr(r.position());
    ByteReader len(rest);
    const auto glen = len.u32();
    s.graph = deserialize_graph(r.bytes(4 + static_cast<std::size_t>(glen)));
    s.graph.source_ref = source_ref;
    std::size_t used = 0;
    s.pe = deserialize_pe(bytes.substr(r.position()), &used);
    r.bytes(used);

    const auto rows = r.u32(), cols = r.u32();
    s.semantic.resize(rows, cols);
    for (Eigen::Index j = 0; j < s.semantic.size(); ++j) s.semantic.data()[j] = r.f32();
    s.pooled.resize(r.u32());
    for (Eigen::Index j = 0; j < s.pooled.size(); ++j) s.pooled[j] = r.f32();
    out.push_back(std::move(s));
  }
  if (!r.done()) throw Error(ErrorCode::format, "trailing bytes after sample archive");
  return out;
}

void save_samples(const std::string& path, std::span<const ProcessedSample> samples) {
  write_file(path, serialize_samples(samples));
}

std::vector<ProcessedSample> load_samples(const std::string& path) { return deserialize_samples(read_file(path)); }

std::string StageTiming::to_json() const {
  nlohmann::ordered_json j{{"samples", samples},
                           {"ast_construction_s", ast_seconds},
                           {"positional_features_s", pe_seconds},
                           {"alignment_s", align_seconds}};
  return j.dump();
}

PreprocessResult preprocess(std::span<const Sample> samples, const PreprocessOptions& opts) {
  std::optional<CacheReader> cache;
  if (!opts.cache_path.empty()) cache.emplace(opts.cache_path);

  std::vector<Outcome> outcomes(samples.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < samples.size();)
      outcomes[i] = process_one(samples[i], opts, cache ? &*cache : nullptr);
  };
  const auto workers = static_cast<std::size_t>(std::max(1, opts.workers));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, samples.size()); ++w) pool.emplace_back(work);
  }

  PreprocessResult res;
  for (auto& o : outcomes) {
    res.timing.ast_seconds += o.ast;
    res.timing.pe_seconds += o.pe;
    res.timing.align_seconds += o.align;
    if (!o.warning.empty()) res.warnings.push_back(std::move(o.warning));
    if (o.sample)
      res.samples.push_back(std::move(*o.sample));
    else
      res.errors.push_back(std::move(o.error));
  }
  res.timing.samples = res.samples.size();
  return res;
}

}  // namespace plmgnn
