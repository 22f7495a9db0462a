#include "plmgnn/nn/checkpoint.hpp"

#include "plmgnn/binary_io.hpp"

namespace plmgnn::nn {
namespace {

constexpr char kMagic[5] = "PGCK";
constexpr std::uint16_t kVersion = 1;

void put_matrix(ByteWriter& w, const Mat<float>& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) w.f32(m(i, j));
}

Mat<float> get_matrix(ByteReader& r) {
  const auto rows = r.u32();
  const auto cols = r.u32();
  Mat<float> m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
  return m;
}

}  // namespace

std::string Checkpoint::serialize() const {
  ByteWriter w;
  w.magic(kMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(metadata.size()));
  w.bytes(metadata);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name);
    put_matrix(w, p.value);
  }
  w.u8(optim_step ? 1 : 0);
  if (optim_step) {
    w.u64(*optim_step);
    for (const auto& m : optim_m) put_matrix(w, m);
    for (const auto& v : optim_v) put_matrix(w, v);
  }
  return std::move(w).take();
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic);
  if (r.u16() != kVersion) throw Error(ErrorCode::format, "unsupported PGCK version");
  Checkpoint ck;
  ck.metadata = std::string(r.bytes(r.u32()));
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = std::string(r.bytes(r.u16()));
    t.value = get_matrix(r);
    ck.params.push_back(std::move(t));
  }
  if (r.u8() != 0) {
    ck.optim_step = r.u64();
    for (std::uint32_t i = 0; i < n; ++i) ck.optim_m.push_back(get_matrix(r));
    for (std::uint32_t i = 0; i < n; ++i) ck.optim_v.push_back(get_matrix(r));
  }
  if (!r.done()) throw Error(ErrorCode::format, "trailing bytes in checkpoint");
  return ck;
}

void Checkpoint::save(const std::string& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace plmgnn::nn
