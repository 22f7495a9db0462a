#include "plmgnn/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <vector>

#include "plmgnn/binary_io.hpp"
#include "plmgnn/error.hpp"

namespace plmgnn {
namespace {

constexpr char kPeMagic[5] = "PGPE";
constexpr std::uint16_t kPeVersion = 1;

Eigen::MatrixXd dense_adjacency(const AstGraph& g) {
  return Eigen::MatrixXd(structural_adjacency(g));
}

}  // namespace

Eigen::SparseMatrix<double> structural_adjacency(const AstGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * g.edges.size());
  for (const auto& e : g.edges) {
    if (e.src == e.dst) continue;
    trips.emplace_back(e.src, e.dst, 1.0);
    trips.emplace_back(e.dst, e.src, 1.0);
  }
  Eigen::SparseMatrix<double> a(n, n);
  // duplicates (an edge and its reverse) collapse to a single 1
  a.setFromTriplets(trips.begin(), trips.end(), [](double, double) { return 1.0; });
  return a;
}

Eigen::MatrixXd build_sym_laplacian(const AstGraph& g) {
  return sym_laplacian(dense_adjacency(g));
}

void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    auto col = vectors.col(c);
    const double top = col.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (std::abs(col(i)) >= top - 1e-10 * std::max(1.0, top)) {
        if (col(i) < 0) col = -col;
        break;
      }
    }
  }
}

SpectralBasis laplacian_pe(const Eigen::MatrixXd& adjacency, int k, double trivial_tol) {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "PE dimension k must be >= 1");
  const auto n = adjacency.rows();
  SpectralBasis out;
  out.k = k;
  out.pe = Eigen::MatrixXd::Zero(n, k);
  if (n == 0) return out;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym_laplacian(adjacency));
  if (solver.info() != Eigen::Success) {
    out.failed = true;
    return out;
  }
  out.eigenvalues = solver.eigenvalues();
  out.eigenvectors = solver.eigenvectors();
  fix_signs(out.eigenvectors);

  int filled = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (out.eigenvalues(j) < trivial_tol) {
      ++out.trivial_count;
      continue;
    }
    if (filled < k) out.pe.col(filled++) = out.eigenvectors.col(j);
  }
  return out;
}

SpectralBasis laplacian_pe(const AstGraph& g, int k, double trivial_tol) {
  return laplacian_pe(dense_adjacency(g), k, trivial_tol);
}

int connected_components(const AstGraph& g) {
  const auto n = g.num_nodes();
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  int comps = static_cast<int>(n);
  for (const auto& e : g.edges) {
    auto a = find(e.src), b = find(e.dst);
    if (a != b) {
      parent[a] = b;
      --comps;
    }
  }
  return comps;
}

PeKind parse_pe_kind(std::string_view name) {
  if (name == "laplacian") return PeKind::laplacian;
  if (name == "depth") return PeKind::depth;
  if (name == "degree") return PeKind::degree;
  if (name == "random_walk" || name == "rw") return PeKind::random_walk;
  throw Error(ErrorCode::invalid_argument, "unknown positional encoding '" + std::string(name) + "'");
}

std::string_view to_string(PeKind kind) {
  switch (kind) {
    case PeKind::laplacian: return "laplacian";
    case PeKind::depth: return "depth";
    case PeKind::degree: return "degree";
    case PeKind::random_walk: return "random_walk";
  }
  return "laplacian";
}

PositionalEncoding positional_encoding(const AstGraph& g, PeKind kind, int k) {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "PE dimension k must be >= 1");
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  PositionalEncoding out;
  out.values = Eigen::MatrixXf::Zero(n, k);
  switch (kind) {
    case PeKind::laplacian: {
      auto basis = laplacian_pe(g, k);
      out.failed = basis.failed;
      out.values = basis.pe.cast<float>();
      break;
    }
    case PeKind::depth: {
      const auto kids = g.children();
      std::vector<int> depth(n, 0);
      std::vector<std::uint32_t> queue{g.root};
      for (std::size_t q = 0; q < queue.size(); ++q)
        for (auto c : kids[queue[q]]) {
          depth[c] = depth[queue[q]] + 1;
          queue.push_back(c);
        }
      for (Eigen::Index v = 0; v < n; ++v)
        for (int j = 0; j < k; ++j) {
          const double freq = std::pow(10000.0, -2.0 * (j / 2) / k);
          out.values(v, j) = static_cast<float>(j % 2 == 0 ? std::sin(depth[v] * freq)
                                                           : std::cos(depth[v] * freq));
        }
      break;
    }
    case PeKind::degree: {
      auto adj = structural_adjacency(g);
      for (Eigen::Index v = 0; v < n; ++v) {
        const auto deg = static_cast<int>(adj.col(v).sum());
        out.values(v, std::min(deg, k - 1)) = 1.0f;
      }
      break;
    }
    case PeKind::random_walk: {
      auto adj = structural_adjacency(g);
      Eigen::VectorXd inv_deg(n);
      for (Eigen::Index v = 0; v < n; ++v) {
        const double d = adj.col(v).sum();
        inv_deg(v) = d > 0 ? 1.0 / d : 0.0;
      }
      Eigen::SparseMatrix<double> walk = inv_deg.asDiagonal() * adj;
      Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
      for (int t = 0; t < k; ++t) {
        power = walk * power;
        out.values.col(t) = power.diagonal().cast<float>();
      }
      break;
    }
  }
  return out;
}

void random_sign_flip(Eigen::Ref<Eigen::MatrixXf> pe, std::mt19937_64& rng) {
  std::bernoulli_distribution flip(0.5);
  for (Eigen::Index c = 0; c < pe.cols(); ++c)
    if (flip(rng)) pe.col(c) *= -1.0f;
}

std::string serialize_pe(const PositionalEncoding& pe) {
  ByteWriter w;
  w.magic(kPeMagic);
  w.u16(kPeVersion);
  w.u32(static_cast<std::uint32_t>(pe.values.rows()));
  w.u32(static_cast<std::uint32_t>(pe.values.cols()));
  w.u8(pe.failed ? 1 : 0);
  for (Eigen::Index i = 0; i < pe.values.rows(); ++i)
    for (Eigen::Index j = 0; j < pe.values.cols(); ++j) w.f32(pe.values(i, j));
  return std::move(w).take();
}

PositionalEncoding deserialize_pe(std::string_view block, std::size_t* consumed) {
  ByteReader r(block);
  r.expect_magic(kPeMagic);
  if (r.u16() != kPeVersion) throw Error(ErrorCode::format, "unsupported PGPE version");
  const auto n = r.u32();
  const auto k = r.u32();
  PositionalEncoding pe;
  pe.failed = (r.u8() & 1) != 0;
  pe.values.resize(n, k);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < k; ++j) pe.values(i, j) = r.f32();
  if (consumed) *consumed = r.position();
  return pe;
}

}  // namespace plmgnn
