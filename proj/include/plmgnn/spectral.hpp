#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "plmgnn/ast_graph.hpp"

namespace plmgnn {

inline constexpr double kTrivialEigenvalueTol = 1e-8;

/// Eigen-decomposition of L_sym plus the derived k-column positional encoding.
struct SpectralBasis {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // columns match eigenvalues
  int k = 0;
  Eigen::MatrixXd pe;  // n x k, zero-padded on the right
  int trivial_count = 0;
  bool failed = false;  // eigensolver did not converge; pe is all zeros
};

/// Symmetric 0/1 adjacency over structural edges (no self loops).
Eigen::SparseMatrix<double> structural_adjacency(const AstGraph& g);

/// I - D^{-1/2} A D^{-1/2}; rows and columns of isolated nodes are zero.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> sym_laplacian(
    const Eigen::MatrixBase<Derived>& adjacency) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto n = adjacency.rows();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_sqrt_deg = adjacency.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i)
    inv_sqrt_deg(i) = inv_sqrt_deg(i) > Scalar(0) ? Scalar(1) / std::sqrt(inv_sqrt_deg(i)) : Scalar(0);
  Mat lap = -(inv_sqrt_deg.asDiagonal() * adjacency * inv_sqrt_deg.asDiagonal());
  for (Eigen::Index i = 0; i < n; ++i)
    lap(i, i) = inv_sqrt_deg(i) > Scalar(0) ? Scalar(1) + lap(i, i) : Scalar(0);
  return lap;
}

Eigen::MatrixXd build_sym_laplacian(const AstGraph& g);

/// Flips each column so its largest-magnitude entry is positive (lowest index
/// wins among equal magnitudes).
void fix_signs(Eigen::MatrixXd& vectors);

SpectralBasis laplacian_pe(const AstGraph& g, int k, double trivial_tol = kTrivialEigenvalueTol);

/// Same, starting from a precomputed symmetric adjacency.
SpectralBasis laplacian_pe(const Eigen::MatrixXd& adjacency, int k,
                           double trivial_tol = kTrivialEigenvalueTol);

int connected_components(const AstGraph& g);

enum class PeKind { laplacian, depth, degree, random_walk };

PeKind parse_pe_kind(std::string_view name);
std::string_view to_string(PeKind kind);

struct PositionalEncoding {
  Eigen::MatrixXf values;  // n x k
  bool failed = false;
};

/// Dispatches to the Laplacian encoding or one of the cheaper alternatives:
/// sinusoidal depth-to-root, one-hot clipped degree, random-walk return
/// probabilities diag((D^-1 A)^t) for t = 1..k.
PositionalEncoding positional_encoding(const AstGraph& g, PeKind kind, int k);

/// Training-time augmentation: flips each column's sign with probability 1/2.
void random_sign_flip(Eigen::Ref<Eigen::MatrixXf> pe, std::mt19937_64& rng);

/// PGPE block: magic, version u16, n u32, k u32, flags u8, n*k f32 row-major.
std::string serialize_pe(const PositionalEncoding& pe);
PositionalEncoding deserialize_pe(std::string_view block, std::size_t* consumed = nullptr);

}  // namespace plmgnn
