#include "plmgnn/graph_batch.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "plmgnn/error.hpp"

namespace plmgnn {

GraphExample make_example(const AstGraph& g, std::string sample_id, int label) {
  GraphExample ex;
  ex.sample_id = std::move(sample_id);
  ex.num_nodes = static_cast<std::uint32_t>(g.num_nodes());
  ex.label = label;
  std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (const auto& e : g.edges)
    if (e.src != e.dst) pairs.emplace(std::min(e.src, e.dst), std::max(e.src, e.dst));
  ex.edges.assign(pairs.begin(), pairs.end());
  ex.type_ids.reserve(g.num_nodes());
  for (const auto& n : g.nodes) ex.type_ids.push_back(static_cast<int>(n.type_id));
  return ex;
}

GraphBatch make_batch(std::span<const GraphExample* const> examples) {
  GraphBatch b;
  b.num_graphs = static_cast<Eigen::Index>(examples.size());
  Eigen::Index k = -1, h = -1, ph = -1;
  for (const auto* ex : examples) {
    if (ex->num_nodes == 0) throw Error(ErrorCode::invalid_argument, ex->sample_id + ": empty graph");
    b.num_nodes += ex->num_nodes;
    if (k < 0) {
      k = ex->pe.cols();
      h = ex->semantic.cols();
      ph = ex->pooled.size();
    }
    if (ex->pe.cols() != k || ex->semantic.cols() != h || ex->pooled.size() != ph)
      throw Error(ErrorCode::dimension_mismatch, ex->sample_id + ": feature widths differ in batch");
    if (ex->pe.rows() != 0 && ex->pe.rows() != ex->num_nodes)
      throw Error(ErrorCode::dimension_mismatch, ex->sample_id + ": PE rows != nodes");
    if (ex->semantic.rows() != 0 && ex->semantic.rows() != ex->num_nodes)
      throw Error(ErrorCode::dimension_mismatch, ex->sample_id + ": semantic rows != nodes");
  }
  const auto n = b.num_nodes;
  k = std::max<Eigen::Index>(k, 0);
  h = std::max<Eigen::Index>(h, 0);
  ph = std::max<Eigen::Index>(ph, 0);

  nn::IndexList membership, types;
  membership.reserve(n);
  types.reserve(n);
  b.pe.resize(n, k);
  b.semantic.resize(h > 0 ? n : 0, h);
  b.pooled.resize(ph > 0 ? b.num_graphs : 0, ph);

  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  Eigen::Index offset = 0;
  for (Eigen::Index gi = 0; gi < b.num_graphs; ++gi) {
    const auto& ex = *examples[gi];
    const auto nn_ = static_cast<Eigen::Index>(ex.num_nodes);
    for (Eigen::Index v = 0; v < nn_; ++v) {
      membership.push_back(static_cast<int>(gi));
      types.push_back(v < static_cast<Eigen::Index>(ex.type_ids.size()) ? ex.type_ids[v] : 0);
    }
    if (k > 0) b.pe.middleRows(offset, nn_) = ex.pe;
    if (h > 0) b.semantic.middleRows(offset, nn_) = ex.semantic;
    if (ph > 0) b.pooled.row(gi) = ex.pooled.transpose();
    for (const auto& [u, v] : ex.edges) {
      if (u >= ex.num_nodes || v >= ex.num_nodes)
        throw Error(ErrorCode::invalid_argument, ex.sample_id + ": edge endpoint out of range");
      nbrs[offset + u].push_back(static_cast<int>(offset + v));
      nbrs[offset + v].push_back(static_cast<int>(offset + u));
    }
    b.labels.push_back(ex.label);
    b.sample_ids.push_back(ex.sample_id);
    offset += nn_;
  }

  nn::IndexList src, dst;
  std::vector<double> deg(static_cast<std::size_t>(n), 1.0);  // self loop
  for (Eigen::Index v = 0; v < n; ++v) {
    auto& list = nbrs[v];
    list.push_back(static_cast<int>(v));
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    deg[v] = static_cast<double>(list.size());
    for (int u : list) {
      src.push_back(u);
      dst.push_back(static_cast<int>(v));
    }
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(src.size());
  for (std::size_t e = 0; e < src.size(); ++e)
    trips.emplace_back(dst[e], src[e], 1.0 / std::sqrt(deg[dst[e]] * deg[src[e]]));
  b.gcn_norm.resize(n, n);
  b.gcn_norm.setFromTriplets(trips.begin(), trips.end());
  b.gcn_norm_f = b.gcn_norm.cast<float>();

  b.membership = std::make_shared<const nn::IndexList>(std::move(membership));
  b.type_ids = std::make_shared<const nn::IndexList>(std::move(types));
  b.msg_src = std::make_shared<const nn::IndexList>(std::move(src));
  b.msg_dst = std::make_shared<const nn::IndexList>(std::move(dst));
  return b;
}

GraphBatch make_batch(std::span<const GraphExample> examples) {
  std::vector<const GraphExample*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& e : examples) ptrs.push_back(&e);
  return make_batch(std::span<const GraphExample* const>(ptrs));
}

}  // namespace plmgnn
