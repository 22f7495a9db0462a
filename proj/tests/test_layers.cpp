#include <doctest.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "model_checks.hpp"
#include "oracles.hpp"
#include "plmgnn/error.hpp"
#include "plmgnn/gnn_layers.hpp"

using namespace plmgnn;
using namespace plmgnn::testing;
using nn::Mat;

namespace {

struct Setup {
  std::vector<GraphExample> exs;
  GraphBatch batch;
  oracle::Dense a_hat;
  Mat<double> x;
};

Setup make_setup(std::mt19937_64& rng, int width) {
  Setup s;
  std::uniform_int_distribution<std::uint32_t> n(1, 6);
  for (int i = 0; i < 2; ++i) s.exs.push_back(random_example(n(rng), 2, 0, 3, rng));
  s.batch = make_batch(std::span<const GraphExample>(s.exs));
  s.a_hat = oracle::adjacency_with_self_loops(s.exs);
  s.x = random_mat(s.batch.num_nodes, width, rng);
  return s;
}

}  // namespace

TEST_CASE("batch message lists are A + I") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    auto s = make_setup(rng, 3);
    CHECK(oracle::adjacency_with_self_loops(s.batch) == s.a_hat);
    CHECK(std::is_sorted(s.batch.msg_dst->begin(), s.batch.msg_dst->end()));
  }
}

TEST_CASE("GCN, GAT and graph transformer match dense oracles") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 30; ++t) {
    auto s = make_setup(rng, 5);
    auto x = nn::constant<double>(s.x);

    GcnConv<double> gcn(5, 6, rng);
    gcn.bias().mutable_value() = random_mat(1, 6, rng);
    auto g_out = gcn.forward(x, s.batch).value();
    CHECK((g_out - oracle::gcn(s.a_hat, s.x, gcn.lin().weight.value(), gcn.bias().value())).cwiseAbs().maxCoeff() < 1e-6);

    GatConv<double> gat(5, 6, 3, rng);
    auto a_out = gat.forward(x, s.batch).value();
    CHECK((a_out - oracle::gat(s.a_hat, s.x, gat.lin().weight.value(), gat.att_src().value(),
                               gat.att_dst().value(), gat.bias().value(), 3))
              .cwiseAbs()
              .maxCoeff() < 1e-6);

    TransformerConv<double> tg(5, 6, 2, rng);
    auto t_out = tg.forward(x, s.batch).value();
    CHECK((t_out - oracle::transformer(s.a_hat, s.x, tg.query().weight.value(), tg.key().weight.value(),
                                       tg.value().weight.value(), tg.output().weight.value(),
                                       tg.output().bias.value(), 2))
              .cwiseAbs()
              .maxCoeff() < 1e-6);
  }
}

TEST_CASE("heads must divide the width") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(GatConv<double>(4, 6, 4, rng), Error);
  ModelConfig c;
  c.backbone = Backbone::gat;
  c.hidden = 10;
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("fusion examples") {
  std::mt19937_64 rng(3);
  ModelConfig cfg = small_hybrid(Backbone::gcn, FusionStrategy::sum, PoolKind::sum);
  cfg.fusion_dim = 2;
  auto h = nn::constant<double>(random_mat(3, 2, rng));
  auto zero = nn::constant<double>(Mat<double>::Zero(3, 2));
  auto p = nn::constant<double>(random_mat(3, 2, rng));
  auto q = nn::constant<double>(random_mat(3, 2, rng));

  Fusion<double> sum(cfg, rng);
  CHECK(sum.combine(h, zero, zero).value() == h.value());

  cfg.fusion = FusionStrategy::concat;
  Fusion<double> cat(cfg, rng);
  CHECK(cat.out_dim() == 6);
  auto c = cat.combine(h, p, q).value();
  CHECK(c.leftCols(2) == h.value());
  CHECK(c.middleCols(2, 2) == p.value());
  CHECK(c.rightCols(2) == q.value());

  cfg.fusion = FusionStrategy::gated_sum;
  Fusion<double> gated(cfg, rng);
  gated.gate().weight.mutable_value().setZero();
  gated.gate().bias.mutable_value().setZero();
  auto g = gated.combine(h, p, q).value();
  CHECK((g - 0.5 * (h.value() + p.value() + q.value())).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("GNN-only fusion ignores semantic features") {
  std::mt19937_64 rng(8);
  ModelConfig cfg = small_hybrid(Backbone::gcn, FusionStrategy::gated_sum, PoolKind::sum);
  cfg.semantic_enabled = false;
  Fusion<double> f(cfg, rng);
  auto ids = std::make_shared<const nn::IndexList>(nn::IndexList{0, 1, 2});
  auto pe = nn::constant<double>(random_mat(3, cfg.pe_dim, rng));
  auto a = f(nn::constant<double>(random_mat(3, 5, rng)), pe, ids).value();
  auto b = f(nn::Var<double>(), pe, ids).value();
  CHECK(a == b);
  ids = std::make_shared<const nn::IndexList>(nn::IndexList{0, 1, 99});
  CHECK_THROWS_AS(f(nn::Var<double>(), pe, ids), Error);
}

TEST_CASE("fusion gradients with respect to inputs and parameters") {
  for (auto strat : {FusionStrategy::concat, FusionStrategy::sum, FusionStrategy::gated_sum}) {
    std::mt19937_64 rng(21);
    ModelConfig cfg = small_hybrid(Backbone::gcn, strat, PoolKind::sum);
    Fusion<double> f(cfg, rng);
    auto ids = std::make_shared<const nn::IndexList>(nn::IndexList{0, 5, 2, 2});
    auto sem = nn::parameter<double>(random_mat(4, 5, rng));
    auto pe = nn::parameter<double>(random_mat(4, cfg.pe_dim, rng));
    nn::ParameterSet<double> ps;
    f.collect(ps, "fusion");
    Leaves leaves(ps.begin(), ps.end());
    leaves.emplace_back("semantic", sem);
    leaves.emplace_back("pe", pe);
    auto r = grad_check(leaves, [&] { return probe(f(sem, pe, ids)); });
    CAPTURE(to_string(strat));
    CHECK(r.max_rel_error <= 1e-6);
  }
}

TEST_CASE("layer norm and graph norm statistics") {
  std::mt19937_64 rng(2);
  auto s = make_setup(rng, 4);
  auto x = nn::constant<double>(random_mat(s.batch.num_nodes, 4, rng, -3, 3));
  Normalization<double> ln(NormKind::layer_norm, 4);
  auto y = ln.forward(x, s.batch).value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    CHECK(std::abs(y.row(i).mean()) < 1e-12);
    const double var = (y.row(i).array() - y.row(i).mean()).square().mean();
    const auto xr = x.value().row(i);
    const double xvar = (xr.array() - xr.mean()).square().mean();
    CHECK(std::abs(var - xvar / (xvar + kNormEps)) < 1e-12);
  }
  Normalization<double> gn(NormKind::graph_norm, 4);
  auto z = gn.forward(x, s.batch).value();
  Eigen::Index off = 0;
  for (const auto& ex : s.exs) {
    auto block = z.middleRows(off, ex.num_nodes);
    CHECK(block.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    off += ex.num_nodes;
  }
}

TEST_CASE("pooling reductions") {
  std::mt19937_64 rng(9);
  auto s = make_setup(rng, 3);
  auto x = nn::constant<double>(random_mat(s.batch.num_nodes, 3, rng));
  GraphPool<double> sum(PoolKind::sum, 3, rng), mx(PoolKind::max, 3, rng), att(PoolKind::attentional, 3, rng);
  Eigen::Index off = 0;
  for (std::size_t gi = 0; gi < s.exs.size(); ++gi) {
    auto block = x.value().middleRows(off, s.exs[gi].num_nodes);
    CHECK((sum.forward(x, s.batch).value().row(gi) - block.colwise().sum()).norm() < 1e-12);
    CHECK(mx.forward(x, s.batch).value().row(gi) == block.colwise().maxCoeff());
    // attention weights are a convex combination: result within per-column bounds
    const Eigen::RowVectorXd a = att.forward(x, s.batch).value().row(gi);
    for (int c = 0; c < 3; ++c) {
      CHECK(a(c) <= block.col(c).maxCoeff() + 1e-12);
      CHECK(a(c) >= block.col(c).minCoeff() - 1e-12);
    }
    off += s.exs[gi].num_nodes;
  }
}

TEST_CASE("classifier gradients for each backbone") {
  for (auto b : {Backbone::gcn, Backbone::gat, Backbone::tgnn}) {
    auto cfg = small_hybrid(b, FusionStrategy::gated_sum, PoolKind::attentional);
    CAPTURE(to_string(b));
    CHECK(classifier_grad_check(cfg, 31).max_rel_error <= 1e-4);
  }
}

TEST_CASE("MLP baseline consumes pooled features") {
  std::mt19937_64 rng(4);
  ModelConfig cfg;
  cfg.backbone = Backbone::mlp_baseline;
  cfg.semantic_dim = 5;
  cfg.mlp_hidden = 7;
  cfg.mlp_depth = 3;
  cfg.num_classes = 2;
  auto model = make_classifier<double>(cfg, rng);
  std::vector<GraphExample> exs{random_example(4, 2, 5, 3, rng), random_example(3, 2, 5, 3, rng)};
  auto batch = make_batch(std::span<const GraphExample>(exs));
  auto out = model->forward(batch, false, rng);
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 2);
  CHECK(model->parameters().size() == 6);
  cfg.mlp_depth = 6;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("config JSON round trip") {
  auto cfg = small_hybrid(Backbone::tgnn, FusionStrategy::sum, PoolKind::max);
  auto back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK_THROWS_AS(parse_backbone("rnn"), Error);
  TrainProtocol p = TrainProtocol::devign_defaults();
  CHECK(p.epochs == 20);
  CHECK(p.batch_size == 24);
  CHECK(TrainProtocol::from_json(p.to_json()).to_json() == p.to_json());
  p.seeds = {1, 1};
  CHECK_THROWS_AS(p.validate(), Error);
}
