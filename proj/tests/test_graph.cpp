#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "support/oracles.hpp"
#include "vern/errors.hpp"
#include "vern/graph.hpp"

using namespace vern;
using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

namespace {

Adjacency from_edges(std::size_t n, Edges e) {
  Adjacency a;
  a.n = n;
  a.edges = std::move(e);
  return a;
}

std::vector<PatchRecord> records_at(const std::vector<Point>& pts, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<PatchRecord> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out[i].patch_id = static_cast<std::uint32_t>(100 + i);
    out[i].x = pts[i].x;
    out[i].y = pts[i].y;
    out[i].feat_a.resize(kDimA);
    out[i].feat_b.resize(kDimB);
    for (auto& v : out[i].feat_a) v = u(rng);
    for (auto& v : out[i].feat_b) v = u(rng);
  }
  return out;
}

}  // namespace

TEST_CASE("knn examples") {
  const std::vector<Point> line = {{0, 0}, {1, 0}, {3, 0}};
  CHECK(knn_directed(line, 1).edges == Edges{{0, 1}, {1, 0}, {2, 1}});
  CHECK(knn_graph(line, 1).edges == Edges{{0, 1}, {1, 0}, {1, 2}, {2, 1}});
  CHECK(knn_graph(std::vector<Point>{{5, 5}}, 9).edges.empty());
  const std::vector<Point> square = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  CHECK(knn_graph(square, 3).edges.size() == 12);
}

TEST_CASE("knn ties go to the lower index") {
  // Nodes 1 and 2 are both at distance 1 from node 0.
  const std::vector<Point> pts = {{0, 0}, {1, 0}, {-1, 0}};
  CHECK(knn_directed(pts, 1).edges == Edges{{0, 1}, {1, 0}, {2, 0}});
}

TEST_CASE("knn errors") {
  CHECK_THROWS_AS(knn_graph(std::vector<Point>{{0, 0}, {1, 1}}, 0), ParameterError);
  CHECK_THROWS_AS(knn_graph(std::vector<Point>{{0, 0}, {std::nan(""), 1}}, 1), DataError);
  CHECK_THROWS_AS(knn_graph(std::vector<Point>{{0, 0}, {INFINITY, 1}}, 1), DataError);
}

TEST_CASE("knn equals brute force") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> size(1, 200);
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = size(rng);
    // Integer grid coordinates so distance ties actually occur.
    std::uniform_int_distribution<int> c(0, t % 2 == 0 ? 10 : 1000);
    std::vector<Point> pts(n);
    for (auto& p : pts) p = {static_cast<double>(c(rng)), static_cast<double>(c(rng))};
    for (std::size_t k : {1, 3, 9}) {
      const Adjacency adj = knn_graph(pts, k);
      CHECK(adj.edges == oracle::brute_knn(pts, k));
      CHECK(adj.is_symmetric());
      for (auto [i, j] : adj.edges) CHECK(i != j);
    }
  }
}

TEST_CASE("normalized adjacency examples") {
  const Matrix one = normalized_adjacency(from_edges(1, {})).value();
  CHECK(one.rows() == 1);
  CHECK(one(0, 0) == 1.0);
  const Matrix two = normalized_adjacency(from_edges(2, {{0, 1}, {1, 0}})).value();
  CHECK((two.array() == 0.5).all());
  const Matrix path = normalized_adjacency(from_edges(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}})).value();
  CHECK(std::abs(path(0, 0) - 0.5) < 1e-15);
  CHECK(std::abs(path(0, 1) - 1 / std::sqrt(6.0)) < 1e-15);
  CHECK(std::abs(path(1, 1) - 1 / 3.0) < 1e-15);
  CHECK(std::abs(path(1, 2) - 1 / std::sqrt(6.0)) < 1e-15);
  CHECK(std::abs(path(2, 2) - 0.5) < 1e-15);
  CHECK(path(0, 2) == 0.0);
  CHECK(path(2, 0) == 0.0);
}

TEST_CASE("normalized adjacency properties") {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  std::uniform_int_distribution<std::size_t> kk(1, 9);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = size(rng);
    const auto pts = oracle::random_points(n, 50.0, rng);
    const Adjacency adj = knn_graph(pts, kk(rng));
    const Matrix m = normalized_adjacency(adj).value();
    const Matrix ref = oracle::dense_norm_adj(n, adj.edges);
    CHECK((m - ref).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.maxCoeff() <= 1.0);
    CHECK((m.rowwise().sum() - ref.rowwise().sum()).cwiseAbs().maxCoeff() <= 1e-12);

    // Power iteration for the spectral radius.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m.rows()).normalized() +
                        0.01 * Eigen::VectorXd::LinSpaced(m.rows(), 0.0, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
      Eigen::VectorXd w = m * v;
      lambda = w.norm() / v.norm();
      v = w.normalized();
    }
    CHECK(lambda <= 1.0 + 1e-9);
  }
}

TEST_CASE("build_wsi_graph clamps k and keeps record order") {
  std::mt19937_64 rng(8);
  const auto ten = records_at(oracle::random_points(10, 100, rng), rng);
  const WsiGraph g10 = build_wsi_graph(ten, 9, 1, "A");
  CHECK(g10.adj.edges.size() == 90);
  CHECK(g10.size() == 10);
  CHECK(g10.feat_a.rows() == 10);
  CHECK(g10.feat_a.cols() == kDimA);
  CHECK(g10.feat_b.cols() == kDimB);
  CHECK(g10.patch_ids[3] == 103);
  CHECK(g10.feat_a(4, 7) == ten[4].feat_a[7]);
  CHECK(g10.label == 1);

  const auto three = records_at(oracle::random_points(3, 100, rng), rng);
  const WsiGraph g3 = build_wsi_graph(three, 9, std::nullopt, "B");
  for (const auto& nb : g3.neighbours) CHECK(nb.size() == 2);
  CHECK_THROWS(build_wsi_graph(std::span<const PatchRecord>{}, 9, 0, "C"));
}

TEST_CASE("build_wsi_graph is consistent under permutation") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const auto recs = records_at(oracle::random_points(25, 1000, rng), rng);
    const auto perm = oracle::random_perm(recs.size(), rng);
    std::vector<PatchRecord> shuffled;
    for (auto i : perm) shuffled.push_back(recs[i]);
    const WsiGraph g = build_wsi_graph(recs, 9, 0);
    const WsiGraph gp = build_wsi_graph(shuffled, 9, 0);
    Matrix p = Matrix::Zero(25, 25);
    for (std::size_t i = 0; i < perm.size(); ++i) p(i, perm[i]) = 1.0;
    CHECK((gp.norm_adj.value() - p * g.norm_adj.value() * p.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("export_graph_csv") {
  std::mt19937_64 rng(10);
  oracle::TempDir dir;
  const WsiGraph g = build_wsi_graph(records_at({{0, 0}, {1, 0}, {3, 0}}, rng), 1, 0, "S");
  export_graph_csv(g, dir.path(), "S");
  CHECK(oracle::slurp(dir / "S_edges.csv") == "src,dst\n0,1\n1,0\n1,2\n2,1\n");
  CHECK(oracle::slurp(dir / "S_nodes.csv") == "node,patch_id,x,y\n0,100,0,0\n1,101,1,0\n2,102,3,0\n");
}
