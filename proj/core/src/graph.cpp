#include "vern/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vern/errors.hpp"

namespace vern {
namespace fs = std::filesystem;

bool Adjacency::is_symmetric() const {
  for (const auto& [i, j] : edges) {
    if (!std::binary_search(edges.begin(), edges.end(), std::make_pair(j, i))) return false;
  }
  return true;
}

std::vector<std::vector<std::size_t>> Adjacency::neighbours() const {
  std::vector<std::vector<std::size_t>> out(n);
  for (const auto& [i, j] : edges) out[i].push_back(j);
  return out;
}

Adjacency knn_directed(std::span<const Point> coords, std::size_t k) {
  if (k < 1) throw ParameterError("knn_graph: k must be >= 1");
  if (coords.empty()) throw DataError("knn_graph: no coordinates");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!std::isfinite(coords[i].x) || !std::isfinite(coords[i].y)) {
      throw DataError("knn_graph: non-finite coordinate at node " + std::to_string(i));
    }
  }
  const std::size_t n = coords.size();
  const std::size_t kk = std::min(k, n - 1);
  Adjacency adj;
  adj.n = n;
  if (kk == 0) return adj;
  adj.edges.reserve(n * kk);

  struct Candidate {
    double d2;
    std::size_t j;
    bool operator<(const Candidate& o) const { return d2 != o.d2 ? d2 < o.d2 : j < o.j; }
  };
  std::vector<Candidate> cand;
  cand.reserve(n - 1);
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = coords[i].x - coords[j].x;
      const double dy = coords[i].y - coords[j].y;
      cand.push_back({dx * dx + dy * dy, j});
    }
    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk - 1), cand.end());
    chosen.clear();
    for (std::size_t c = 0; c < kk; ++c) chosen.push_back(cand[c].j);
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t j : chosen) adj.edges.emplace_back(i, j);
  }
  return adj;
}

Adjacency symmetrize(const Adjacency& adj) {
  Adjacency out;
  out.n = adj.n;
  out.edges.reserve(adj.edges.size() * 2);
  for (const auto& [i, j] : adj.edges) {
    if (i == j) continue;
    out.edges.emplace_back(i, j);
    out.edges.emplace_back(j, i);
  }
  std::sort(out.edges.begin(), out.edges.end());
  out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
  return out;
}

Adjacency knn_graph(std::span<const Point> coords, std::size_t k) { return symmetrize(knn_directed(coords, k)); }

Tensor normalized_adjacency(const Adjacency& adj) {
  const auto n = static_cast<Eigen::Index>(adj.n);
  Eigen::VectorXd degree = Eigen::VectorXd::Ones(n);
  for (const auto& e : adj.edges) degree(static_cast<Eigen::Index>(e.first)) += 1.0;
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) = 1.0 / degree(i);
  for (const auto& [i, j] : adj.edges) {
    const auto a = static_cast<Eigen::Index>(i);
    const auto b = static_cast<Eigen::Index>(j);
    m(a, b) = 1.0 / std::sqrt(degree(a) * degree(b));
  }
  return Tensor(std::move(m));
}

WsiGraph build_graph(std::string slide_id, std::vector<Point> coords, Tensor feat_a, Tensor feat_b, std::size_t k,
                     std::optional<int> label, std::vector<std::uint32_t> patch_ids) {
  const std::size_t n = coords.size();
  if (n == 0) throw DataError("build_graph: slide '" + slide_id + "' has no patches");
  if (feat_a.rows() != n || feat_b.rows() != n) {
    throw ShapeError("build_graph: " + std::to_string(n) + " coordinates but features " + feat_a.shape_string() +
                     " and " + feat_b.shape_string());
  }
  if (patch_ids.empty()) {
    patch_ids.resize(n);
    std::iota(patch_ids.begin(), patch_ids.end(), 0u);
  } else if (patch_ids.size() != n) {
    throw ShapeError("build_graph: patch id count does not match coordinate count");
  }
  WsiGraph g;
  g.slide_id = std::move(slide_id);
  g.patch_ids = std::move(patch_ids);
  g.adj = knn_graph(coords, k);
  g.coords = std::move(coords);
  g.feat_a = std::move(feat_a);
  g.feat_b = std::move(feat_b);
  g.neighbours = g.adj.neighbours();
  g.norm_adj = normalized_adjacency(g.adj);
  g.label = label;
  return g;
}

WsiGraph build_wsi_graph(std::span<const PatchRecord> records, std::size_t k, std::optional<int> label,
                         std::string slide_id) {
  if (records.empty()) throw DataError("build_wsi_graph: no patch records");
  const auto n = static_cast<Eigen::Index>(records.size());
  Matrix a(n, static_cast<Eigen::Index>(kDimA));
  Matrix b(n, static_cast<Eigen::Index>(kDimB));
  std::vector<Point> coords;
  std::vector<std::uint32_t> ids;
  coords.reserve(records.size());
  ids.reserve(records.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    if (r.feat_a.size() != kDimA || r.feat_b.size() != kDimB) {
      throw ShapeError("build_wsi_graph: patch " + std::to_string(i) + " has feature dims (" +
                       std::to_string(r.feat_a.size()) + ", " + std::to_string(r.feat_b.size()) + ")");
    }
    a.row(i) = Eigen::Map<const Eigen::RowVectorXd>(r.feat_a.data(), static_cast<Eigen::Index>(kDimA));
    b.row(i) = Eigen::Map<const Eigen::RowVectorXd>(r.feat_b.data(), static_cast<Eigen::Index>(kDimB));
    coords.push_back({r.x, r.y});
    ids.push_back(r.patch_id);
  }
  return build_graph(std::move(slide_id), std::move(coords), Tensor(std::move(a)), Tensor(std::move(b)), k, label,
                     std::move(ids));
}

void export_graph_csv(const WsiGraph& g, const fs::path& out_dir, const std::string& stem) {
  fs::create_directories(out_dir);
  std::ofstream edges(out_dir / (stem + "_edges.csv"), std::ios::binary);
  std::ofstream nodes(out_dir / (stem + "_nodes.csv"), std::ios::binary);
  if (!edges || !nodes) throw IoError("cannot write graph export under " + out_dir.string());
  edges << "src,dst\n";
  for (const auto& [i, j] : g.adj.edges) edges << i << "," << j << "\n";
  nodes.precision(17);
  nodes << "node,patch_id,x,y\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    nodes << i << "," << g.patch_ids[i] << "," << g.coords[i].x << "," << g.coords[i].y << "\n";
  }
}

}  // namespace vern
