#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vern/tensor.hpp"
#include "vern/wsi_data.hpp"

namespace vern {

inline constexpr std::size_t kDefaultNeighbours = 9;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Edge list over n nodes, sorted lexicographically, no self-loops.
struct Adjacency {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  bool is_symmetric() const;
  // Out-neighbours of each node, ascending.
  std::vector<std::vector<std::size_t>> neighbours() const;
};

// Directed KNN: each node points at its min(k, n-1) nearest other nodes by
// Euclidean distance, ties broken by lower index.
Adjacency knn_directed(std::span<const Point> coords, std::size_t k);

// Union symmetrization: (i, j) kept if either direction is present.
Adjacency symmetrize(const Adjacency& adj);

Adjacency knn_graph(std::span<const Point> coords, std::size_t k);

// D^-1/2 (A + I) D^-1/2 as a dense n x n tensor, D the degree of A + I.
// Memory is O(n^2).
Tensor normalized_adjacency(const Adjacency& adj);

// One slide as a spatial graph. Node i is the i-th record.
struct WsiGraph {
  std::string slide_id;
  std::vector<std::uint32_t> patch_ids;
  std::vector<Point> coords;
  Tensor feat_a;
  Tensor feat_b;
  Adjacency adj;
  std::vector<std::vector<std::size_t>> neighbours;  // cached from adj
  Tensor norm_adj;
  std::optional<int> label;

  std::size_t size() const { return coords.size(); }
};

WsiGraph build_graph(std::string slide_id, std::vector<Point> coords, Tensor feat_a, Tensor feat_b, std::size_t k,
                     std::optional<int> label, std::vector<std::uint32_t> patch_ids = {});

WsiGraph build_wsi_graph(std::span<const PatchRecord> records, std::size_t k, std::optional<int> label,
                         std::string slide_id = {});

// Debug export for plotting: <stem>_edges.csv (src,dst) and <stem>_nodes.csv
// (node,patch_id,x,y).
void export_graph_csv(const WsiGraph& g, const std::filesystem::path& out_dir, const std::string& stem);

}  // namespace vern
