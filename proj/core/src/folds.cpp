#include <algorithm>
#include <random>

#include "vern/errors.hpp"
#include "vern/wsi_data.hpp"

namespace vern {

std::vector<std::string> FoldSplit::fold(std::size_t i) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignments) {
    if (f == i) out.push_back(id);
  }
  return out;
}

FoldSplit stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("stratified_kfold: k must be >= 2");
  std::vector<std::string> by_class[2];
  for (const auto& e : ds.entries) {
    if (!e.label) throw StratificationError("stratified_kfold: slide '" + e.slide_id + "' has no label");
    by_class[*e.label].push_back(e.slide_id);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].empty()) {
      throw StratificationError("stratified_kfold: class " + std::to_string(c) + " has no slides");
    }
  }

  std::mt19937_64 rng(seed);
  FoldSplit split;
  split.k = k;
  std::size_t deal = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (const auto& id : members) split.assignments[id] = deal++ % k;
  }
  return split;
}

}  // namespace vern
