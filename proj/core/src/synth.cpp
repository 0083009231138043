#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "vern/errors.hpp"
#include "vern/wsi_data.hpp"

namespace vern {
namespace fs = std::filesystem;

namespace {

constexpr double kPatchPitch = 512.0;  // patch size in pixels at source magnification
constexpr double kJitter = 64.0;
constexpr double kCoreFraction = 0.3;
constexpr double kCoreOffset = 1.0;
constexpr std::size_t kPlantedMin = 3;
constexpr std::size_t kPlantedMax = 8;

using Rng = std::mt19937_64;

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = n01(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

double dist2(const PatchRecord& p, double x, double y) {
  const double dx = p.x - x;
  const double dy = p.y - y;
  return dx * dx + dy * dy;
}

// Indices from `pool` ordered by distance to (x, y), ties by lower index.
std::vector<std::size_t> nearest(const std::vector<PatchRecord>& patches, std::vector<std::size_t> pool, double x,
                                 double y) {
  std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
    const double da = dist2(patches[a], x, y);
    const double db = dist2(patches[b], x, y);
    return da != db ? da < db : a < b;
  });
  return pool;
}

void add_scaled(std::vector<double>& v, const std::vector<double>& dir, double s) {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * dir[i];
}

void round_to_f32(std::vector<double>& v) {
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace

SynthResult synth_dataset(const SynthConfig& cfg, const fs::path& out_dir) {
  if (cfg.n_slides < 4) throw ParameterError("synth: n_slides must be >= 4");
  if (cfg.patches_min < 3) throw ParameterError("synth: patches_min must be >= 3");
  if (cfg.patches_max < cfg.patches_min) throw ParameterError("synth: patches_max must be >= patches_min");
  if (!(cfg.signal_strength >= 0.0) || !std::isfinite(cfg.signal_strength)) {
    throw ParameterError("synth: signal_strength must be finite and >= 0");
  }

  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "features").string() + ": " + ec.message());

  Rng master(cfg.seed);
  const auto core_dir_a = random_unit(master, kDimA);
  const auto core_dir_b = random_unit(master, kDimB);
  const auto signal_dir_a = random_unit(master, kDimA);
  const auto signal_dir_b = random_unit(master, kDimB);

  SynthResult result;
  result.dataset.source_tag = "synthetic";
  const int width = static_cast<int>(std::to_string(cfg.n_slides).size());

  for (std::size_t s = 0; s < cfg.n_slides; ++s) {
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(s), std::uint64_t{0x5EED}};
    Rng rng(seq);
    std::uniform_real_distribution<double> jitter(-kJitter, kJitter);
    std::normal_distribution<double> noise_a(0.0, 1.0 / std::sqrt(static_cast<double>(kDimA)));
    std::normal_distribution<double> noise_b(0.0, 1.0 / std::sqrt(static_cast<double>(kDimB)));

    const int label = s % 2 == 0 ? 1 : 0;
    const SectionKind kind = std::bernoulli_distribution(0.3)(rng) ? SectionKind::frozen : SectionKind::paraffin;
    const std::size_t n = std::uniform_int_distribution<std::size_t>(cfg.patches_min, cfg.patches_max)(rng);
    const auto grid_cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));

    std::vector<PatchRecord> patches(n);
    for (std::size_t j = 0; j < n; ++j) {
      auto& p = patches[j];
      p.patch_id = static_cast<std::uint32_t>(j);
      p.x = static_cast<double>(j % grid_cols) * kPatchPitch + kPatchPitch / 2 + jitter(rng);
      p.y = static_cast<double>(j / grid_cols) * kPatchPitch + kPatchPitch / 2 + jitter(rng);
      p.feat_a.resize(kDimA);
      p.feat_b.resize(kDimB);
      for (auto& v : p.feat_a) v = noise_a(rng);
      for (auto& v : p.feat_b) v = noise_b(rng);
    }

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const std::size_t centre = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const double cx = patches[centre].x;
    const double cy = patches[centre].y;
    const auto core_size = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(kCoreFraction * n)));
    const auto by_centre = nearest(patches, all, cx, cy);
    std::vector<std::size_t> core(by_centre.begin(), by_centre.begin() + static_cast<std::ptrdiff_t>(core_size));
    std::vector<std::size_t> outside(by_centre.begin() + static_cast<std::ptrdiff_t>(core_size), by_centre.end());

    SynthTruth truth;
    for (std::size_t j : core) {
      add_scaled(patches[j].feat_a, core_dir_a, kCoreOffset);
      add_scaled(patches[j].feat_b, core_dir_b, kCoreOffset);
    }

    // The planted cluster is drawn for every slide so both classes consume the
    // generator identically; only positives receive the feature shift.
    std::size_t m = std::uniform_int_distribution<std::size_t>(kPlantedMin, kPlantedMax)(rng);
    const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::acos(-1.0))(rng);
    m = std::min(m, outside.size());
    if (label == 1 && m > 0) {
      double core_radius = 0.0;
      for (std::size_t j : core) core_radius = std::max(core_radius, std::sqrt(dist2(patches[j], cx, cy)));
      const double reach = core_radius + kPatchPitch;
      const auto seed_patch = nearest(patches, outside, cx + reach * std::cos(angle), cy + reach * std::sin(angle))[0];
      const auto cluster = nearest(patches, outside, patches[seed_patch].x, patches[seed_patch].y);
      for (std::size_t c = 0; c < m; ++c) {
        const std::size_t j = cluster[c];
        add_scaled(patches[j].feat_a, signal_dir_a, cfg.signal_strength);
        add_scaled(patches[j].feat_b, signal_dir_b, cfg.signal_strength);
        truth.planted.push_back(patches[j].patch_id);
      }
      std::sort(truth.planted.begin(), truth.planted.end());
    }
    for (std::size_t j : core) truth.core.push_back(patches[j].patch_id);
    std::sort(truth.core.begin(), truth.core.end());

    for (auto& p : patches) {
      round_to_f32(p.feat_a);
      round_to_f32(p.feat_b);
    }

    std::ostringstream id;
    id << "SYN" << std::string(static_cast<std::size_t>(width) - std::to_string(s).size(), '0') << s;
    SlideEntry entry;
    entry.slide_id = id.str();
    entry.label = label;
    entry.section_kind = kind;
    entry.feature_path = out_dir / "features" / (entry.slide_id + ".wsgf");
    entry.patch_count = n;
    write_feature_file(entry.feature_path, patches);
    result.truth.emplace(entry.slide_id, std::move(truth));
    result.dataset.entries.push_back(std::move(entry));
  }

  write_manifest(result.dataset, out_dir / "manifest.csv");

  std::ofstream regions(out_dir / "regions.csv", std::ios::binary);
  if (!regions) throw IoError("cannot write " + (out_dir / "regions.csv").string());
  regions << "slide_id,patch_id,region\n";
  for (const auto& [slide, truth] : result.truth) {
    for (auto id : truth.core) regions << slide << "," << id << ",core\n";
    for (auto id : truth.planted) regions << slide << "," << id << ",planted\n";
  }
  return result;
}

std::map<std::string, SynthTruth> load_synth_truth(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::map<std::string, SynthTruth> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string slide, id, region;
    std::getline(row, slide, ',');
    std::getline(row, id, ',');
    std::getline(row, region, ',');
    auto& t = out[slide];
    const auto pid = static_cast<std::uint32_t>(std::stoul(id));
    if (region == "core") {
      t.core.push_back(pid);
    } else if (region == "planted") {
      t.planted.push_back(pid);
    } else {
      throw ValidationError(path.string() + ": unknown region '" + region + "'");
    }
  }
  return out;
}

}  // namespace vern
