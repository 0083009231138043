#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vern {

inline constexpr std::size_t kDimA = 1024;  // first feature family per patch
inline constexpr std::size_t kDimB = 768;   // second feature family per patch

enum class SectionKind { frozen, paraffin, unknown };

std::string_view to_string(SectionKind kind);
SectionKind parse_section_kind(std::string_view s);

// One patch: its centre on the slide (pixels at source magnification) and
// its two feature vectors.
struct PatchRecord {
  std::uint32_t patch_id = 0;
  double x = 0.0;
  double y = 0.0;
  std::vector<double> feat_a;  // kDimA
  std::vector<double> feat_b;  // kDimB
};

struct SlideEntry {
  std::string slide_id;
  std::optional<int> label;  // 0 = non-STAS, 1 = STAS; empty for prediction-only data
  SectionKind section_kind = SectionKind::unknown;
  std::filesystem::path feature_path;  // resolved against the manifest directory
  std::size_t patch_count = 0;
  std::optional<std::string> patient_id;
};

struct Dataset {
  std::vector<SlideEntry> entries;
  std::string source_tag;

  const SlideEntry* find(std::string_view slide_id) const;
  bool has_patient_ids() const;
  // Number of entries per label; unlabeled entries are not counted.
  std::size_t count_label(int label) const;
};

// Manifest: UTF-8 CSV with header
//   slide_id,label,section_kind,feature_path,patch_count[,patient_id]
// Relative feature paths are resolved against the manifest's directory.
Dataset load_manifest(const std::filesystem::path& path);

// Writes a manifest. Feature paths under the manifest's directory are written
// relative to it.
void write_manifest(const Dataset& ds, const std::filesystem::path& path);

// Feature file, little-endian:
//   "WSGF", u32 version=1, u32 patch_count, u32 dim_a, u32 dim_b,
//   then per patch: u32 patch_id, f64 x, f64 y, dim_a x f32, dim_b x f32.
struct FeatureFileHeader {
  std::uint32_t version = 0;
  std::uint32_t patch_count = 0;
  std::uint32_t dim_a = 0;
  std::uint32_t dim_b = 0;
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

FeatureFileHeader read_feature_header(const std::filesystem::path& path);
std::vector<PatchRecord> read_feature_file(const std::filesystem::path& path);
// Features are narrowed to f32 on write.
void write_feature_file(const std::filesystem::path& path, std::span<const PatchRecord> records);

// Reads the entry's feature file and checks it against the entry.
std::vector<PatchRecord> load_slide(const SlideEntry& entry);

struct SynthConfig {
  std::size_t n_slides = 20;
  std::size_t patches_min = 20;
  std::size_t patches_max = 40;
  double signal_strength = 2.0;
  std::uint64_t seed = 0;
};

// Ground-truth regions of one synthetic slide, by patch id.
struct SynthTruth {
  std::vector<std::uint32_t> core;
  std::vector<std::uint32_t> planted;
};

struct SynthResult {
  Dataset dataset;
  std::map<std::string, SynthTruth> truth;
};

// Generates a labelled dataset with a planted spatial signal and writes it to
// `out_dir` (manifest.csv, features/<slide>.wsgf, regions.csv).
SynthResult synth_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

// Reads regions.csv written by synth_dataset.
std::map<std::string, SynthTruth> load_synth_truth(const std::filesystem::path& path);

struct FoldSplit {
  std::size_t k = 0;
  std::map<std::string, std::size_t> assignments;

  std::vector<std::string> fold(std::size_t i) const;
};

// Label-stratified k-fold: each class is shuffled with `seed` then dealt
// round-robin, continuing the deal across classes so fold sizes stay within 1.
FoldSplit stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed);

}  // namespace vern
