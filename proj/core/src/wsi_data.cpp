#include "vern/wsi_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "vern/errors.hpp"

namespace vern {
namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[4] = {'W', 'S', 'G', 'F'};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError(what + ": not a count: '" + s + "'");
  return v;
}

void decode_f32_block(const unsigned char* bytes, std::size_t n, std::vector<double>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* b = bytes + 4 * i;
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
}

FeatureFileHeader read_header(std::istream& is, const fs::path& path) {
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kFeatureMagic)) {
    throw FormatError(path.string() + ": bad magic, expected WSGF");
  }
  FeatureFileHeader h;
  h.version = detail::get_u32(is, "version");
  h.patch_count = detail::get_u32(is, "patch_count");
  h.dim_a = detail::get_u32(is, "dim_a");
  h.dim_b = detail::get_u32(is, "dim_b");
  if (h.version != kFeatureFileVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(h.version));
  }
  if (h.dim_a != kDimA) {
    throw FormatError(path.string() + ": feat_a dim expected " + std::to_string(kDimA) + ", found " +
                      std::to_string(h.dim_a));
  }
  if (h.dim_b != kDimB) {
    throw FormatError(path.string() + ": feat_b dim expected " + std::to_string(kDimB) + ", found " +
                      std::to_string(h.dim_b));
  }
  return h;
}

std::ifstream open_binary(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

}  // namespace

std::string_view to_string(SectionKind kind) {
  switch (kind) {
    case SectionKind::frozen:
      return "frozen";
    case SectionKind::paraffin:
      return "paraffin";
    case SectionKind::unknown:
      return "unknown";
  }
  return "unknown";
}

SectionKind parse_section_kind(std::string_view s) {
  if (s == "frozen") return SectionKind::frozen;
  if (s == "paraffin") return SectionKind::paraffin;
  if (s == "unknown" || s.empty()) return SectionKind::unknown;
  throw ValidationError("section_kind must be frozen, paraffin or unknown, got '" + std::string(s) + "'");
}

const SlideEntry* Dataset::find(std::string_view slide_id) const {
  for (const auto& e : entries) {
    if (e.slide_id == slide_id) return &e;
  }
  return nullptr;
}

bool Dataset::has_patient_ids() const {
  return std::any_of(entries.begin(), entries.end(), [](const SlideEntry& e) { return e.patient_id.has_value(); });
}

std::size_t Dataset::count_label(int label) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [label](const SlideEntry& e) { return e.label == label; }));
}

Dataset load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());

  std::string line;
  if (!std::getline(is, line)) throw ValidationError(path.string() + ": empty manifest");
  const auto header = split_csv_line(strip_cr(line));
  const std::vector<std::string> required = {"slide_id", "label", "section_kind", "feature_path", "patch_count"};
  const bool with_patient = header.size() == 6 && header[5] == "patient_id";
  if (header.size() < required.size() || !std::equal(required.begin(), required.end(), header.begin()) ||
      (header.size() > 5 && !with_patient)) {
    throw ValidationError(path.string() + ": header must be " +
                          "slide_id,label,section_kind,feature_path,patch_count[,patient_id]");
  }

  Dataset ds;
  ds.source_tag = path.string();
  const fs::path base = path.parent_path();
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " columns, found " +
                            std::to_string(cells.size()));
    }
    SlideEntry e;
    e.slide_id = cells[0];
    if (e.slide_id.empty()) throw ValidationError(where + ": empty slide_id");
    if (!seen.insert(e.slide_id).second) throw ValidationError(where + ": duplicate slide_id '" + e.slide_id + "'");
    if (cells[1] == "0") {
      e.label = 0;
    } else if (cells[1] == "1") {
      e.label = 1;
    } else if (!cells[1].empty()) {
      throw ValidationError(where + ": label must be 0 or 1, got '" + cells[1] + "'");
    }
    e.section_kind = parse_section_kind(cells[2]);
    fs::path fp(cells[3]);
    e.feature_path = fp.is_absolute() ? fp : base / fp;
    e.patch_count = parse_count(cells[4], where + ": patch_count");
    if (e.patch_count < 1) throw ValidationError(where + ": patch_count must be >= 1");
    if (with_patient && !cells[5].empty()) e.patient_id = cells[5];
    ds.entries.push_back(std::move(e));
  }

  for (const auto& e : ds.entries) {
    if (!fs::exists(e.feature_path)) {
      throw IoError("slide '" + e.slide_id + "': feature file not found: " + e.feature_path.string());
    }
  }
  return ds;
}

void write_manifest(const Dataset& ds, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write manifest " + path.string());
  const bool with_patient = ds.has_patient_ids();
  os << "slide_id,label,section_kind,feature_path,patch_count" << (with_patient ? ",patient_id" : "") << "\n";
  const fs::path base = path.parent_path();
  for (const auto& e : ds.entries) {
    fs::path fp = e.feature_path;
    if (!base.empty()) {
      const fs::path rel = fp.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") fp = rel;
    }
    os << e.slide_id << "," << (e.label ? std::to_string(*e.label) : "") << "," << to_string(e.section_kind) << ","
       << fp.generic_string() << "," << e.patch_count;
    if (with_patient) os << "," << e.patient_id.value_or("");
    os << "\n";
  }
  if (!os) throw IoError("write failed: " + path.string());
}

FeatureFileHeader read_feature_header(const fs::path& path) {
  auto is = open_binary(path);
  return read_header(is, path);
}

std::vector<PatchRecord> read_feature_file(const fs::path& path) {
  auto is = open_binary(path);
  const FeatureFileHeader h = read_header(is, path);
  std::vector<PatchRecord> out(h.patch_count);
  std::vector<unsigned char> block((kDimA + kDimB) * 4);
  std::set<std::uint32_t> ids;
  for (std::size_t i = 0; i < out.size(); ++i) {
    PatchRecord& r = out[i];
    const std::string what = "patch " + std::to_string(i);
    r.patch_id = detail::get_u32(is, what);
    r.x = detail::get_f64(is, what);
    r.y = detail::get_f64(is, what);
    if (!is.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(block.size()))) {
      throw FormatError(path.string() + ": truncated while reading " + what);
    }
    decode_f32_block(block.data(), kDimA, r.feat_a);
    decode_f32_block(block.data() + 4 * kDimA, kDimB, r.feat_b);
    const bool finite = std::isfinite(r.x) && std::isfinite(r.y) &&
                        std::all_of(r.feat_a.begin(), r.feat_a.end(), [](double v) { return std::isfinite(v); }) &&
                        std::all_of(r.feat_b.begin(), r.feat_b.end(), [](double v) { return std::isfinite(v); });
    if (!finite) throw DataError(path.string() + ": non-finite value in patch index " + std::to_string(i));
    if (!ids.insert(r.patch_id).second) {
      throw DataError(path.string() + ": duplicate patch_id " + std::to_string(r.patch_id));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after last patch");
  return out;
}

void write_feature_file(const fs::path& path, std::span<const PatchRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.feat_a.size() != kDimA || r.feat_b.size() != kDimB) {
      throw FormatError("patch index " + std::to_string(i) + ": feature dims (" + std::to_string(r.feat_a.size()) +
                        ", " + std::to_string(r.feat_b.size()) + "), expected (1024, 768)");
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kFeatureMagic, 4);
  detail::put_u32(os, kFeatureFileVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(records.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(kDimA));
  detail::put_u32(os, static_cast<std::uint32_t>(kDimB));
  for (const auto& r : records) {
    detail::put_u32(os, r.patch_id);
    detail::put_f64(os, r.x);
    detail::put_f64(os, r.y);
    for (double v : r.feat_a) detail::put_f32(os, static_cast<float>(v));
    for (double v : r.feat_b) detail::put_f32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<PatchRecord> load_slide(const SlideEntry& entry) {
  if (!fs::exists(entry.feature_path)) {
    throw IoError("slide '" + entry.slide_id + "': feature file not found: " + entry.feature_path.string());
  }
  auto records = read_feature_file(entry.feature_path);
  if (records.size() != entry.patch_count) {
    throw FormatError("slide '" + entry.slide_id + "': manifest declares " + std::to_string(entry.patch_count) +
                      " patches, file holds " + std::to_string(records.size()));
  }
  return records;
}

}  // namespace vern
