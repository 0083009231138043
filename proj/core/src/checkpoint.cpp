#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "vern/errors.hpp"
#include "vern/model.hpp"

namespace vern {
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'V', 'E', 'R', 'N'};
constexpr std::uint32_t kMaxString = 1u << 20;

std::string read_string(std::istream& is, const std::string& what) {
  const std::uint32_t len = detail::get_u32(is, what);
  if (len > kMaxString) throw CheckpointError("checkpoint: implausible length for " + what);
  std::string s(len, '\0');
  if (len > 0 && !is.read(s.data(), len)) throw CheckpointError("checkpoint: truncated " + what);
  return s;
}

void write_string(std::ostream& os, const std::string& s) {
  detail::put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

CheckpointMeta parse_meta(const std::string& text) {
  CheckpointMeta meta;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("checkpoint: malformed metadata line '" + line + "'");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

std::size_t meta_count(const CheckpointMeta& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError("checkpoint: metadata lacks '" + key + "'");
  try {
    return static_cast<std::size_t>(std::stoull(it->second));
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint: metadata '" + key + "' is not a count");
  }
}

struct Header {
  CheckpointMeta meta;
  ModelDims dims;
  std::uint64_t seed = 0;
};

Header read_header(std::istream& is, const fs::path& path) {
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = detail::get_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Header h;
  h.meta = parse_meta(read_string(is, "metadata"));
  h.dims.dim_a = meta_count(h.meta, "dim_a");
  h.dims.dim_b = meta_count(h.meta, "dim_b");
  h.dims.hidden = meta_count(h.meta, "hidden");
  h.dims.embed = meta_count(h.meta, "embed");
  h.seed = static_cast<std::uint64_t>(meta_count(h.meta, "seed"));
  return h;
}

}  // namespace

void save_checkpoint(const VernParams& p, const fs::path& path, const CheckpointMeta& extra) {
  CheckpointMeta meta = extra;
  meta["dim_a"] = std::to_string(p.dims.dim_a);
  meta["dim_b"] = std::to_string(p.dims.dim_b);
  meta["hidden"] = std::to_string(p.dims.hidden);
  meta["embed"] = std::to_string(p.dims.embed);
  meta["seed"] = std::to_string(p.seed);
  std::string text;
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("checkpoint: metadata key/value contains '=' or newline: " + k);
    }
    text += k + "=" + v + "\n";
  }

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  detail::put_u32(os, kCheckpointVersion);
  write_string(os, text);
  const auto params = p.named();
  detail::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_string(os, name);
    detail::put_u32(os, static_cast<std::uint32_t>(t->rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(t->cols()));
    for (double v : t->data()) detail::put_f64(os, v);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return read_header(is, path).meta;
}

VernParams load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  Header h;
  try {
    h = read_header(is, path);
  } catch (const FormatError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }

  VernParams p;
  p.dims = h.dims;
  p.seed = h.seed;
  // Shapes implied by the stored dims.
  const VernParams shape_ref = [&] {
    VernParams s;
    s.dims = h.dims;
    s.gcn_a = {Tensor(h.dims.dim_a, h.dims.hidden), Tensor(1, h.dims.hidden)};
    s.gcn_b = {Tensor(h.dims.dim_b, h.dims.hidden), Tensor(1, h.dims.hidden)};
    s.shared_sage = {Tensor(2 * h.dims.hidden, h.dims.hidden), Tensor(1, h.dims.hidden)};
    s.shared_mlp = {Tensor(h.dims.hidden, h.dims.embed), Tensor(1, h.dims.embed), Tensor(h.dims.embed, h.dims.embed),
                    Tensor(1, h.dims.embed)};
    s.skip_proj_b = Tensor(h.dims.dim_b, h.dims.embed);
    s.classifier_w = Tensor(h.dims.embed, 1);
    s.classifier_b = Tensor(1, 1);
    return s;
  }();

  try {
    auto slots = p.named();
    const auto refs = shape_ref.named();
    const std::uint32_t count = detail::get_u32(is, "parameter count");
    if (count != slots.size()) {
      throw CheckpointError(path.string() + ": expected " + std::to_string(slots.size()) + " parameters, found " +
                            std::to_string(count));
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const std::string name = read_string(is, "parameter name");
      if (name != slots[i].first) {
        throw CheckpointError(path.string() + ": expected parameter '" + slots[i].first + "', found '" + name + "'");
      }
      const std::uint32_t rows = detail::get_u32(is, name + " rows");
      const std::uint32_t cols = detail::get_u32(is, name + " cols");
      if (rows != refs[i].second->rows() || cols != refs[i].second->cols()) {
        throw CheckpointError(path.string() + ": parameter '" + name + "' is " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", metadata implies " + refs[i].second->shape_string());
      }
      Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = detail::get_f64(is, name);
      *slots[i].second = Tensor(std::move(m));
    }
  } catch (const FormatError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const NumericError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError(path.string() + ": trailing bytes");
  return p;
}

VernParams load_checkpoint(const fs::path& path, const ModelDims& expected) {
  VernParams p = load_checkpoint(path);
  if (!(p.dims == expected)) {
    throw CheckpointError(path.string() + ": checkpoint dims (a=" + std::to_string(p.dims.dim_a) +
                          ", b=" + std::to_string(p.dims.dim_b) + ", H=" + std::to_string(p.dims.hidden) +
                          ", E=" + std::to_string(p.dims.embed) + ") do not match expected (a=" +
                          std::to_string(expected.dim_a) + ", b=" + std::to_string(expected.dim_b) +
                          ", H=" + std::to_string(expected.hidden) + ", E=" + std::to_string(expected.embed) + ")");
  }
  return p;
}

}  // namespace vern
