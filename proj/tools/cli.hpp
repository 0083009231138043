#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace vern::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kIo = 3;
inline constexpr int kData = 4;
inline constexpr int kCheckpoint = 5;

// Runs the command line `args` (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Scatter raster: one disc per patch centre, coloured purple (0) to red (1);
// `highlight` nodes get a dark ring.
void write_heatmap_png(const std::filesystem::path& path, const std::vector<double>& xs,
                       const std::vector<double>& ys, const std::vector<double>& values,
                       const std::vector<std::size_t>& highlight);

}  // namespace vern::cli
