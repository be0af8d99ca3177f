#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mplab::world {

// Cell labels. The first six are static map classes; the last two mark
// agent-occupied cells and only appear in rendered full frames.
enum class CellLabel : std::uint8_t {
  kRoad = 0,
  kSidewalk = 1,
  kCrossing = 2,
  kBuilding = 3,
  kObstruction = 4,
  kOffMap = 5,
  kPedestrian = 6,
  kVehicle = 7,
};

inline constexpr int kStaticLabelCount = 6;
inline constexpr int kLabelCount = 8;

const char* label_name(CellLabel label);

struct SemanticGrid {
  int width = 0;
  int height = 0;
  std::vector<CellLabel> cells;  // row-major, cells[y * width + x]

  SemanticGrid() = default;
  SemanticGrid(int w, int h, CellLabel fill = CellLabel::kOffMap);

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  CellLabel at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
  void set(int x, int y, CellLabel v) { cells[static_cast<std::size_t>(y) * width + x] = v; }

  bool operator==(const SemanticGrid&) const = default;
};

// Block-majority downsampling. Both grid dimensions must be divisible by
// factor. Ties break toward the lowest label id.
SemanticGrid downsample_majority(const SemanticGrid& grid, int factor);

// Appends one plane per channel, plane-major: out gains channels *
// width * height values, channel c first. Every cell label must be
// < channels.
void append_one_hot(const SemanticGrid& grid, int channels, std::vector<double>& out);

}  // namespace mplab::world
