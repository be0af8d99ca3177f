#include "mplab/grid.hpp"

#include <array>
#include <stdexcept>

namespace mplab::world {

const char* label_name(CellLabel label) {
  switch (label) {
    case CellLabel::kRoad: return "road";
    case CellLabel::kSidewalk: return "sidewalk";
    case CellLabel::kCrossing: return "crossing";
    case CellLabel::kBuilding: return "building";
    case CellLabel::kObstruction: return "obstruction";
    case CellLabel::kOffMap: return "offmap";
    case CellLabel::kPedestrian: return "pedestrian";
    case CellLabel::kVehicle: return "vehicle";
  }
  return "unknown";
}

SemanticGrid::SemanticGrid(int w, int h, CellLabel fill)
    : width(w), height(h), cells(static_cast<std::size_t>(w) * h, fill) {
  if (w < 0 || h < 0) throw std::invalid_argument("SemanticGrid: negative dimension");
}

SemanticGrid downsample_majority(const SemanticGrid& grid, int factor) {
  if (factor <= 0) throw std::invalid_argument("downsample_majority: factor must be positive");
  if (grid.width % factor != 0 || grid.height % factor != 0)
    throw std::invalid_argument("downsample_majority: dimensions not divisible by factor");
  SemanticGrid out(grid.width / factor, grid.height / factor);
  for (int by = 0; by < out.height; ++by) {
    for (int bx = 0; bx < out.width; ++bx) {
      std::array<int, kLabelCount> counts{};
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          counts[static_cast<int>(grid.at(bx * factor + dx, by * factor + dy))]++;
      int best = 0;
      for (int c = 1; c < kLabelCount; ++c)
        if (counts[c] > counts[best]) best = c;
      out.set(bx, by, static_cast<CellLabel>(best));
    }
  }
  return out;
}

void append_one_hot(const SemanticGrid& grid, int channels, std::vector<double>& out) {
  const std::size_t plane = grid.cells.size();
  const std::size_t base = out.size();
  out.resize(base + static_cast<std::size_t>(channels) * plane, 0.0);
  for (std::size_t i = 0; i < plane; ++i) {
    const int label = static_cast<int>(grid.cells[i]);
    if (label >= channels)
      throw std::invalid_argument("append_one_hot: label id exceeds channel count");
    out[base + static_cast<std::size_t>(label) * plane + i] = 1.0;
  }
}

}  // namespace mplab::world
