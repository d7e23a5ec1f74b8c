#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssgan/image_io.hpp"

namespace ssgan::plot {

using Rgb = std::array<uint8_t, 3>;

// Distinct colors cycled by series index.
Rgb palette(size_t index);

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::optional<Rgb> color;
  bool markers = false;
};

struct Panel {
  std::string title;
  std::string x_label, y_label;
  std::vector<Series> series;
  std::vector<double> light_vlines;   // thin gray guides
  std::vector<double> dashed_vlines;  // dashed dark guides
  std::optional<std::pair<double, double>> y_range;
};

// Panels side by side; text uses a 5x7 upper-case bitmap font. Non-finite
// points break a series.
image::Raster render(const std::vector<Panel>& panels, int panel_width = 520, int panel_height = 340);
void write_plot(const std::filesystem::path& path, const std::vector<Panel>& panels, int panel_width = 520,
                int panel_height = 340);

// Tick positions covering [lo, hi] at a 1-2-5 step.
std::vector<double> nice_ticks(double lo, double hi, int target = 5);

}  // namespace ssgan::plot
