#include "ssgan/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace ssgan::plot {

namespace {

const std::map<char, std::array<uint8_t, 7>>& font() {
  static const std::map<char, std::array<uint8_t, 7>> glyphs = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}}, {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}}, {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
  };
  return glyphs;
}

constexpr Rgb kWhite{255, 255, 255}, kBlack{0, 0, 0}, kGray{200, 200, 200}, kDark{90, 90, 90};
constexpr int kGlyphW = 6, kGlyphH = 8;

class Canvas {
 public:
  Canvas(int w, int h) : r_{w, h, 3, std::vector<uint8_t>(static_cast<size_t>(w) * h * 3, 255)} {}

  void pixel(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= r_.width || y >= r_.height) return;
    auto* p = &r_.pixels[(static_cast<size_t>(y) * r_.width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  void dot(int x, int y, Rgb c, int radius) {
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) pixel(x + dx, y + dy, c);
  }
  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1, int dash = 0) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy, n = 0;
    while (true) {
      if (dash == 0 || (n / dash) % 2 == 0) dot(x0, y0, c, thickness / 2);
      ++n;
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    line(x0, y0, x1, y0, c);
    line(x1, y0, x1, y1, c);
    line(x1, y1, x0, y1, c);
    line(x0, y1, x0, y0, c);
  }
  void fill(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) pixel(x, y, c);
  }
  void text(int x, int y, const std::string& s, Rgb c) {
    for (char ch : s) {
      const auto it = font().find(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
      if (it != font().end())
        for (int row = 0; row < 7; ++row)
          for (int col = 0; col < 5; ++col)
            if (it->second[static_cast<size_t>(row)] & (0x10 >> col)) pixel(x + col, y + row, c);
      x += kGlyphW;
    }
  }
  void vertical_text(int x, int y, const std::string& s, Rgb c) {
    // Bottom-to-top, glyphs rotated a quarter turn counter-clockwise.
    for (char ch : s) {
      const auto it = font().find(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
      if (it != font().end())
        for (int row = 0; row < 7; ++row)
          for (int col = 0; col < 5; ++col)
            if (it->second[static_cast<size_t>(row)] & (0x10 >> col)) pixel(x + row, y - col, c);
      y -= kGlyphW;
    }
  }
  image::Raster take() { return std::move(r_); }

 private:
  image::Raster r_;
};

std::string format_tick(double v, double step) {
  char buf[32];
  const int decimals = step >= 1 ? 0 : static_cast<int>(std::ceil(-std::log10(step) - 1e-9));
  if (std::abs(v) >= 10000 && step >= 1000)
    std::snprintf(buf, sizeof buf, "%gK", v / 1000);
  else
    std::snprintf(buf, sizeof buf, "%.*f", std::min(decimals, 6), v);
  return buf;
}

void draw_panel(Canvas& cv, const Panel& p, int ox, int w, int h) {
  const int left = ox + 62, right = ox + w - 14, top = 28, bottom = h - 44;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : p.series)
    for (size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  for (double v : p.dashed_vlines) xmax = std::max(xmax, v);
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (p.y_range) std::tie(ymin, ymax) = *p.y_range;
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const auto xt = nice_ticks(xmin, xmax), yt = nice_ticks(ymin, ymax);
  if (!p.y_range) ymin = std::min(ymin, yt.front()), ymax = std::max(ymax, yt.back());
  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left))); };
  auto py = [&](double y) { return bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (bottom - top))); };

  for (double v : p.light_vlines)
    if (v >= xmin && v <= xmax) cv.line(px(v), top, px(v), bottom, kGray);
  for (double v : p.dashed_vlines)
    if (v >= xmin && v <= xmax) cv.line(px(v), top, px(v), bottom, kDark, 1, 4);
  cv.rect(left, top, right, bottom, kBlack);
  const double xstep = xt.size() > 1 ? xt[1] - xt[0] : 1, ystep = yt.size() > 1 ? yt[1] - yt[0] : 1;
  for (double t : xt) {
    if (t < xmin - 1e-12 || t > xmax + 1e-12) continue;
    cv.line(px(t), bottom, px(t), bottom + 4, kBlack);
    const auto s = format_tick(t, xstep);
    cv.text(px(t) - static_cast<int>(s.size()) * kGlyphW / 2, bottom + 8, s, kBlack);
  }
  for (double t : yt) {
    if (t < ymin - 1e-12 || t > ymax + 1e-12) continue;
    cv.line(left - 4, py(t), left, py(t), kBlack);
    const auto s = format_tick(t, ystep);
    cv.text(left - 7 - static_cast<int>(s.size()) * kGlyphW, py(t) - 3, s, kBlack);
  }
  cv.text(ox + w / 2 - static_cast<int>(p.title.size()) * kGlyphW / 2, 9, p.title, kBlack);
  cv.text((left + right) / 2 - static_cast<int>(p.x_label.size()) * kGlyphW / 2, h - 18, p.x_label, kBlack);
  cv.vertical_text(ox + 6, (top + bottom) / 2 + static_cast<int>(p.y_label.size()) * kGlyphW / 2, p.y_label, kBlack);

  for (size_t si = 0; si < p.series.size(); ++si) {
    const auto& s = p.series[si];
    const Rgb c = s.color.value_or(palette(si));
    bool have_prev = false;
    int prev_x = 0, prev_y = 0;
    for (size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        have_prev = false;
        continue;
      }
      const double yc = std::clamp(s.y[i], ymin, ymax);
      const int x = px(s.x[i]), y = py(yc);
      if (have_prev) cv.line(prev_x, prev_y, x, y, c, 2);
      if (s.markers) cv.dot(x, y, c, 2);
      prev_x = x, prev_y = y, have_prev = true;
    }
    const int ly = top + 6 + static_cast<int>(si) * (kGlyphH + 4);
    const int lx = right - 8 - static_cast<int>(s.label.size()) * kGlyphW - 18;
    cv.fill(lx, ly + 2, lx + 12, ly + 4, c);
    cv.text(lx + 16, ly, s.label, kBlack);
  }
}

}  // namespace

Rgb palette(size_t index) {
  static const Rgb colors[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14},
                               {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {23, 190, 207}};
  return colors[index % (sizeof colors / sizeof colors[0])];
}

std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::floor(lo / step) * step; t <= hi + step * 1e-9; t += step)
    out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  if (out.size() < 2) out.push_back(out.back() + step);
  return out;
}

image::Raster render(const std::vector<Panel>& panels, int panel_width, int panel_height) {
  if (panels.empty()) throw std::invalid_argument("plot needs at least one panel");
  Canvas cv(panel_width * static_cast<int>(panels.size()), panel_height);
  for (size_t i = 0; i < panels.size(); ++i) draw_panel(cv, panels[i], static_cast<int>(i) * panel_width, panel_width, panel_height);
  return cv.take();
}

void write_plot(const std::filesystem::path& path, const std::vector<Panel>& panels, int panel_width,
                int panel_height) {
  image::write_png(path, render(panels, panel_width, panel_height));
}

}  // namespace ssgan::plot
