// Embedded glyph prototypes: letters 'A'..'J' drawn from polyline skeletons
// and rasterized in several stroke styles, standing in for rendered fonts.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "robustlab/fonts.hpp"

namespace robustlab::fonts {

namespace {

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;

void arc(Stroke& s, double cx, double cy, double rx, double ry, double deg0, double deg1, int n = 28) {
  for (int i = 0; i <= n; ++i) {
    const double a = (deg0 + (deg1 - deg0) * i / n) * std::numbers::pi / 180.0;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

Stroke seg(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y1}}; }

// skeletons in the unit square, y increasing downward
std::vector<Stroke> glyph_skeleton(int64_t cls) {
  std::vector<Stroke> g;
  switch (cls) {
    case 0:  // A
      g.push_back(seg(0.10, 0.98, 0.50, 0.02));
      g.push_back(seg(0.50, 0.02, 0.90, 0.98));
      g.push_back(seg(0.27, 0.62, 0.73, 0.62));
      break;
    case 1: {  // B
      g.push_back(seg(0.18, 0.02, 0.18, 0.98));
      Stroke top{{0.18, 0.02}};
      arc(top, 0.52, 0.26, 0.24, 0.24, -90, 90);
      top.push_back({0.18, 0.50});
      g.push_back(top);
      Stroke bot{{0.18, 0.50}};
      arc(bot, 0.54, 0.74, 0.28, 0.24, -90, 90);
      bot.push_back({0.18, 0.98});
      g.push_back(bot);
      break;
    }
    case 2: {  // C
      Stroke c;
      arc(c, 0.54, 0.50, 0.36, 0.46, 42, 318);
      g.push_back(c);
      break;
    }
    case 3: {  // D
      g.push_back(seg(0.18, 0.02, 0.18, 0.98));
      Stroke bowl{{0.18, 0.02}, {0.44, 0.02}};
      arc(bowl, 0.44, 0.50, 0.34, 0.48, -90, 90);
      bowl.push_back({0.18, 0.98});
      g.push_back(bowl);
      break;
    }
    case 4:  // E
      g.push_back(seg(0.20, 0.02, 0.20, 0.98));
      g.push_back(seg(0.20, 0.02, 0.82, 0.02));
      g.push_back(seg(0.20, 0.50, 0.72, 0.50));
      g.push_back(seg(0.20, 0.98, 0.82, 0.98));
      break;
    case 5:  // F
      g.push_back(seg(0.20, 0.02, 0.20, 0.98));
      g.push_back(seg(0.20, 0.02, 0.82, 0.02));
      g.push_back(seg(0.20, 0.50, 0.70, 0.50));
      break;
    case 6: {  // G
      Stroke c;
      arc(c, 0.52, 0.50, 0.36, 0.46, 38, 330);
      g.push_back(c);
      g.push_back(seg(0.56, 0.58, 0.88, 0.58));
      g.push_back(seg(0.88, 0.58, 0.88, 0.78));
      break;
    }
    case 7:  // H
      g.push_back(seg(0.18, 0.02, 0.18, 0.98));
      g.push_back(seg(0.82, 0.02, 0.82, 0.98));
      g.push_back(seg(0.18, 0.52, 0.82, 0.52));
      break;
    case 8:  // I
      g.push_back(seg(0.50, 0.02, 0.50, 0.98));
      g.push_back(seg(0.30, 0.02, 0.70, 0.02));
      g.push_back(seg(0.30, 0.98, 0.70, 0.98));
      break;
    case 9: {  // J
      g.push_back(seg(0.30, 0.02, 0.88, 0.02));
      g.push_back(seg(0.66, 0.02, 0.66, 0.72));
      Stroke hook;
      arc(hook, 0.44, 0.72, 0.22, 0.24, 0, 180);
      g.push_back(hook);
      break;
    }
    default:
      throw std::invalid_argument("glyph class out of range");
  }
  return g;
}

struct FontStyle {
  double width;   // stroke half-width in unit coords
  double slant;   // x-shear applied around the vertical center
  double xscale;  // horizontal condensing / widening
};

const std::vector<FontStyle>& font_styles() {
  static const std::vector<FontStyle> styles = {
      {0.040, 0.00, 1.00}, {0.062, 0.00, 1.00}, {0.088, 0.00, 1.00},
      {0.040, 0.20, 1.00}, {0.062, 0.20, 1.00}, {0.040, -0.20, 1.00},
      {0.062, -0.20, 1.00}, {0.050, 0.00, 0.78}, {0.075, 0.00, 0.80},
      {0.050, 0.00, 1.18}, {0.075, 0.12, 1.12}, {0.100, 0.00, 0.92},
  };
  return styles;
}

double dist_to_segment(double px, double py, const Pt& a, const Pt& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

Tensor rasterize(const std::vector<Stroke>& strokes, const FontStyle& style, int64_t size) {
  Tensor bmp = Tensor::zeros({1, size, size});
  const double margin = 0.16;
  const double span = 1.0 - 2.0 * margin;
  const double aa = 1.1 / static_cast<double>(size);  // antialias band in unit coords
  for (int64_t i = 0; i < size; ++i)
    for (int64_t j = 0; j < size; ++j) {
      // pixel center mapped into glyph coordinates, undoing margin, x-scale, slant
      const double py = ((static_cast<double>(i) + 0.5) / static_cast<double>(size) - margin) / span;
      double px = (static_cast<double>(j) + 0.5) / static_cast<double>(size) - 0.5;
      px = px / style.xscale - style.slant * (0.5 - py) + 0.5;
      double d = 1e9;
      for (const Stroke& s : strokes)
        for (size_t k = 0; k + 1 < s.size(); ++k) d = std::min(d, dist_to_segment(px, py, s[k], s[k + 1]));
      const double v = std::min(1.0, std::max(0.0, (style.width + aa / 2 - d) / aa));
      bmp.at(i * size + j) = static_cast<real_t>(v);
    }
  return bmp;
}

}  // namespace

std::vector<GlyphPrototype> builtin_prototypes(int64_t size) {
  std::vector<GlyphPrototype> out;
  const auto& styles = font_styles();
  for (int64_t cls = 0; cls < 10; ++cls) {
    const auto skeleton = glyph_skeleton(cls);
    for (size_t f = 0; f < styles.size(); ++f)
      out.push_back({cls, static_cast<int64_t>(f), rasterize(skeleton, styles[f], size)});
  }
  return out;
}

}  // namespace robustlab::fonts
