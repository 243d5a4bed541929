#pragma once

#include <array>
#include <string>
#include <vector>

#include "bt/core/image.hpp"

namespace bt::harness {

struct Rgb {
  int r = 0, g = 0, b = 0;
  std::string hex() const;
};

struct Point {
  double x = 0, y = 0;
};

enum class Anchor { start, middle, end };

/// Retained-mode drawing surface rendered to SVG text or to a raster image.
/// Both renderers consume the same primitive list, so the two outputs agree.
class Canvas {
 public:
  Canvas(int width, int height) : width_(width), height_(height) {}

  void line(Point a, Point b, Rgb color, double width = 1.0);
  void polyline(std::vector<Point> pts, Rgb color, double width = 1.5, bool closed = false);
  void polygon(std::vector<Point> pts, Rgb fill, double opacity);
  void rect(Point origin, double w, double h, Rgb fill);
  void circle(Point c, double r, Rgb fill);
  /// ASCII text; `size` is the nominal font height in pixels.
  void text(Point at, std::string s, double size, Rgb color, Anchor anchor = Anchor::start);

  std::string to_svg() const;
  Image to_image() const;

 private:
  enum class Kind { line, polyline, polygon, rect, circle, text };
  struct Prim {
    Prim(Kind k, std::vector<Point> p, Rgb c, double w = 1) : kind(k), pts(std::move(p)), color(c), width(w) {}
    Kind kind;
    std::vector<Point> pts;
    Rgb color;
    double width = 1, opacity = 1, size = 0;
    bool closed = false;
    std::string text;
    Anchor anchor = Anchor::start;
  };
  int width_, height_;
  std::vector<Prim> prims_;
};

}  // namespace bt::harness
