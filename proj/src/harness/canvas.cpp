#include "canvas.hpp"

#include <cstdio>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

namespace bt::harness {

namespace {

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

cv::Scalar bgr(Rgb c) { return cv::Scalar(c.b, c.g, c.r); }

cv::Point px(Point p) { return cv::Point(int(std::lround(p.x)), int(std::lround(p.y))); }

}  // namespace

std::string Rgb::hex() const {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r & 0xff, g & 0xff, b & 0xff);
  return buf;
}

void Canvas::line(Point a, Point b, Rgb color, double width) {
  prims_.emplace_back(Kind::line, std::vector<Point>{a, b}, color, width);
}

void Canvas::polyline(std::vector<Point> pts, Rgb color, double width, bool closed) {
  Prim p{Kind::polyline, std::move(pts), color, width};
  p.closed = closed;
  prims_.push_back(std::move(p));
}

void Canvas::polygon(std::vector<Point> pts, Rgb fill, double opacity) {
  Prim p{Kind::polygon, std::move(pts), fill};
  p.opacity = opacity;
  prims_.push_back(std::move(p));
}

void Canvas::rect(Point origin, double w, double h, Rgb fill) {
  prims_.emplace_back(Kind::rect, std::vector<Point>{origin, {origin.x + w, origin.y + h}}, fill);
}

void Canvas::circle(Point c, double r, Rgb fill) {
  Prim p{Kind::circle, std::vector<Point>{c}, fill};
  p.size = r;
  prims_.push_back(std::move(p));
}

void Canvas::text(Point at, std::string s, double size, Rgb color, Anchor anchor) {
  Prim p{Kind::text, std::vector<Point>{at}, color};
  p.text = std::move(s);
  p.size = size;
  p.anchor = anchor;
  prims_.push_back(std::move(p));
}

std::string Canvas::to_svg() const {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width_) +
                  "\" height=\"" + std::to_string(height_) + "\" viewBox=\"0 0 " +
                  std::to_string(width_) + " " + std::to_string(height_) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  auto points = [](const std::vector<Point>& pts) {
    std::string out;
    for (std::size_t i = 0; i < pts.size(); ++i) out += (i ? " " : "") + f2(pts[i].x) + "," + f2(pts[i].y);
    return out;
  };
  for (const auto& p : prims_) {
    switch (p.kind) {
      case Kind::line:
        s += "<line x1=\"" + f2(p.pts[0].x) + "\" y1=\"" + f2(p.pts[0].y) + "\" x2=\"" + f2(p.pts[1].x) +
             "\" y2=\"" + f2(p.pts[1].y) + "\" stroke=\"" + p.color.hex() + "\" stroke-width=\"" +
             f2(p.width) + "\"/>\n";
        break;
      case Kind::polyline:
        s += std::string(p.closed ? "<polygon" : "<polyline") + " points=\"" + points(p.pts) +
             "\" fill=\"none\" stroke=\"" + p.color.hex() + "\" stroke-width=\"" + f2(p.width) + "\"/>\n";
        break;
      case Kind::polygon:
        s += "<polygon points=\"" + points(p.pts) + "\" fill=\"" + p.color.hex() + "\" fill-opacity=\"" +
             f2(p.opacity) + "\" stroke=\"none\"/>\n";
        break;
      case Kind::rect:
        s += "<rect x=\"" + f2(p.pts[0].x) + "\" y=\"" + f2(p.pts[0].y) + "\" width=\"" +
             f2(p.pts[1].x - p.pts[0].x) + "\" height=\"" + f2(p.pts[1].y - p.pts[0].y) + "\" fill=\"" +
             p.color.hex() + "\"/>\n";
        break;
      case Kind::circle:
        s += "<circle cx=\"" + f2(p.pts[0].x) + "\" cy=\"" + f2(p.pts[0].y) + "\" r=\"" + f2(p.size) +
             "\" fill=\"" + p.color.hex() + "\"/>\n";
        break;
      case Kind::text: {
        const char* anchor = p.anchor == Anchor::start ? "start" : p.anchor == Anchor::middle ? "middle" : "end";
        s += "<text x=\"" + f2(p.pts[0].x) + "\" y=\"" + f2(p.pts[0].y) + "\" font-family=\"sans-serif\" font-size=\"" +
             f2(p.size) + "\" text-anchor=\"" + anchor + "\" fill=\"" + p.color.hex() + "\">" + escape(p.text) +
             "</text>\n";
        break;
      }
    }
  }
  return s + "</svg>\n";
}

Image Canvas::to_image() const {
  cv::Mat mat(height_, width_, CV_8UC3, cv::Scalar(255, 255, 255));
  for (const auto& p : prims_) {
    switch (p.kind) {
      case Kind::line:
        cv::line(mat, px(p.pts[0]), px(p.pts[1]), bgr(p.color), std::max(1, int(std::lround(p.width))), cv::LINE_AA);
        break;
      case Kind::polyline: {
        std::vector<cv::Point> pts;
        for (auto q : p.pts) pts.push_back(px(q));
        cv::polylines(mat, pts, p.closed, bgr(p.color), std::max(1, int(std::lround(p.width))), cv::LINE_AA);
        break;
      }
      case Kind::polygon: {
        std::vector<cv::Point> pts;
        for (auto q : p.pts) pts.push_back(px(q));
        cv::Mat overlay = mat.clone();
        cv::fillPoly(overlay, std::vector<std::vector<cv::Point>>{pts}, bgr(p.color), cv::LINE_AA);
        cv::addWeighted(overlay, p.opacity, mat, 1.0 - p.opacity, 0.0, mat);
        break;
      }
      case Kind::rect:
        cv::rectangle(mat, px(p.pts[0]), px(p.pts[1]), bgr(p.color), cv::FILLED);
        break;
      case Kind::circle:
        cv::circle(mat, px(p.pts[0]), std::max(1, int(std::lround(p.size))), bgr(p.color), cv::FILLED, cv::LINE_AA);
        break;
      case Kind::text: {
        const double scale = p.size / 30.0;
        int baseline = 0;
        const auto sz = cv::getTextSize(p.text, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline);
        cv::Point at = px(p.pts[0]);
        if (p.anchor == Anchor::middle) at.x -= sz.width / 2;
        if (p.anchor == Anchor::end) at.x -= sz.width;
        cv::putText(mat, p.text, at, cv::FONT_HERSHEY_SIMPLEX, scale, bgr(p.color), 1, cv::LINE_AA);
        break;
      }
    }
  }
  Image img(width_, height_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) {
      const auto& v = mat.at<cv::Vec3b>(y, x);
      img.at(x, y, 0) = v[2];
      img.at(x, y, 1) = v[1];
      img.at(x, y, 2) = v[0];
    }
  return img;
}

}  // namespace bt::harness
