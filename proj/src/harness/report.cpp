#include "bt/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>
#include <set>

#include "bt/core/errors.hpp"
#include "bt/core/image.hpp"
#include "canvas.hpp"

namespace bt::harness {

std::string_view to_string(ReportKind kind) {
  switch (kind) {
    case ReportKind::table: return "table";
    case ReportKind::line: return "line";
    case ReportKind::bar: return "bar";
    case ReportKind::radar: return "radar";
    case ReportKind::contact_sheet: return "contact_sheet";
  }
  return "?";
}

ReportKind parse_report_kind(std::string_view s) {
  for (auto k : {ReportKind::table, ReportKind::line, ReportKind::bar, ReportKind::radar,
                 ReportKind::contact_sheet})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown report kind: " + std::string(s));
}

std::string coordinate_label(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v.get<double>());
    return buf;
  }
  return v.dump();
}

std::string format_cell(const CellStats& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f±%.1f", s.mean, s.std);
  return buf;
}

namespace {

constexpr char kSep = '\x1f';

std::string label_of(const RunRecord& r, const std::string& key) {
  if (!r.coordinates.contains(key)) {
    throw ValidationError("record " + r.config_hash.substr(0, 12) + " has no coordinate '" + key + "'");
  }
  return coordinate_label(r.coordinates.at(key));
}

std::vector<RunRecord> selected_records(const std::vector<RunRecord>& records, const ReportOptions& o) {
  std::vector<RunRecord> out;
  for (const auto& r : records) {
    if (!r.ok() || !r.final_accuracy) continue;
    bool keep = true;
    for (const auto& [k, v] : o.where) keep = keep && r.coordinates.contains(k) && coordinate_label(r.coordinates.at(k)) == v;
    if (keep) out.push_back(r);
  }
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? std::string(1, kSep) : "") + parts[i];
  return s;
}

bool numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

std::vector<std::string> ordered_values(const std::vector<RunRecord>& records, const std::string& key,
                                        const ReportOptions& opt) {
  std::set<std::string> uniq;
  for (const auto& r : records) uniq.insert(label_of(r, key));
  std::vector<std::string> rest(uniq.begin(), uniq.end());
  if (std::all_of(rest.begin(), rest.end(), numeric)) {
    std::sort(rest.begin(), rest.end(),
              [](const std::string& a, const std::string& b) { return std::stod(a) < std::stod(b); });
  } else if (key == "pipeline") {
    auto rank = [](const std::string& s) {
      static const std::vector<std::string> canon{"vanilla", "mixed", "bridged", "bridged++"};
      return std::size_t(std::find(canon.begin(), canon.end(), s) - canon.begin());
    };
    std::stable_sort(rest.begin(), rest.end(),
                     [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
  }
  std::vector<std::string> out;
  if (auto it = opt.order.find(key); it != opt.order.end())
    for (const auto& v : it->second)
      if (uniq.count(v)) out.push_back(v);
  for (const auto& v : rest)
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  return out;
}

void check_metrics(const std::vector<RunRecord>& records, const std::string& column_key, bool per_column) {
  std::map<std::string, std::set<std::string>> by_col;
  std::set<std::string> all;
  for (const auto& r : records) {
    all.insert(r.metric);
    by_col[per_column ? label_of(r, column_key) : ""].insert(r.metric);
  }
  for (const auto& [col, metrics] : by_col) {
    if (metrics.size() > 1) {
      std::string list;
      for (const auto& m : metrics) list += (list.empty() ? "" : ", ") + m;
      throw ValidationError("refusing to mix accuracy metrics (" + list + ")" +
                            (per_column ? " in column '" + col + "'" : " in one report"));
    }
  }
}

std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  write_file(p, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string stats_csv(const std::vector<std::string>& keys, const std::map<std::string, CellStats>& agg) {
  std::string s;
  for (const auto& k : keys) s += csv_field(k) + ",";
  s += "mean,std,n,metric\n";
  for (const auto& [key, st] : agg) {
    std::size_t start = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const auto end = key.find(kSep, start);
      s += csv_field(key.substr(start, end == std::string::npos ? std::string::npos : end - start)) + ",";
      start = end == std::string::npos ? key.size() : end + 1;
    }
    s += fmt("%.6f", st.mean) + "," + fmt("%.6f", st.std) + "," + std::to_string(st.n) + "," + st.metric + "\n";
  }
  return s;
}

Rgb series_color(const std::string& name, std::size_t index) {
  if (name == "vanilla") return {214, 39, 40};
  if (name == "bridged++") return {44, 160, 44};
  if (name == "mixed") return {31, 119, 180};
  if (name == "bridged") return {255, 127, 14};
  static const Rgb palette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
                                {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127}};
  return palette[index % 8];
}

const Rgb kBlack{0, 0, 0};
const Rgb kGrey{200, 200, 200};
const Rgb kDark{90, 90, 90};

struct YRange {
  double lo, hi;
};

YRange y_range(const std::map<std::string, CellStats>& agg) {
  double mn = 100, mx = 0;
  for (const auto& [_, s] : agg) {
    mn = std::min(mn, s.mean - s.std);
    mx = std::max(mx, s.mean + s.std);
  }
  double lo = std::max(0.0, std::floor(mn / 10.0) * 10.0);
  double hi = std::min(100.0, std::ceil(mx / 10.0) * 10.0);
  if (hi - lo < 10) {
    if (hi + 10 <= 100) hi += 10;
    else lo -= 10;
  }
  return {lo, hi};
}

void legend(Canvas& c, const std::vector<std::string>& series, double x, double y) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    c.rect({x, y + 18.0 * double(i) - 9}, 12, 10, series_color(series[i], i));
    c.text({x + 18, y + 18.0 * double(i)}, series[i], 12, kBlack);
  }
}

void y_axis(Canvas& c, YRange yr, double left, double right, double top, double bottom) {
  const double span = yr.hi - yr.lo;
  const double step = span <= 10 ? 2 : span <= 20 ? 5 : span <= 50 ? 10 : 20;
  for (double v = yr.lo; v <= yr.hi + 1e-9; v += step) {
    const double y = bottom - (bottom - top) * (v - yr.lo) / span;
    c.line({left, y}, {right, y}, kGrey, 1);
    c.text({left - 6, y + 4}, fmt("%.0f", v), 11, kDark, Anchor::end);
  }
  c.line({left, top}, {left, bottom}, kBlack, 1);
  c.line({left, bottom}, {right, bottom}, kBlack, 1);
  c.text({left - 40, top - 12}, "accuracy (%)", 12, kBlack);
}

void save_canvas(const Canvas& c, const std::filesystem::path& stem, std::vector<std::filesystem::path>& out) {
  auto svg = stem;
  svg += ".svg";
  auto png = stem;
  png += ".png";
  write_text(svg, c.to_svg());
  write_file(png, encode_png(c.to_image()));
  out.push_back(svg);
  out.push_back(png);
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' ? ch : '_';
  return out;
}

// --------------------------------------------------------------------------

std::vector<std::filesystem::path> emit_table(const std::vector<RunRecord>& recs, const ReportOptions& o,
                                              const std::filesystem::path& dir) {
  const auto rows = ordered_values(recs, o.row_key, o);
  const auto cols = ordered_values(recs, o.column_key, o);
  const auto agg = aggregate(recs, {o.row_key, o.column_key});
  std::map<std::string, std::string> col_metric;
  for (const auto& r : recs) col_metric[label_of(r, o.column_key)] = r.metric;

  std::size_t max_n = 0, min_n = SIZE_MAX;
  for (const auto& [_, s] : agg) {
    max_n = std::max(max_n, s.n);
    min_n = std::min(min_n, s.n);
  }

  std::string md;
  if (!o.title.empty()) md += "# " + o.title + "\n\n";
  md += "| " + o.row_key + " |";
  for (const auto& c : cols) md += " " + c + " |";
  md += "\n|---|";
  for (std::size_t i = 0; i < cols.size(); ++i) md += "---|";
  md += "\n";
  if (o.per_column_metrics) {
    md += "| metric |";
    for (const auto& c : cols) md += " " + col_metric[c] + " |";
    md += "\n";
  }
  for (const auto& r : rows) {
    md += "| " + r + " |";
    for (const auto& c : cols) {
      auto it = agg.find(join({r, c}));
      md += " " + (it == agg.end() ? std::string("-") : format_cell(it->second)) + " |";
    }
    md += "\n";
  }
  md += "\nCells: mean±std of accuracy (%) over seeds; std is the population standard deviation (n = ";
  md += min_n == max_n ? std::to_string(max_n) : std::to_string(min_n) + "-" + std::to_string(max_n);
  md += " per cell).";
  if (!o.per_column_metrics) md += " Metric: " + recs.front().metric + ".";
  md += "\n";

  write_text(dir / "table.md", md);
  write_text(dir / "table.csv", stats_csv({o.row_key, o.column_key}, agg));
  return {dir / "table.md", dir / "table.csv"};
}

std::vector<std::filesystem::path> emit_line(const std::vector<RunRecord>& recs, const ReportOptions& o,
                                             const std::filesystem::path& dir) {
  const auto panels = ordered_values(recs, o.column_key, o);
  const auto series = ordered_values(recs, o.series_key, o);
  const auto xs = ordered_values(recs, o.x_key, o);
  for (const auto& x : xs)
    if (!numeric(x)) throw ValidationError("line chart x values must be numeric: '" + x + "'");
  const auto agg = aggregate(recs, {o.column_key, o.series_key, o.x_key});
  std::vector<std::filesystem::path> out;

  const double W = 640, H = 420, L = 70, R = 480, T = 50, B = 360;
  const double x0 = std::stod(xs.front()), x1 = std::stod(xs.back());
  auto xpos = [&](double x) { return x1 == x0 ? (L + R) / 2 : L + 30 + (R - L - 60) * (x - x0) / (x1 - x0); };

  for (const auto& panel : panels) {
    std::map<std::string, CellStats> sub;
    for (const auto& [k, s] : agg)
      if (k.rfind(panel + kSep, 0) == 0) sub[k] = s;
    const auto yr = y_range(sub);
    auto ypos = [&](double v) { return B - (B - T) * (v - yr.lo) / (yr.hi - yr.lo); };
    Canvas c{int(W), int(H)};
    c.text({W / 2, 24}, (o.title.empty() ? std::string() : o.title + " - ") + panel, 15, kBlack, Anchor::middle);
    y_axis(c, yr, L, R, T, B);
    for (const auto& x : xs) {
      c.line({xpos(std::stod(x)), B}, {xpos(std::stod(x)), B + 4}, kBlack);
      c.text({xpos(std::stod(x)), B + 18}, x, 11, kDark, Anchor::middle);
    }
    c.text({(L + R) / 2, B + 40}, o.x_key, 12, kBlack, Anchor::middle);
    std::vector<std::string> present;
    for (std::size_t si = 0; si < series.size(); ++si) {
      std::vector<Point> pts;
      const Rgb col = series_color(series[si], si);
      for (const auto& x : xs) {
        auto it = sub.find(join({panel, series[si], x}));
        if (it == sub.end()) continue;
        const Point p{xpos(std::stod(x)), ypos(it->second.mean)};
        pts.push_back(p);
        c.line({p.x, ypos(it->second.mean - it->second.std)}, {p.x, ypos(it->second.mean + it->second.std)}, col, 1);
      }
      if (pts.empty()) continue;
      present.push_back(series[si]);
      c.polyline(pts, col, 2);
      for (auto p : pts) c.circle(p, 3.5, col);
    }
    legend(c, present, R + 25, T + 10);
    save_canvas(c, dir / ("line_" + sanitize(panel)), out);
  }
  write_text(dir / "line.csv", stats_csv({o.column_key, o.series_key, o.x_key}, agg));
  out.push_back(dir / "line.csv");
  return out;
}

std::vector<std::filesystem::path> emit_bar(const std::vector<RunRecord>& recs, const ReportOptions& o,
                                            const std::filesystem::path& dir) {
  const auto groups = ordered_values(recs, o.column_key, o);
  const auto series = ordered_values(recs, o.series_key, o);
  const auto agg = aggregate(recs, {o.column_key, o.series_key});
  const auto yr = y_range(agg);
  const double L = 70, T = 50, B = 360;
  const double group_w = std::max(60.0, 40.0 * double(series.size()));
  const double R = L + group_w * double(groups.size());
  const double W = R + 170, H = 420;
  auto ypos = [&](double v) { return B - (B - T) * (v - yr.lo) / (yr.hi - yr.lo); };

  Canvas c{int(W), int(H)};
  c.text({W / 2, 24}, o.title.empty() ? "pipeline comparison" : o.title, 15, kBlack, Anchor::middle);
  y_axis(c, yr, L, R, T, B);
  const double bar_w = group_w * 0.8 / double(series.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = L + group_w * double(g) + group_w * 0.1;
    for (std::size_t si = 0; si < series.size(); ++si) {
      auto it = agg.find(join({groups[g], series[si]}));
      if (it == agg.end()) continue;
      const double x = gx + bar_w * double(si);
      const double top = ypos(it->second.mean);
      c.rect({x, top}, bar_w - 2, B - top, series_color(series[si], si));
      const double mid = x + (bar_w - 2) / 2;
      c.line({mid, ypos(it->second.mean - it->second.std)}, {mid, ypos(it->second.mean + it->second.std)}, kBlack, 1);
    }
    c.text({L + group_w * (double(g) + 0.5), B + 18}, groups[g], 11, kDark, Anchor::middle);
  }
  legend(c, series, R + 25, T + 10);
  std::vector<std::filesystem::path> out;
  save_canvas(c, dir / "bar", out);
  write_text(dir / "bar.csv", stats_csv({o.column_key, o.series_key}, agg));
  out.push_back(dir / "bar.csv");
  return out;
}

std::vector<std::filesystem::path> emit_radar(const std::vector<RunRecord>& recs, const ReportOptions& o,
                                              const std::filesystem::path& dir) {
  const auto spokes = ordered_values(recs, o.column_key, o);
  if (spokes.size() < 3) throw ValidationError("a radar chart needs at least three spokes");
  const auto series = ordered_values(recs, o.series_key, o);
  const auto agg = aggregate(recs, {o.column_key, o.series_key});
  double mn = 100, mx = 0;
  for (const auto& [_, s] : agg) {
    mn = std::min(mn, s.mean);
    mx = std::max(mx, s.mean);
  }
  const double rlo = std::max(0.0, std::floor(mn / 10.0) * 10.0 - 10.0);
  const double rhi = std::min(100.0, std::max(rlo + 10.0, std::ceil(mx / 10.0) * 10.0));
  const double W = 640, H = 520, cx = 260, cy = 280, Rad = 180;
  auto at = [&](std::size_t i, double v) {
    const double a = -std::numbers::pi / 2 + 2 * std::numbers::pi * double(i) / double(spokes.size());
    const double r = Rad * std::clamp((v - rlo) / (rhi - rlo), 0.0, 1.0);
    return Point{cx + r * std::cos(a), cy + r * std::sin(a)};
  };

  Canvas c{int(W), int(H)};
  c.text({W / 2, 26}, o.title.empty() ? "per-dataset accuracy" : o.title, 15, kBlack, Anchor::middle);
  for (int ring = 1; ring <= 4; ++ring) {
    const double v = rlo + (rhi - rlo) * ring / 4.0;
    std::vector<Point> pts;
    for (std::size_t i = 0; i < spokes.size(); ++i) pts.push_back(at(i, v));
    c.polyline(pts, kGrey, 1, true);
    c.text({cx + 3, at(0, v).y - 2}, fmt("%.0f", v), 10, kDark);
  }
  for (std::size_t i = 0; i < spokes.size(); ++i) {
    c.line({cx, cy}, at(i, rhi), kGrey, 1);
    const Point lp = at(i, rhi);
    const double dx = lp.x - cx;
    const Anchor anchor = std::abs(dx) < 1 ? Anchor::middle : dx > 0 ? Anchor::start : Anchor::end;
    c.text({lp.x + (dx > 1 ? 6 : dx < -1 ? -6 : 0), lp.y + (lp.y < cy ? -6 : 14)}, spokes[i], 12, kBlack, anchor);
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    std::vector<Point> pts;
    for (std::size_t i = 0; i < spokes.size(); ++i) {
      auto it = agg.find(join({spokes[i], series[si]}));
      pts.push_back(at(i, it == agg.end() ? rlo : it->second.mean));
    }
    const Rgb col = series_color(series[si], si);
    c.polygon(pts, col, 0.15);
    c.polyline(pts, col, 2, true);
  }
  legend(c, series, 500, 70);
  std::vector<std::filesystem::path> out;
  save_canvas(c, dir / "radar", out);
  write_text(dir / "radar.csv", stats_csv({o.column_key, o.series_key}, agg));
  out.push_back(dir / "radar.csv");
  return out;
}

std::vector<std::filesystem::path> emit_contact_sheet(const ReportOptions& o, const std::filesystem::path& dir) {
  if (o.contact_columns.empty()) throw ValidationError("a contact sheet needs at least one labelled manifest");
  const auto& ds = o.contact_columns.front().source.manifest.dataset();
  const std::size_t rows = std::min(o.contact_max_classes, ds.n_classes());
  const int t = o.contact_thumb, gap = 2, label_w = 140, header_h = 34;
  const int col_w = int(o.contact_per_cell) * (t + gap) + 12;
  const int W = label_w + col_w * int(o.contact_columns.size());
  const int H = header_h + int(rows) * (t + gap + 6) + 6;
  cv::Mat mat(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto font = cv::FONT_HERSHEY_SIMPLEX;

  for (std::size_t ci = 0; ci < o.contact_columns.size(); ++ci) {
    const auto& col = o.contact_columns[ci];
    const int x0 = label_w + int(ci) * col_w;
    cv::putText(mat, col.label, {x0, 22}, font, 0.5, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t placed = 0;
      const int y0 = header_h + int(r) * (t + gap + 6);
      for (const auto& rec : col.source.manifest.records()) {
        if (rec.class_index != r) continue;
        if (placed == o.contact_per_cell) break;
        const std::filesystem::path p = rec.path.is_absolute() ? rec.path : col.source.root / rec.path;
        const Image thumb = center_crop(resize_shorter(read_png(p), t), t);
        const int x = x0 + int(placed) * (t + gap);
        for (int yy = 0; yy < t; ++yy)
          for (int xx = 0; xx < t; ++xx)
            mat.at<cv::Vec3b>(y0 + yy, x + xx) = {thumb.at(xx, yy, 2), thumb.at(xx, yy, 1), thumb.at(xx, yy, 0)};
        ++placed;
      }
      for (; placed < o.contact_per_cell; ++placed) {
        const int x = x0 + int(placed) * (t + gap);
        cv::rectangle(mat, {x, y0}, {x + t - 1, y0 + t - 1}, cv::Scalar(220, 220, 220), cv::FILLED);
      }
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const int y0 = header_h + int(r) * (t + gap + 6);
    cv::putText(mat, ds.class_name(r).substr(0, 18), {6, y0 + t / 2 + 5}, font, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  Image img(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto& v = mat.at<cv::Vec3b>(y, x);
      img.at(x, y, 0) = v[2];
      img.at(x, y, 1) = v[1];
      img.at(x, y, 2) = v[0];
    }
  write_file(dir / "contact_sheet.png", encode_png(img));
  return {dir / "contact_sheet.png"};
}

}  // namespace

std::map<std::string, CellStats> aggregate(const std::vector<RunRecord>& records,
                                           const std::vector<std::string>& keys) {
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    if (!r.ok() || !r.final_accuracy) continue;
    std::vector<std::string> parts;
    for (const auto& k : keys) parts.push_back(label_of(r, k));
    groups[join(parts)].push_back(&r);
  }
  std::map<std::string, CellStats> out;
  for (const auto& [key, rs] : groups) {
    CellStats s;
    s.n = rs.size();
    s.metric = rs.front()->metric;
    double sum = 0;
    for (const auto* r : rs) {
      if (r->config_hash != rs.front()->config_hash) {
        std::string where;
        for (const auto& k : keys) where += (where.empty() ? "" : ", ") + k + "=" + label_of(*r, k);
        throw ValidationError("cell (" + where + ") pools different configurations; group by more keys or filter");
      }
      if (r->metric != s.metric) {
        throw ValidationError("refusing to average " + s.metric + " with " + r->metric);
      }
      sum += *r->final_accuracy * 100.0;
    }
    s.mean = sum / double(s.n);
    double var = 0;
    for (const auto* r : rs) var += (*r->final_accuracy * 100.0 - s.mean) * (*r->final_accuracy * 100.0 - s.mean);
    s.std = std::sqrt(var / double(s.n));
    out[key] = s;
  }
  return out;
}

std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& records,
                                               const ReportOptions& options,
                                               const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (options.kind == ReportKind::contact_sheet) return emit_contact_sheet(options, out_dir);

  const auto recs = selected_records(records, options);
  if (recs.empty()) throw ValidationError("no completed run records to report");
  check_metrics(recs, options.column_key, options.per_column_metrics);
  switch (options.kind) {
    case ReportKind::table: return emit_table(recs, options, out_dir);
    case ReportKind::line: return emit_line(recs, options, out_dir);
    case ReportKind::bar: return emit_bar(recs, options, out_dir);
    case ReportKind::radar: return emit_radar(recs, options, out_dir);
    case ReportKind::contact_sheet: break;
  }
  return {};
}

}  // namespace bt::harness
