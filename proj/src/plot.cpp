#include "perfvox/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"

namespace perfvox {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 130.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

std::string num(double v) {
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

std::string header(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                  num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">" + escape(title) + "</text>\n";
  return s;
}

std::string line(double x1, double y1, double x2, double y2, const std::string& style) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) + "\" " +
         style + "/>\n";
}

std::string text(double x, double y, const std::string& s, const std::string& anchor, int size = 11) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor +
         "\" font-family=\"sans-serif\" font-size=\"" + std::to_string(size) + "\">" + escape(s) + "</text>\n";
}

// Five evenly spaced ticks over [lo, hi].
std::string y_axis(double lo, double hi, const std::string& label) {
  const double plot_h = kHeight - kTop - kBottom;
  std::string s = line(kLeft, kTop, kLeft, kHeight - kBottom, "stroke=\"black\"");
  s += line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, "stroke=\"black\"");
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = kHeight - kBottom - plot_h * i / 4.0;
    s += line(kLeft - 4, y, kLeft, y, "stroke=\"black\"");
    s += text(kLeft - 7, y + 4, num(v), "end");
  }
  s += "<text x=\"18\" y=\"" + num(kTop + plot_h / 2) + "\" transform=\"rotate(-90 18 " + num(kTop + plot_h / 2) +
       ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(label) + "</text>\n";
  return s;
}

}  // namespace

std::string trend_svg(const std::vector<NormativeCell>& cells, const std::string& title) {
  if (cells.empty()) throw Error(ErrorCode::Parse, "trend data is empty");
  std::vector<AgeBin> bins;
  for (const auto& c : cells) {
    if (std::find(bins.begin(), bins.end(), c.bin) == bins.end()) bins.push_back(c.bin);
  }
  std::sort(bins.begin(), bins.end(), [](const AgeBin& a, const AgeBin& b) { return a.lo < b.lo; });
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : cells) {
    if (c.n == 0) continue;
    lo = std::min(lo, c.mu - c.sigma);
    hi = std::max(hi, c.mu + c.sigma);
  }
  if (!std::isfinite(lo)) throw Error(ErrorCode::Parse, "trend data has no populated cells");
  const double pad = hi > lo ? 0.05 * (hi - lo) : 1.0;
  lo -= pad;
  hi += pad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](std::size_t b) { return kLeft + plot_w * (static_cast<double>(b) + 0.5) / static_cast<double>(bins.size()); };
  auto py = [&](double v) { return kHeight - kBottom - plot_h * (v - lo) / (hi - lo); };

  std::string s = header(title);
  s += y_axis(lo, hi, "mean CBF");
  for (std::size_t b = 0; b < bins.size(); ++b) {
    s += line(px(b), kHeight - kBottom, px(b), kHeight - kBottom + 4, "stroke=\"black\"");
    s += text(px(b), kHeight - kBottom + 18, bins[b].label(), "middle");
  }
  s += text(kLeft + plot_w / 2, kHeight - 16, "age bin (years)", "middle", 12);

  struct Series {
    Sex sex;
    const char* color;
    const char* name;
    double shift;
  };
  const Series series[] = {{Sex::F, "#c0392b", "Female", -4.0}, {Sex::M, "#2471a3", "Male", 4.0}};
  int legend = 0;
  for (const auto& ser : series) {
    std::string points;
    std::string marks;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      for (const auto& c : cells) {
        if (c.sex != ser.sex || c.bin != bins[b] || c.n == 0) continue;
        const double x = px(b) + ser.shift;
        if (!points.empty()) points += ' ';
        points += num(x) + "," + num(py(c.mu));
        const std::string stroke = std::string("stroke=\"") + ser.color + "\"";
        marks += line(x, py(c.mu - c.sigma), x, py(c.mu + c.sigma), stroke);
        marks += line(x - 4, py(c.mu - c.sigma), x + 4, py(c.mu - c.sigma), stroke);
        marks += line(x - 4, py(c.mu + c.sigma), x + 4, py(c.mu + c.sigma), stroke);
        marks += "<circle cx=\"" + num(x) + "\" cy=\"" + num(py(c.mu)) + "\" r=\"3.5\" fill=\"" + ser.color + "\"/>\n";
      }
    }
    if (points.empty()) continue;
    s += "<g class=\"series\" data-sex=\"" + std::string(to_string(ser.sex)) + "\">\n";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(ser.color) + "\" stroke-width=\"2\" points=\"" + points +
         "\"/>\n" + marks + "</g>\n";
    const double ly = kTop + 10 + 20.0 * legend++;
    s += line(kWidth - kRight + 15, ly, kWidth - kRight + 40, ly,
              std::string("stroke=\"") + ser.color + "\" stroke-width=\"2\"");
    s += text(kWidth - kRight + 46, ly + 4, ser.name, "start");
  }
  return s + "</svg>\n";
}

std::vector<ClusterPValue> stats_from_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id = t.column("cluster_id"), p = t.column("p_raw"), sig = t.column("significant");
  if (t.rows.empty()) throw Error(ErrorCode::Parse, path.string() + ": no data rows");
  std::vector<ClusterPValue> out;
  for (const auto& r : t.rows) {
    out.push_back({static_cast<int>(parse_int(r[id], "cluster_id")), parse_double(r[p], "p_raw"), r[sig] == "1"});
  }
  return out;
}

std::string stats_svg(const std::vector<ClusterPValue>& rows, double alpha) {
  if (rows.empty()) throw Error(ErrorCode::Parse, "stats data is empty");
  const double threshold = -std::log10(alpha / static_cast<double>(rows.size()));
  auto score = [](double p) { return -std::log10(std::max(p, 1e-300)); };
  double hi = threshold;
  for (const auto& r : rows) hi = std::max(hi, score(r.p_raw));
  hi *= 1.05;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double bar = plot_w / static_cast<double>(rows.size());
  auto py = [&](double v) { return kHeight - kBottom - plot_h * v / hi; };

  std::string s = header("Per-cluster sex difference");
  s += y_axis(0.0, hi, "-log10 p");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = kLeft + bar * static_cast<double>(i);
    const double y = py(score(rows[i].p_raw));
    s += "<rect x=\"" + num(x + 0.1 * bar) + "\" y=\"" + num(y) + "\" width=\"" + num(0.8 * bar) + "\" height=\"" +
         num(kHeight - kBottom - y) + "\" fill=\"" + (rows[i].significant ? "#c0392b" : "#95a5a6") + "\"/>\n";
  }
  s += line(kLeft, py(threshold), kWidth - kRight, py(threshold), "stroke=\"black\" stroke-dasharray=\"5,4\"");
  s += text(kWidth - kRight + 5, py(threshold) + 4, "Bonferroni", "start");
  s += text(kLeft + plot_w / 2, kHeight - 16, "cluster (seed-grid order)", "middle", 12);
  return s + "</svg>\n";
}

std::string plot_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (!t.header.empty() && t.header[0] == "bin_lo") return trend_svg(trend_from_csv(path));
  if (!t.header.empty() && t.header[0] == "cluster_id") return stats_svg(stats_from_csv(path));
  throw Error(ErrorCode::Parse, path.string() + ": not a trend or stats CSV");
}

}  // namespace perfvox
