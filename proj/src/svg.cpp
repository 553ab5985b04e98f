#include "marlrr/svg.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "marlrr/errors.hpp"

namespace marlrr {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 70;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
  std::string s = fmt::format("{:.2f}", v);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string tick_label(double v) {
  if (std::abs(v) < 1e-12) return "0";
  return fmt::format("{:g}", v);
}

struct Frame {
  double x_lo, x_hi, y_lo, y_hi;
  double px(double x) const {
    return kLeft + (x - x_lo) / (x_hi - x_lo) * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kHeight - kBottom - (y - y_lo) / (y_hi - y_lo) * (kHeight - kTop - kBottom);
  }
};

void widen(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    const double pad = std::max(1.0, std::abs(lo)) * 0.5;
    lo -= pad;
    hi += pad;
  }
}

std::string header(const std::string& title) {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{3}</text>\n",
      kWidth, kHeight, num((kWidth - kRight + kLeft) / 2), xml_escape(title));
}

std::string axes(const Frame& f, const std::vector<double>& xt, const std::vector<double>& yt,
                 const std::string& x_label, const std::string& y_label) {
  std::string out;
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  out += fmt::format("<g stroke=\"black\" stroke-width=\"1\">\n<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>\n"
                     "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{3}\"/>\n",
                     num(x0), num(y0), num(x1), num(y1));
  for (double t : xt) out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\"/>\n", num(f.px(t)), num(y0), num(y0 + 5));
  for (double t : yt) out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>\n", num(x0 - 5), num(f.py(t)), num(x0));
  out += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (double t : xt) {
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(f.px(t)), num(y0 + 18),
                       tick_label(t));
  }
  for (double t : yt) {
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", num(x0 - 8), num(f.py(t) + 4),
                       tick_label(t));
  }
  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
                     num((x0 + x1) / 2), num(kHeight - 18), xml_escape(x_label));
  out += fmt::format(
      "<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {0})\">{1}</text>\n",
      num((y0 + y1) / 2), xml_escape(y_label));
  out += "</g>\n";
  return out;
}

}  // namespace

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

MeanSe mean_se(const std::vector<double>& samples) {
  if (samples.empty()) throw ContractViolation("mean_se: no samples");
  MeanSe r;
  for (double v : samples) r.mean += v;
  r.mean /= static_cast<double>(samples.size());
  if (samples.size() < 2) return r;
  double ss = 0.0;
  for (double v : samples) ss += (v - r.mean) * (v - r.mean);
  const double n = static_cast<double>(samples.size());
  r.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return r;
}

std::vector<double> nice_ticks(double lo, double hi, int target) {
  widen(lo, hi);
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + step * 1e-9; t += step) {
    ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  }
  return ticks;
}

std::string line_chart_svg(const LineChart& chart) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.mean.size() || s.x.size() != s.se.size()) {
      throw DimensionError("line_chart_svg: series '" + s.label + "' has ragged columns");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.mean[i] - s.se[i]);
      y_hi = std::max(y_hi, s.mean[i] + s.se[i]);
    }
  }
  widen(x_lo, x_hi);
  widen(y_lo, y_hi);
  const auto xt = nice_ticks(x_lo, x_hi);
  const auto yt = nice_ticks(y_lo, y_hi);
  const Frame f{std::min(x_lo, xt.front()), std::max(x_hi, xt.back()), std::min(y_lo, yt.front()),
                std::max(y_hi, yt.back())};

  std::string out = header(chart.title);
  out += axes(f, xt, yt, chart.x_label, chart.y_label);
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    std::string band, line;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      band += fmt::format("{}{},{}", i ? " " : "", num(f.px(s.x[i])), num(f.py(s.mean[i] + s.se[i])));
    }
    for (std::size_t i = s.x.size(); i-- > 0;) {
      band += fmt::format(" {},{}", num(f.px(s.x[i])), num(f.py(s.mean[i] - s.se[i])));
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      line += fmt::format("{}{},{}", i ? " " : "", num(f.px(s.x[i])), num(f.py(s.mean[i])));
    }
    out += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", band, color(k));
    out += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n", line, color(k));
  }
  out += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(k);
    const double x = kWidth - kRight + 15;
    out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"3\"/>\n", num(x),
                       num(y), num(x + 22), num(y), color(k));
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(x + 28), num(y + 4),
                       xml_escape(chart.series[k].label));
  }
  out += "</g>\n</svg>\n";
  return out;
}

std::string bar_chart_svg(const BarChart& chart) {
  const std::size_t G = chart.groups.size();
  const std::size_t K = chart.bar_labels.size();
  if (chart.values.size() != G) throw DimensionError("bar_chart_svg: one value row per group required");
  for (const auto& row : chart.values)
    if (row.size() != K) throw DimensionError("bar_chart_svg: one value per bar label required");
  const bool has_err = !chart.errors.empty();
  if (has_err && chart.errors.size() != G) throw DimensionError("bar_chart_svg: errors shape mismatch");

  double y_lo = 0.0, y_hi = 0.0;
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t k = 0; k < K; ++k) {
      const double e = has_err ? chart.errors[g].at(k) : 0.0;
      y_lo = std::min(y_lo, chart.values[g][k] - e);
      y_hi = std::max(y_hi, chart.values[g][k] + e);
    }
  widen(y_lo, y_hi);
  const auto yt = nice_ticks(y_lo, y_hi);
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(G, 1)), std::min(y_lo, yt.front()),
                std::max(y_hi, yt.back())};

  std::string out = header(chart.title);
  out += axes(f, {}, yt, "", chart.y_label);
  const double group_w = f.px(1.0) - f.px(0.0);
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(K, 1));
  for (std::size_t g = 0; g < G; ++g) {
    const double gx = f.px(static_cast<double>(g)) + group_w * 0.1;
    for (std::size_t k = 0; k < K; ++k) {
      const double v = chart.values[g][k];
      const double top = f.py(std::max(v, 0.0));
      const double bottom = f.py(std::min(v, 0.0));
      const double x = gx + bar_w * static_cast<double>(k);
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", num(x), num(top),
                         num(bar_w * 0.9), num(bottom - top), color(k));
      if (has_err) {
        const double e = chart.errors[g][k];
        const double cx = x + bar_w * 0.45;
        out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", num(cx),
                           num(f.py(v - e)), num(f.py(v + e)));
      }
    }
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
        num(f.px(static_cast<double>(g) + 0.5)), num(kHeight - kBottom + 18), xml_escape(chart.groups[g]));
  }
  out += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t k = 0; k < K; ++k) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(k);
    const double x = kWidth - kRight + 15;
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"10\" fill=\"{}\"/>\n", num(x), num(y - 6),
                       color(k));
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(x + 20), num(y + 4),
                       xml_escape(chart.bar_labels[k]));
  }
  out += "</g>\n</svg>\n";
  return out;
}

}  // namespace marlrr
