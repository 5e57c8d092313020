#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "riskid/errors.hpp"
#include "riskid/text_format.hpp"

namespace riskid::plot {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string px(double v) { return fixed(v, 1); }

std::string header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(kWidth) << "\" height=\"" << px(kHeight)
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << px(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title
    << "</text>\n";
  return s.str();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::string risk_chart(const Json& inference) {
  if (!inference.contains("scores") || inference.at("scores").empty()) {
    throw InvalidInput("plot: inference has no per-agent scores");
  }
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& [id, v] : inference.at("scores").items()) bars.emplace_back(id, v.get<double>());
  std::map<std::string, double> adjusted;
  if (inference.contains("ranking")) {
    for (const auto& r : inference.at("ranking")) {
      adjusted[std::to_string(r.at("id").get<int>())] = r.at("s_risk").get<double>();
    }
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto y_of = [&](double v) { return kTop + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream s;
  s << header("Per-agent risk");
  s << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(kTop) << "\" x2=\"" << px(kLeft) << "\" y2=\""
    << px(kTop + plot_h) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(kTop + plot_h) << "\" x2=\"" << px(kLeft + plot_w)
    << "\" y2=\"" << px(kTop + plot_h) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    s << "<text x=\"" << px(kLeft - 6) << "\" y=\"" << px(y_of(v) + 4) << "\" text-anchor=\"end\">" << fixed(v, 2)
      << "</text>\n";
  }
  const double slot = plot_w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& [id, v] = bars[i];
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    const double w = slot * 0.7;
    s << "<rect class=\"bar\" x=\"" << px(x) << "\" y=\"" << px(y_of(v)) << "\" width=\"" << px(w)
      << "\" height=\"" << px(kTop + plot_h - y_of(v)) << "\" fill=\"" << kPalette[i % 10] << "\"/>\n";
    s << "<text x=\"" << px(x + w / 2) << "\" y=\"" << px(kTop + plot_h + 16) << "\" text-anchor=\"middle\">" << id
      << "</text>\n";
    auto it = adjusted.find(id);
    if (it != adjusted.end()) {
      s << "<text class=\"adjusted\" x=\"" << px(x + w / 2) << "\" y=\"" << px(y_of(it->second) + 5)
        << "\" text-anchor=\"middle\" font-size=\"16\">&#9733;</text>\n";
    }
  }
  if (inference.contains("baseline")) {
    const double b = inference.at("baseline").at(0).get<double>();
    s << "<line class=\"baseline\" x1=\"" << px(kLeft) << "\" y1=\"" << px(y_of(b)) << "\" x2=\""
      << px(kLeft + plot_w) << "\" y2=\"" << px(y_of(b)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  s << "<text x=\"" << px(kLeft + plot_w / 2) << "\" y=\"" << px(kHeight - 10)
    << "\" text-anchor=\"middle\">track id</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string line_chart(const std::string& title, const std::vector<Series>& series) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& sr : series) {
    for (double v : sr.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : sr.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw InvalidInput("plot: no data points");
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double plot_w = kWidth - kLeft - kRight - 110.0;
  const double plot_h = kHeight - kTop - kBottom;
  auto xs = [&](double v) { return kLeft + plot_w * (v - x0) / (x1 - x0); };
  auto ys = [&](double v) { return kTop + plot_h * (1.0 - (v - y0) / (y1 - y0)); };

  std::ostringstream s;
  s << header(title);
  s << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(kTop) << "\" x2=\"" << px(kLeft) << "\" y2=\""
    << px(kTop + plot_h) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(kTop + plot_h) << "\" x2=\"" << px(kLeft + plot_w)
    << "\" y2=\"" << px(kTop + plot_h) << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << px(kLeft - 6) << "\" y=\"" << px(ys(y1) + 4) << "\" text-anchor=\"end\">" << fixed(y1, 3)
    << "</text>\n";
  s << "<text x=\"" << px(kLeft - 6) << "\" y=\"" << px(ys(y0) + 4) << "\" text-anchor=\"end\">" << fixed(y0, 3)
    << "</text>\n";
  s << "<text x=\"" << px(kLeft) << "\" y=\"" << px(kTop + plot_h + 16) << "\">" << fixed(x0, 0) << "</text>\n";
  s << "<text x=\"" << px(kLeft + plot_w) << "\" y=\"" << px(kTop + plot_h + 16) << "\" text-anchor=\"end\">"
    << fixed(x1, 0) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& sr = series[i];
    s << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << kPalette[i % 10] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < sr.x.size(); ++k) s << (k ? " " : "") << px(xs(sr.x[k])) << ',' << px(ys(sr.y[k]));
    s << "\"/>\n";
    const double ly = kTop + 14.0 + 18.0 * static_cast<double>(i);
    s << "<line x1=\"" << px(kLeft + plot_w + 12) << "\" y1=\"" << px(ly) << "\" x2=\"" << px(kLeft + plot_w + 30)
      << "\" y2=\"" << px(ly) << "\" stroke=\"" << kPalette[i % 10] << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << px(kLeft + plot_w + 34) << "\" y=\"" << px(ly + 4) << "\">" << sr.name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<Series> series_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("plot: empty CSV");
  const std::vector<std::string> names = split_line(line);
  if (names.size() < 2) throw InvalidInput("plot: CSV needs an x column and at least one series");
  std::vector<Series> out(names.size() - 1);
  for (std::size_t c = 1; c < names.size(); ++c) out[c - 1].name = names[c];
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != names.size()) throw ParseError("line " + std::to_string(row) + ": expected " +
                                                       std::to_string(names.size()) + " columns");
    try {
      const double x = std::stod(cells[0]);
      for (std::size_t c = 1; c < cells.size(); ++c) {
        out[c - 1].x.push_back(x);
        out[c - 1].y.push_back(std::stod(cells[c]));
      }
    } catch (const std::logic_error&) {
      throw ParseError("line " + std::to_string(row) + ": non-numeric cell");
    }
  }
  if (out.front().x.empty()) throw InvalidInput("plot: CSV has no data rows");
  return out;
}

}  // namespace riskid::plot
