#pragma once

#include <string>
#include <vector>

#include "riskid/episode_io.hpp"

namespace riskid::plot {

// Bars of per-agent continue confidence, a line at the unmasked baseline and
// a star at the attention-adjusted score of each ranked agent.
std::string risk_chart(const Json& inference);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string line_chart(const std::string& title, const std::vector<Series>& series);

// Columns of a CSV with a header row; the first column becomes x.
std::vector<Series> series_from_csv(const std::string& text);

}  // namespace riskid::plot
