#pragma once

#include <string>

namespace riskid {

// Fixed-point rendering used by every CSV writer so outputs are byte-stable.
std::string fixed(double value, int digits = 6);

// Shortest round-trip rendering for values that must reload exactly.
std::string exact(double value);

}  // namespace riskid
