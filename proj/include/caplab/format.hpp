#pragma once

#include <string>

namespace caplab {

// Shortest round-trippable decimal form; keeps CSV output byte-stable.
std::string format_real(double value);

}  // namespace caplab
