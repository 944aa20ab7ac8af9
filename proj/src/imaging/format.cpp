#include "caplab/format.hpp"

#include <array>
#include <charconv>

namespace caplab {

std::string format_real(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

}  // namespace caplab
