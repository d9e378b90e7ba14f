#include "oiqa/positional_encoding.hpp"

#include <cmath>

#include "oiqa/error.hpp"

namespace oiqa {

std::vector<double> encode_position(const std::array<double, 3>& xyz, std::size_t n) {
  if (n < 2) throw DomainError("encode_position: need at least 2 frequencies per axis");
  const double norm = std::sqrt(xyz[0] * xyz[0] + xyz[1] * xyz[1] + xyz[2] * xyz[2]);
  if (!(std::abs(norm - 1.0) <= 1e-9)) {
    throw DomainError("encode_position: expected a unit vector, got norm " + std::to_string(norm));
  }
  std::vector<double> code;
  code.reserve(6 * n);
  for (double v : xyz) {
    for (std::size_t i = 0; i < n; ++i) {
      const double arg = v / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(n - 1));
      code.push_back(std::sin(arg));
      code.push_back(std::cos(arg));
    }
  }
  return code;
}

std::vector<double> add_position(const std::vector<double>& embedding, const std::vector<double>& code) {
  if (embedding.size() != code.size()) {
    throw ConfigError("add_position: embedding has " + std::to_string(embedding.size()) +
                      " entries but the position code has " + std::to_string(code.size()));
  }
  std::vector<double> out(embedding.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = embedding[i] + code[i];
  return out;
}

}  // namespace oiqa
