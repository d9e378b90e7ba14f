#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace oiqa {

/// Sinusoidal code of a unit vector: for each axis value v and frequency
/// index i in [0, n), the pair sin(v / 10000^(i/(n-1))), cos(...). Blocks are
/// ordered x, y, z with interleaved sin/cos, giving 6n entries.
///
/// Throws DomainError for n < 2 or when |xyz| deviates from 1 by more than 1e-9.
std::vector<double> encode_position(const std::array<double, 3>& xyz, std::size_t n);

/// Elementwise sum; throws ConfigError on a length mismatch.
std::vector<double> add_position(const std::vector<double>& embedding, const std::vector<double>& code);

inline constexpr std::size_t kDefaultPeFrequencies = 128;

}  // namespace oiqa
