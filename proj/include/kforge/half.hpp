#pragma once

#include <cstdint>

namespace kforge {

// IEEE 754 binary16 <-> binary32 conversion. Rounding is to nearest, ties to
// even; NaN payloads keep their top mantissa bits and stay quiet.
float half_to_float(std::uint16_t bits) noexcept;
std::uint16_t float_to_half(float value) noexcept;

/// Round an f32 value through f16 and back.
inline float round_to_half(float value) noexcept { return half_to_float(float_to_half(value)); }

} // namespace kforge
