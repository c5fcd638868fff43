#include "kforge/half.hpp"

#include <bit>
#include <cmath>

namespace kforge {

float half_to_float(std::uint16_t bits) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
    const std::uint32_t exponent = (bits >> 10) & 0x1fu;
    const std::uint32_t mantissa = bits & 0x3ffu;

    if (exponent == 0) {
        // Zero or subnormal: mantissa * 2^-24, exact in f32.
        const float magnitude = std::ldexp(static_cast<float>(mantissa), -24);
        return sign ? -magnitude : magnitude;
    }
    if (exponent == 0x1f) {
        return std::bit_cast<float>(sign | 0x7f800000u | (mantissa << 13));
    }
    return std::bit_cast<float>(sign | ((exponent + 112u) << 23) | (mantissa << 13));
}

std::uint16_t float_to_half(float value) noexcept {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
    const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
    const std::uint32_t exponent = (x >> 23) & 0xffu;
    const std::uint32_t mantissa = x & 0x7fffffu;

    if (exponent == 0xff) {
        if (mantissa != 0) {
            return static_cast<std::uint16_t>(sign | 0x7e00u | (mantissa >> 13));
        }
        return static_cast<std::uint16_t>(sign | 0x7c00u);
    }

    const int e = static_cast<int>(exponent) - 127;
    if (e > 15) {
        return static_cast<std::uint16_t>(sign | 0x7c00u);
    }
    if (e >= -14) {
        std::uint32_t h = (static_cast<std::uint32_t>(e + 15) << 10) | (mantissa >> 13);
        const std::uint32_t rest = mantissa & 0x1fffu;
        if (rest > 0x1000u || (rest == 0x1000u && (h & 1u))) {
            ++h; // a carry out of the mantissa bumps the exponent, up to inf
        }
        return static_cast<std::uint16_t>(sign | h);
    }
    if (e >= -25) {
        const std::uint32_t full = mantissa | 0x800000u;
        const int shift = -e - 1;
        std::uint32_t h = full >> shift;
        const std::uint32_t rest = full & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rest > halfway || (rest == halfway && (h & 1u))) {
            ++h;
        }
        return static_cast<std::uint16_t>(sign | h);
    }
    return sign;
}

} // namespace kforge
