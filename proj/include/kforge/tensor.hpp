#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace kforge {

enum class DType : std::uint8_t { f32 = 0, f16 = 1 };

std::string_view to_string(DType dtype);
DType parse_dtype(std::string_view name);
std::size_t dtype_size(DType dtype);

using Shape = std::vector<std::int64_t>;

std::string format_shape(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major tensor of f32 values or raw f16 payloads.
///
/// The element buffer always matches the shape; extents are all >= 1 and the
/// shape has at least one axis. Tensors are plain values: copying copies data.
/// Non-finite elements are representable so that faulty candidate outputs can
/// be carried to the comparison stage.
class Tensor {
public:
    Tensor(Shape shape, std::vector<float> values);
    Tensor(Shape shape, std::vector<std::uint16_t> half_bits);

    /// Zero-filled tensor.
    static Tensor zeros(DType dtype, Shape shape);
    /// Builds a tensor of `dtype` from f32 values, rounding to nearest-even for f16.
    static Tensor from_f32(DType dtype, Shape shape, std::vector<float> values);

    DType dtype() const noexcept { return dtype_; }
    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept;
    std::size_t byte_size() const noexcept { return size() * dtype_size(dtype_); }

    /// Element `i` widened to f32.
    float get(std::size_t i) const;
    /// Stores `value` at `i`, rounding for f16 tensors.
    void set(std::size_t i, float value);

    std::vector<float> to_f32() const;

    std::span<const float> f32() const;
    std::span<float> f32();
    std::span<const std::uint16_t> f16_bits() const;
    std::span<std::uint16_t> f16_bits();

    /// Raw little-endian element bytes (host order is assumed little-endian).
    std::span<const std::byte> bytes() const;

    /// Bitwise equality of dtype, shape and every element payload.
    friend bool operator==(const Tensor& a, const Tensor& b);

private:
    DType dtype_;
    Shape shape_;
    std::variant<std::vector<float>, std::vector<std::uint16_t>> data_;
};

// Binary tensor format: "KFT1", u8 dtype code, u32 ndim, u64 extents, raw data.
// All integers and elements are little-endian.
void write_tensor(const Tensor& tensor, std::ostream& out);
Tensor read_tensor(std::istream& in);

/// Writes via a temporary file in the same directory followed by a rename.
void write_tensor_file(const Tensor& tensor, const std::filesystem::path& path);
/// Reads a file holding exactly one tensor; trailing bytes are a format error.
Tensor read_tensor_file(const std::filesystem::path& path);

} // namespace kforge
