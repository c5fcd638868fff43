#include "kforge/tensor.hpp"

#include "kforge/error.hpp"
#include "kforge/half.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace kforge {

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are exchanged as host-order little-endian bytes");

namespace {

constexpr std::array<char, 4> kMagic{'K', 'F', 'T', '1'};
constexpr std::uint32_t kMaxRank = 64;

void check_shape(const Shape& shape) {
    if (shape.empty()) {
        throw SignatureError("tensor shape must have at least one axis");
    }
    for (auto extent : shape) {
        if (extent < 1) {
            throw SignatureError("tensor extent must be >= 1, got shape " + format_shape(shape));
        }
    }
}

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> buf{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu);
    }
    out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(T)> buf{};
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
        throw FormatError(std::string("truncated tensor header while reading ") + what);
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    return static_cast<T>(v);
}

} // namespace

std::string_view to_string(DType dtype) {
    switch (dtype) {
    case DType::f32:
        return "f32";
    case DType::f16:
        return "f16";
    }
    return "?";
}

DType parse_dtype(std::string_view name) {
    if (name == "f32") {
        return DType::f32;
    }
    if (name == "f16") {
        return DType::f16;
    }
    throw SignatureError("unknown dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(DType dtype) { return dtype == DType::f32 ? 4 : 2; }

std::string format_shape(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? ", " : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) {
        if (extent < 0) {
            throw SignatureError("negative extent in shape " + format_shape(shape));
        }
        const auto e = static_cast<std::size_t>(extent);
        if (e != 0 && n > std::numeric_limits<std::size_t>::max() / e) {
            throw SignatureError("element count overflows for shape " + format_shape(shape));
        }
        n *= e;
    }
    return n;
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : dtype_(DType::f32), shape_(std::move(shape)), data_(std::move(values)) {
    check_shape(shape_);
    if (element_count(shape_) != std::get<0>(data_).size()) {
        throw SignatureError("f32 buffer of " + std::to_string(std::get<0>(data_).size()) +
                             " elements does not match shape " + format_shape(shape_));
    }
}

Tensor::Tensor(Shape shape, std::vector<std::uint16_t> half_bits)
    : dtype_(DType::f16), shape_(std::move(shape)), data_(std::move(half_bits)) {
    check_shape(shape_);
    if (element_count(shape_) != std::get<1>(data_).size()) {
        throw SignatureError("f16 buffer of " + std::to_string(std::get<1>(data_).size()) +
                             " elements does not match shape " + format_shape(shape_));
    }
}

Tensor Tensor::zeros(DType dtype, Shape shape) {
    check_shape(shape);
    const auto n = element_count(shape);
    if (dtype == DType::f32) {
        return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
    }
    return Tensor(std::move(shape), std::vector<std::uint16_t>(n, 0));
}

Tensor Tensor::from_f32(DType dtype, Shape shape, std::vector<float> values) {
    if (dtype == DType::f32) {
        return Tensor(std::move(shape), std::move(values));
    }
    std::vector<std::uint16_t> bits(values.size());
    std::transform(values.begin(), values.end(), bits.begin(), float_to_half);
    return Tensor(std::move(shape), std::move(bits));
}

std::size_t Tensor::size() const noexcept {
    return std::visit([](const auto& v) { return v.size(); }, data_);
}

float Tensor::get(std::size_t i) const {
    if (dtype_ == DType::f32) {
        return std::get<0>(data_).at(i);
    }
    return half_to_float(std::get<1>(data_).at(i));
}

void Tensor::set(std::size_t i, float value) {
    if (dtype_ == DType::f32) {
        std::get<0>(data_).at(i) = value;
    } else {
        std::get<1>(data_).at(i) = float_to_half(value);
    }
}

std::vector<float> Tensor::to_f32() const {
    if (dtype_ == DType::f32) {
        return std::get<0>(data_);
    }
    const auto& bits = std::get<1>(data_);
    std::vector<float> out(bits.size());
    std::transform(bits.begin(), bits.end(), out.begin(), half_to_float);
    return out;
}

std::span<const float> Tensor::f32() const {
    if (dtype_ != DType::f32) {
        throw SignatureError("tensor is f16, f32 view requested");
    }
    return std::get<0>(data_);
}

std::span<float> Tensor::f32() {
    if (dtype_ != DType::f32) {
        throw SignatureError("tensor is f16, f32 view requested");
    }
    return std::get<0>(data_);
}

std::span<const std::uint16_t> Tensor::f16_bits() const {
    if (dtype_ != DType::f16) {
        throw SignatureError("tensor is f32, f16 view requested");
    }
    return std::get<1>(data_);
}

std::span<std::uint16_t> Tensor::f16_bits() {
    if (dtype_ != DType::f16) {
        throw SignatureError("tensor is f32, f16 view requested");
    }
    return std::get<1>(data_);
}

std::span<const std::byte> Tensor::bytes() const {
    return std::visit([](const auto& v) { return std::as_bytes(std::span(v)); }, data_);
}

bool operator==(const Tensor& a, const Tensor& b) {
    if (a.dtype_ != b.dtype_ || a.shape_ != b.shape_) {
        return false;
    }
    const auto ab = a.bytes();
    const auto bb = b.bytes();
    return ab.size() == bb.size() && std::memcmp(ab.data(), bb.data(), ab.size()) == 0;
}

void write_tensor(const Tensor& tensor, std::ostream& out) {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.dtype()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape().size()));
    for (auto extent : tensor.shape()) {
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(extent));
    }
    const auto payload = tensor.bytes();
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw FormatError("failed to write tensor payload");
    }
}

Tensor read_tensor(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 4 || magic != kMagic) {
        throw FormatError("bad magic: not a KFT1 tensor stream");
    }
    const auto code = get_le<std::uint8_t>(in, "dtype");
    if (code > 1) {
        throw FormatError("unknown dtype code " + std::to_string(code));
    }
    const auto dtype = static_cast<DType>(code);
    const auto ndim = get_le<std::uint32_t>(in, "ndim");
    if (ndim == 0 || ndim > kMaxRank) {
        throw FormatError("invalid rank " + std::to_string(ndim));
    }
    Shape shape(ndim);
    for (auto& extent : shape) {
        const auto raw = get_le<std::uint64_t>(in, "extent");
        if (raw == 0 || raw > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            throw FormatError("invalid extent " + std::to_string(raw));
        }
        extent = static_cast<std::int64_t>(raw);
    }

    std::size_t count = 0;
    try {
        count = element_count(shape);
    } catch (const SignatureError& e) {
        throw FormatError(e.what());
    }
    const std::size_t width = dtype_size(dtype);
    if (count > std::numeric_limits<std::size_t>::max() / width) {
        throw FormatError("payload size overflows for shape " + format_shape(shape));
    }
    const std::size_t total = count * width;

    // Read in bounded chunks so a lying header cannot force a huge allocation
    // before truncation is noticed.
    constexpr std::size_t kChunk = std::size_t{1} << 20;
    std::vector<char> payload;
    payload.reserve(std::min(total, kChunk));
    while (payload.size() < total) {
        const std::size_t want = std::min(kChunk, total - payload.size());
        const std::size_t old = payload.size();
        payload.resize(old + want);
        in.read(payload.data() + old, static_cast<std::streamsize>(want));
        if (static_cast<std::size_t>(in.gcount()) != want) {
            throw FormatError("truncated payload: expected " + std::to_string(total) +
                              " bytes for shape " + format_shape(shape));
        }
    }

    if (dtype == DType::f32) {
        std::vector<float> values(count);
        std::memcpy(values.data(), payload.data(), total);
        return Tensor(std::move(shape), std::move(values));
    }
    std::vector<std::uint16_t> bits(count);
    std::memcpy(bits.data(), payload.data(), total);
    return Tensor(std::move(shape), std::move(bits));
}

void write_tensor_file(const Tensor& tensor, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError("cannot open " + tmp.string() + " for writing");
        }
        write_tensor(tensor, out);
        out.flush();
        if (!out) {
            throw FormatError("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open tensor file " + path.string());
    }
    Tensor t = read_tensor(in);
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError("trailing bytes after tensor payload in " + path.string());
    }
    return t;
}

} // namespace kforge
