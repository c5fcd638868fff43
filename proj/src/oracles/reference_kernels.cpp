#include "kforge/error.hpp"
#include "kforge/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace kforge {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw SignatureError(what);
    }
}

} // namespace

MergeResult merge_attn_states_lse_ref(const Tensor& va, const Tensor& sa, const Tensor& vb,
                                      const Tensor& sb) {
    return merge_attn_states_lse_ref(va, sa, vb, sb, va.dtype(), sa.dtype());
}

MergeResult merge_attn_states_lse_ref(const Tensor& va, const Tensor& sa, const Tensor& vb,
                                      const Tensor& sb, DType v_out_dtype, DType s_out_dtype) {
    require(va.shape().size() == 3, "merge: V must be [seq, heads, dim], got " +
                                        format_shape(va.shape()));
    require(vb.shape() == va.shape(), "merge: Va and Vb shapes differ");
    const Shape score_shape{va.shape()[0], va.shape()[1]};
    require(sa.shape() == score_shape && sb.shape() == score_shape,
            "merge: S must be " + format_shape(score_shape));

    const auto rows = static_cast<std::size_t>(score_shape[0] * score_shape[1]);
    const auto dim = static_cast<std::size_t>(va.shape()[2]);

    const auto va_f = va.to_f32();
    const auto vb_f = vb.to_f32();
    const auto sa_f = sa.to_f32();
    const auto sb_f = sb.to_f32();
    std::vector<float> v_out(rows * dim);
    std::vector<float> s_out(rows);

    for (std::size_t row = 0; row < rows; ++row) {
        const float s_a = sa_f[row];
        const float s_b = sb_f[row];
        const float smax = std::max(s_a, s_b);
        const float w_a = std::exp(s_a - smax);
        const float w_b = std::exp(s_b - smax);
        const float inv = 1.0f / (w_a + w_b);
        const float a = w_a * inv;
        const float b = w_b * inv;
        const std::size_t base = row * dim;
        for (std::size_t d = 0; d < dim; ++d) {
            v_out[base + d] = a * va_f[base + d] + b * vb_f[base + d];
        }
        s_out[row] = smax + std::log(w_a + w_b);
    }

    return {Tensor::from_f32(v_out_dtype, va.shape(), std::move(v_out)),
            Tensor::from_f32(s_out_dtype, score_shape, std::move(s_out))};
}

Tensor fused_add_rmsnorm_ref(const Tensor& x, const Tensor& residual, const Tensor& weight,
                             float eps) {
    return fused_add_rmsnorm_ref(x, residual, weight, eps, x.dtype());
}

Tensor fused_add_rmsnorm_ref(const Tensor& x, const Tensor& residual, const Tensor& weight,
                             float eps, DType out_dtype) {
    require(x.shape().size() == 2, "rmsnorm: x must be [rows, D], got " + format_shape(x.shape()));
    require(residual.shape() == x.shape(), "rmsnorm: x and r shapes differ");
    require(weight.shape() == Shape{x.shape()[1]}, "rmsnorm: w must be [D]");
    require(eps >= 0.0f && std::isfinite(eps), "rmsnorm: eps must be finite and >= 0");

    const auto rows = static_cast<std::size_t>(x.shape()[0]);
    const auto width = static_cast<std::size_t>(x.shape()[1]);
    const auto xf = x.to_f32();
    const auto rf = residual.to_f32();
    const auto wf = weight.to_f32();

    std::vector<float> y(rows * width);
    std::vector<float> h(width);
    for (std::size_t row = 0; row < rows; ++row) {
        const std::size_t base = row * width;
        float sum_sq = 0.0f;
        for (std::size_t i = 0; i < width; ++i) {
            h[i] = xf[base + i] + rf[base + i];
            sum_sq += h[i] * h[i];
        }
        const float inv_rms = 1.0f / std::sqrt(sum_sq / static_cast<float>(width) + eps);
        for (std::size_t i = 0; i < width; ++i) {
            y[base + i] = h[i] * inv_rms * wf[i];
        }
    }
    return Tensor::from_f32(out_dtype, x.shape(), std::move(y));
}

Tensor silu_and_mul_ref(const Tensor& x, const Tensor& gate) {
    return silu_and_mul_ref(x, gate, x.dtype());
}

Tensor silu_and_mul_ref(const Tensor& x, const Tensor& gate, DType out_dtype) {
    require(gate.shape() == x.shape(), "silu_and_mul: x and g shapes differ");
    const auto xf = x.to_f32();
    const auto gf = gate.to_f32();
    std::vector<float> out(xf.size());
    for (std::size_t i = 0; i < xf.size(); ++i) {
        const float z = xf[i];
        out[i] = z / (1.0f + std::exp(-z)) * gf[i];
    }
    return Tensor::from_f32(out_dtype, x.shape(), std::move(out));
}

} // namespace kforge
