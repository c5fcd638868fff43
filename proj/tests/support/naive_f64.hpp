#pragma once

// Test-only f64 scalar-loop references, written straight from the kernel
// formulas without the stabilization tricks the production oracles use.

#include <cmath>
#include <cstddef>
#include <vector>

namespace kforge::testing {

struct NaiveMerge {
    std::vector<double> v_out;
    std::vector<double> s_out;
};

// V: [rows * dim] flattened, S: [rows].
inline NaiveMerge naive_merge(const std::vector<float>& va, const std::vector<float>& sa,
                              const std::vector<float>& vb, const std::vector<float>& sb,
                              std::size_t dim) {
    NaiveMerge r;
    const std::size_t rows = sa.size();
    r.v_out.resize(rows * dim);
    r.s_out.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double ea = std::exp(static_cast<double>(sa[i]));
        const double eb = std::exp(static_cast<double>(sb[i]));
        for (std::size_t d = 0; d < dim; ++d) {
            r.v_out[i * dim + d] = (ea * va[i * dim + d] + eb * vb[i * dim + d]) / (ea + eb);
        }
        r.s_out[i] = std::log(ea + eb);
    }
    return r;
}

inline std::vector<double> naive_rmsnorm(const std::vector<float>& x, const std::vector<float>& r,
                                         const std::vector<float>& w, double eps) {
    const std::size_t width = w.size();
    const std::size_t rows = x.size() / width;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < rows; ++i) {
        double norm_sq = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            const double h = static_cast<double>(x[i * width + j]) + r[i * width + j];
            norm_sq += h * h;
        }
        const double denom = std::sqrt(norm_sq / static_cast<double>(width) + eps);
        for (std::size_t j = 0; j < width; ++j) {
            const double h = static_cast<double>(x[i * width + j]) + r[i * width + j];
            y[i * width + j] = h / denom * w[j];
        }
    }
    return y;
}

inline std::vector<double> naive_silu_and_mul(const std::vector<float>& x,
                                              const std::vector<float>& g) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z = x[i];
        out[i] = z / (1.0 + std::exp(-z)) * g[i];
    }
    return out;
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(a[i]) - b[i]));
    }
    return worst;
}

} // namespace kforge::testing
