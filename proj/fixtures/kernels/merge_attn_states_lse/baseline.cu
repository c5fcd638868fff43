#include <cuda_fp16.h>
#include <cstdint>

// One block per (token, head) row; threads stride over the head dimension.
__global__ void merge_attn_states_kernel(const __half* __restrict__ va, const float* __restrict__ sa,
                                         const __half* __restrict__ vb, const float* __restrict__ sb,
                                         __half* __restrict__ vout, float* __restrict__ sout, int dim) {
    const int row = blockIdx.x;
    const float score_a = sa[row];
    const float score_b = sb[row];
    const __half* row_a = va + static_cast<int64_t>(row) * dim;
    const __half* row_b = vb + static_cast<int64_t>(row) * dim;
    __half* out = vout + static_cast<int64_t>(row) * dim;

    float s_a = score_a, s_b = score_b;
    for (int d = threadIdx.x; d < dim; d += blockDim.x) {
        float smax = fmaxf(s_a, s_b);
        float wa = expf(s_a - smax);
        float wb = expf(s_b - smax);
        float inv = 1.0f / (wa + wb + 1e-12f);
        float a = wa * inv, b = wb * inv;
        out[d] = __float2half(a * __half2float(row_a[d]) + b * __half2float(row_b[d]));
    }

    if (threadIdx.x == 0) {
        float smax = fmaxf(s_a, s_b);
        sout[row] = smax + logf(expf(s_a - smax) + expf(s_b - smax));
    }
}

extern "C" int kforge_merge_attn_states_lse(void* const* args, const int64_t* dims, cudaStream_t stream) {
    const auto* va = static_cast<const __half*>(args[0]);
    const auto* sa = static_cast<const float*>(args[1]);
    const auto* vb = static_cast<const __half*>(args[2]);
    const auto* sb = static_cast<const float*>(args[3]);
    auto* vout = static_cast<__half*>(args[4]);
    auto* sout = static_cast<float*>(args[5]);
    const int64_t rows = dims[0] * dims[1];
    const int dim = static_cast<int>(dims[2]);
    merge_attn_states_kernel<<<static_cast<unsigned>(rows), 128, 0, stream>>>(va, sa, vb, sb, vout, sout, dim);
    return cudaGetLastError() == cudaSuccess ? 0 : 1;
}
