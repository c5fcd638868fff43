#include <cuda_fp16.h>
#include <cstdint>

// Several rows per block; weights staged in shared memory by one warp.
constexpr int kRowsPerBlock = 4;

__global__ void merge_attn_states_kernel(const __half* __restrict__ va, const float* __restrict__ sa,
                                         const __half* __restrict__ vb, const float* __restrict__ sb,
                                         __half* __restrict__ vout, float* __restrict__ sout, int64_t rows,
                                         int dim) {
    __shared__ float wa_s[kRowsPerBlock];
    __shared__ float wb_s[kRowsPerBlock];
    const int64_t first = static_cast<int64_t>(blockIdx.x) * kRowsPerBlock;
    if (threadIdx.x < kRowsPerBlock && first + threadIdx.x < rows) {
        const int64_t row = first + threadIdx.x;
        const float s_a = sa[row], s_b = sb[row];
        const float smax = fmaxf(s_a, s_b);
        const float wa = expf(s_a - smax), wb = expf(s_b - smax);
        const float inv = 1.0f / (wa + wb + 1e-12f);
        wa_s[threadIdx.x] = wa * inv;
        wb_s[threadIdx.x] = wb * inv;
        sout[row] = smax + logf(wa + wb);
    }
    __syncthreads();

    const int pairs = dim / 2;
    for (int r = 0; r < kRowsPerBlock && first + r < rows; ++r) {
        const int64_t base = (first + r) * dim;
        const float a = wa_s[r], b = wb_s[r];
        const __half2* a2 = reinterpret_cast<const __half2*>(va + base);
        const __half2* b2 = reinterpret_cast<const __half2*>(vb + base);
        __half2* o2 = reinterpret_cast<__half2*>(vout + base);
        for (int p = threadIdx.x; p < pairs; p += blockDim.x) {
            const float2 fa = __half22float2(a2[p]);
            const float2 fb = __half22float2(b2[p]);
            o2[p] = __floats2half2_rn(fmaf(a, fa.x, b * fb.x), fmaf(a, fa.y, b * fb.y));
        }
        if ((dim & 1) && threadIdx.x == 0) {
            const int d = dim - 1;
            vout[base + d] = __float2half(a * __half2float(va[base + d]) + b * __half2float(vb[base + d]));
        }
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
    const auto blocks = static_cast<unsigned>((rows + kRowsPerBlock - 1) / kRowsPerBlock);
    merge_attn_states_kernel<<<blocks, 128, 0, stream>>>(va, sa, vb, sb, vout, sout, rows, dim);
    return cudaGetLastError() == cudaSuccess ? 0 : 1;
}
