#include <cuda_fp16.h>
#include <cstdint>

__device__ float silu_f(float x) {
    return x / (1.0f + expf(-x));
}

// out = silu(x) * g; each thread handles one half2 pair.
__global__ void silu_and_mul_kernel(const __half* __restrict__ x, const __half* __restrict__ g,
                                    __half* __restrict__ out, int64_t n) {
    const int64_t vec_idx = static_cast<int64_t>(blockIdx.x) * blockDim.x + threadIdx.x;
    const int64_t pairs = n / 2;
    if (vec_idx < pairs) {
        const __half2* x2 = reinterpret_cast<const __half2*>(x);
        const __half2* g2 = reinterpret_cast<const __half2*>(g);
        const float2 xv = __half22float2(x2[vec_idx]);
        const float2 gv = __half22float2(g2[vec_idx]);
        reinterpret_cast<__half2*>(out)[vec_idx] = __floats2half2_rn(silu_f(xv.x) * gv.x, silu_f(xv.y) * gv.y);
    }
    if ((n & 1) && vec_idx == 0) {
        out[n - 1] = __float2half(silu_f(__half2float(x[n - 1])) * __half2float(g[n - 1]));
    }
}

extern "C" int kforge_silu_and_mul(void* const* args, const int64_t* dims, cudaStream_t stream) {
    const auto* x = static_cast<const __half*>(args[0]);
    const auto* g = static_cast<const __half*>(args[1]);
    auto* out = static_cast<__half*>(args[2]);
    const int64_t n = dims[0] * dims[1];
    const int threads = 256;
    const int64_t work = n / 2 > 0 ? n / 2 : 1;
    const auto blocks = static_cast<unsigned>((work + threads - 1) / threads);
    silu_and_mul_kernel<<<blocks, threads, 0, stream>>>(x, g, out, n);
    return cudaGetLastError() == cudaSuccess ? 0 : 1;
}
