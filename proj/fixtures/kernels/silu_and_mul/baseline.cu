#include <cuda_fp16.h>
#include <cstdint>

__device__ float silu_f(float x) {
    return x / (1.0f + expf(-x));
}

// out = silu(x) * g, one thread per element.
__global__ void silu_and_mul_kernel(const __half* __restrict__ x, const __half* __restrict__ g,
                                    __half* __restrict__ out, int64_t n) {
    const int64_t vec_idx = static_cast<int64_t>(blockIdx.x) * blockDim.x + threadIdx.x;
    if (vec_idx >= n) {
        return;
    }
    const __half* x_ptr = x;
    __half xv = x_ptr[vec_idx];
    __half gv = g[vec_idx];
    out[vec_idx] = __float2half(silu_f(__half2float(xv)) * __half2float(gv));
}

extern "C" int kforge_silu_and_mul(void* const* args, const int64_t* dims, cudaStream_t stream) {
    const auto* x = static_cast<const __half*>(args[0]);
    const auto* g = static_cast<const __half*>(args[1]);
    auto* out = static_cast<__half*>(args[2]);
    const int64_t n = dims[0] * dims[1];
    const int threads = 256;
    const auto blocks = static_cast<unsigned>((n + threads - 1) / threads);
    silu_and_mul_kernel<<<blocks, threads, 0, stream>>>(x, g, out, n);
    return cudaGetLastError() == cudaSuccess ? 0 : 1;
}
