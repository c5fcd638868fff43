#include <cuda_fp16.h>
#include <cstdint>

constexpr int BLOCK_SIZE = 256;

__device__ __forceinline__ float warp_sum(float s) {
    unsigned m = 0xffffffffu; // intra-warp
    for (int off = 16; off > 0; off >>= 1) {
        s += __shfl_down_sync(m, s, off);
    }
    return s;
}

// One block per row; warp-shuffle reduction with a short shared-memory finalize.
__global__ void fused_add_rmsnorm_kernel(const __half* __restrict__ x, const __half* __restrict__ r,
                                         const __half* __restrict__ w, float eps, __half* __restrict__ y,
                                         int hidden) {
    const int tx = threadIdx.x;
    const int lane = tx & 31, warp = tx >> 5;
    const int64_t base = static_cast<int64_t>(blockIdx.x) * hidden;

    float s = 0.0f;
    for (int i = tx; i < hidden; i += BLOCK_SIZE) {
        const float h = __half2float(x[base + i]) + __half2float(r[base + i]);
        s += h * h;
    }
    s = warp_sum(s);

    __shared__ float ws[BLOCK_SIZE / 32]; // one per warp
    __shared__ float inv_rms;
    if (lane == 0) {
        ws[warp] = s;
    }
    __syncthreads();
    if (warp == 0) {
        float t = lane < BLOCK_SIZE / 32 ? ws[lane] : 0.0f;
        t = warp_sum(t);
        if (lane == 0) {
            inv_rms = rsqrtf(t / static_cast<float>(hidden) + eps);
        }
    }
    __syncthreads();

    for (int i = tx; i < hidden; i += BLOCK_SIZE) {
        const float h = __half2float(x[base + i]) + __half2float(r[base + i]);
        y[base + i] = __float2half(h * inv_rms * __half2float(w[i]));
    }
}

extern "C" int kforge_fused_add_rmsnorm(void* const* args, const int64_t* dims, cudaStream_t stream) {
    const auto* x = static_cast<const __half*>(args[0]);
    const auto* r = static_cast<const __half*>(args[1]);
    const auto* w = static_cast<const __half*>(args[2]);
    const float eps = *static_cast<const float*>(args[3]);
    auto* y = static_cast<__half*>(args[4]);
    const auto rows = static_cast<unsigned>(dims[0]);
    const int hidden = static_cast<int>(dims[1]);
    fused_add_rmsnorm_kernel<<<rows, BLOCK_SIZE, 0, stream>>>(x, r, w, eps, y, hidden);
    return cudaGetLastError() == cudaSuccess ? 0 : 1;
}
