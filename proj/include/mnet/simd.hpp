#pragma once

namespace mnet::kernels {

// Runtime-selected instruction set for the float kernels. Double-precision
// paths always use the scalar reference implementations.
enum class SimdLevel {
    Scalar,
    Avx2,
};

// Best level the host CPU supports.
SimdLevel detected_simd_level();

// Level the dispatch table currently uses. Defaults to the detected level;
// the MNET_SIMD environment variable (scalar|avx2|auto) overrides it once at
// startup and set_simd_level() overrides it programmatically.
SimdLevel active_simd_level();
void set_simd_level(SimdLevel level);

const char* simd_level_name(SimdLevel level);

} // namespace mnet::kernels
