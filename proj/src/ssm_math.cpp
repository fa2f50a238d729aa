// Built with fast-math so the loops below map onto the vector math library.
#include <cmath>
#include <cstddef>

#include "mxt/ssm.hpp"

namespace mxt::ssm::detail {

template <class T>
void exp_expm1(const T* z, T* e, T* em1, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = std::exp(z[i]);
        em1[i] = std::expm1(z[i]);
    }
}

template void exp_expm1<float>(const float*, float*, float*, std::size_t);
template void exp_expm1<double>(const double*, double*, double*, std::size_t);

}  // namespace mxt::ssm::detail
