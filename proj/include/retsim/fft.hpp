#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace retsim::fft {

// In-place iterative radix-2 FFT. n must be a power of two.
inline void transform(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) {
        throw std::invalid_argument("fft size must be a power of two");
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -6.283185307179586476925286766559 / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Magnitudes of the first n/2+1 bins of the zero-padded FFT of x.
inline std::vector<double> padded_magnitudes(const std::vector<double>& x,
                                             std::size_t padded_n) {
    std::vector<std::complex<double>> buf(padded_n);
    for (std::size_t i = 0; i < x.size() && i < padded_n; ++i) buf[i] = x[i];
    transform(buf);
    std::vector<double> mag(padded_n / 2 + 1);
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(buf[i]);
    return mag;
}

}  // namespace retsim::fft
