#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace ecgcss::wavelet {

/// Daubechies wavelet with 4 vanishing moments (8 taps), decomposition lowpass.
inline constexpr std::array<double, 8> kDb4DecLo = {
    -0.010597401785069032, 0.0328830116668852,  0.030841381835560764, -0.18703481171909309,
    -0.027983769416859854, 0.6308807679298589,  0.7148465705529157,   0.2303778133088965};

/// Quadrature mirror of kDb4DecLo: hi[j] = (-1)^(j+1) lo[7-j].
std::array<double, 8> db4_dec_hi();

enum class Boundary {
    Symmetric,     // half-sample symmetric extension, band length floor((n + 7) / 2)
    Periodization  // circular, band length ceil(n / 2); orthogonal for even lengths
};

std::string_view boundary_name(Boundary b);
Boundary parse_boundary(std::string_view name);

struct WaveletCoeffs {
    std::vector<double> approx;                // A_L
    std::vector<std::vector<double>> details;  // details[l-1] = D_l, l = 1..L
    int level = 0;
    std::size_t original_len = 0;
    Boundary boundary = Boundary::Symmetric;

    /// Band b: 0 is A_L, b >= 1 is D_b.
    const std::vector<double>& band(int b) const;
    std::vector<double>& band(int b);
    int band_count() const { return level + 1; }
};

/// Deepest allowed level: floor(log2(n / 7)), or 0 when n < 8.
int max_level(std::size_t n);

/// Coefficient length produced by one analysis step on n samples.
std::size_t band_length(std::size_t n, Boundary boundary);

WaveletCoeffs dwt_db4(std::span<const double> signal, int level,
                      Boundary boundary = Boundary::Symmetric);
std::vector<double> idwt_db4(const WaveletCoeffs& coeffs);

/// Structural check used by idwt_db4; throws InvalidArgument when the band
/// lengths do not match what dwt_db4 would have produced.
void validate(const WaveletCoeffs& coeffs);

} // namespace ecgcss::wavelet
