#include "ecgcss/wavelet.hpp"

#include <cmath>
#include <string>

#include "ecgcss/error.hpp"

namespace ecgcss::wavelet {

namespace {

constexpr std::size_t kTaps = kDb4DecLo.size();

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto len = static_cast<std::ptrdiff_t>(n);
    while (i < 0 || i >= len) {
        if (i < 0) i = -i - 1;
        if (i >= len) i = 2 * len - i - 1;
    }
    return static_cast<std::size_t>(i);
}

void analysis_step(std::span<const double> x, Boundary boundary, std::vector<double>& lo,
                   std::vector<double>& hi) {
    const auto dec_hi = db4_dec_hi();
    if (boundary == Boundary::Symmetric) {
        const std::size_t n = x.size();
        const std::size_t out = band_length(n, boundary);
        lo.assign(out, 0.0);
        hi.assign(out, 0.0);
        for (std::size_t k = 0; k < out; ++k) {
            double a = 0.0, d = 0.0;
            for (std::size_t j = 0; j < kTaps; ++j) {
                const double v = x[reflect(static_cast<std::ptrdiff_t>(2 * k + 1) - static_cast<std::ptrdiff_t>(j), n)];
                a += kDb4DecLo[j] * v;
                d += dec_hi[j] * v;
            }
            lo[k] = a;
            hi[k] = d;
        }
        return;
    }
    // Odd lengths are padded by repeating the last sample.
    std::vector<double> padded(x.begin(), x.end());
    if (padded.size() % 2 != 0) padded.push_back(padded.back());
    const std::size_t n = padded.size();
    const std::size_t out = n / 2;
    lo.assign(out, 0.0);
    hi.assign(out, 0.0);
    for (std::size_t k = 0; k < out; ++k) {
        double a = 0.0, d = 0.0;
        for (std::size_t j = 0; j < kTaps; ++j) {
            const auto idx = ((static_cast<std::ptrdiff_t>(2 * k + kTaps / 2) - static_cast<std::ptrdiff_t>(j)) % static_cast<std::ptrdiff_t>(n) + static_cast<std::ptrdiff_t>(n)) % static_cast<std::ptrdiff_t>(n);
            a += kDb4DecLo[j] * padded[static_cast<std::size_t>(idx)];
            d += dec_hi[j] * padded[static_cast<std::size_t>(idx)];
        }
        lo[k] = a;
        hi[k] = d;
    }
}

std::vector<double> synthesis_step(std::span<const double> lo, std::span<const double> hi,
                                   std::size_t target, Boundary boundary) {
    const auto dec_hi = db4_dec_hi();
    const std::size_t m = lo.size();
    if (boundary == Boundary::Symmetric) {
        // Valid part of the upsampled convolution with the reconstruction
        // filters (time-reversed decomposition filters).
        const std::size_t full = 2 * m + 2 - kTaps;
        std::vector<double> y(full, 0.0);
        for (std::size_t o = 0; o < full; ++o) {
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                const auto t = static_cast<std::ptrdiff_t>(o + kTaps - 2) - static_cast<std::ptrdiff_t>(2 * k);
                if (t < 0) break;
                if (t >= static_cast<std::ptrdiff_t>(kTaps)) continue;
                const std::size_t r = kTaps - 1 - static_cast<std::size_t>(t);
                acc += lo[k] * kDb4DecLo[r] + hi[k] * dec_hi[r];
            }
            y[o] = acc;
        }
        y.resize(target);
        return y;
    }
    // Transpose of the circular analysis operator.
    const std::size_t n = 2 * m;
    std::vector<double> y(n, 0.0);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < kTaps; ++j) {
            const auto idx = ((static_cast<std::ptrdiff_t>(2 * k + kTaps / 2) - static_cast<std::ptrdiff_t>(j)) % static_cast<std::ptrdiff_t>(n) + static_cast<std::ptrdiff_t>(n)) % static_cast<std::ptrdiff_t>(n);
            y[static_cast<std::size_t>(idx)] += kDb4DecLo[j] * lo[k] + dec_hi[j] * hi[k];
        }
    y.resize(target);
    return y;
}

} // namespace

std::array<double, 8> db4_dec_hi() {
    std::array<double, 8> hi{};
    for (std::size_t j = 0; j < kTaps; ++j)
        hi[j] = (j % 2 == 0 ? -1.0 : 1.0) * kDb4DecLo[kTaps - 1 - j];
    return hi;
}

std::string_view boundary_name(Boundary b) {
    return b == Boundary::Symmetric ? "symmetric" : "periodization";
}

Boundary parse_boundary(std::string_view name) {
    if (name == "symmetric") return Boundary::Symmetric;
    if (name == "periodization") return Boundary::Periodization;
    throw InvalidArgument("unknown wavelet boundary mode '" + std::string(name) + "'");
}

const std::vector<double>& WaveletCoeffs::band(int b) const {
    if (b < 0 || b > level) throw InvalidArgument("WaveletCoeffs: band index out of range");
    return b == 0 ? approx : details[static_cast<std::size_t>(b - 1)];
}

std::vector<double>& WaveletCoeffs::band(int b) {
    if (b < 0 || b > level) throw InvalidArgument("WaveletCoeffs: band index out of range");
    return b == 0 ? approx : details[static_cast<std::size_t>(b - 1)];
}

int max_level(std::size_t n) {
    if (n < kTaps) return 0;
    return static_cast<int>(std::floor(std::log2(static_cast<double>(n) / (kTaps - 1))));
}

std::size_t band_length(std::size_t n, Boundary boundary) {
    return boundary == Boundary::Symmetric ? (n + kTaps - 1) / 2 : (n + 1) / 2;
}

WaveletCoeffs dwt_db4(std::span<const double> signal, int level, Boundary boundary) {
    if (signal.size() < kTaps) throw InvalidArgument("dwt_db4: signal shorter than 8 samples");
    if (level < 1) throw InvalidArgument("dwt_db4: level must be >= 1");
    if (level > max_level(signal.size()))
        throw InvalidArgument("dwt_db4: level " + std::to_string(level) + " too deep for length " +
                              std::to_string(signal.size()));
    WaveletCoeffs c;
    c.level = level;
    c.original_len = signal.size();
    c.boundary = boundary;
    std::vector<double> current(signal.begin(), signal.end());
    for (int l = 1; l <= level; ++l) {
        std::vector<double> lo, hi;
        analysis_step(current, boundary, lo, hi);
        c.details.push_back(std::move(hi));
        current = std::move(lo);
    }
    c.approx = std::move(current);
    return c;
}

void validate(const WaveletCoeffs& c) {
    if (c.level < 1 || c.details.size() != static_cast<std::size_t>(c.level))
        throw InvalidArgument("wavelet coeffs: level does not match detail count");
    if (c.original_len < kTaps) throw InvalidArgument("wavelet coeffs: original length too short");
    std::size_t n = c.original_len;
    for (int l = 1; l <= c.level; ++l) {
        n = band_length(n, c.boundary);
        if (c.details[static_cast<std::size_t>(l - 1)].size() != n)
            throw InvalidArgument("wavelet coeffs: detail length mismatch at level " + std::to_string(l));
    }
    if (c.approx.size() != n) throw InvalidArgument("wavelet coeffs: approximation length mismatch");
}

std::vector<double> idwt_db4(const WaveletCoeffs& coeffs) {
    validate(coeffs);
    std::vector<double> current = coeffs.approx;
    for (int l = coeffs.level; l >= 1; --l) {
        const std::size_t target =
            l == 1 ? coeffs.original_len : coeffs.details[static_cast<std::size_t>(l - 2)].size();
        current = synthesis_step(current, coeffs.details[static_cast<std::size_t>(l - 1)], target,
                                 coeffs.boundary);
    }
    return current;
}

} // namespace ecgcss::wavelet
