#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgcss/ecg_model.hpp"

namespace ecgcss::preprocess {

struct FilterSpec {
    double band_low = 2.0;     // Hz
    double band_high = 40.0;   // Hz
    double notch = 60.0;       // Hz
    double target_fs = 100.0;  // Hz
    int butterworth_order = 4;
    double notch_q = 30.0;
    // One affine map for the whole record keeps inter-lead ratios intact.
    bool per_lead_rescale = false;

    /// Throws InvalidArgument unless 0 < band_low < band_high < fs/2 and
    /// target_fs > 2 * band_high. The notch frequency is checked by notch().
    void validate(double fs) const;
};

/// key=value lines, one per field.
std::string format_filter_spec(const FilterSpec& spec);
/// Unknown keys and unparsable values throw InvalidArgument; missing keys keep defaults.
FilterSpec parse_filter_spec(std::string_view text, FilterSpec base = {});
/// Applies one `key=value` override; returns false if the key is not a FilterSpec field.
bool apply_filter_key(FilterSpec& spec, std::string_view key, std::string_view value);

/// Second-order section in direct form: b0 b1 b2 / 1 a1 a2.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};
using Sos = std::vector<Biquad>;

/// Digital Butterworth bandpass of the given prototype order (2*order poles),
/// designed by bilinear transform with pre-warped edges and normalized to unit
/// gain at the band centre.
Sos design_butterworth_bandpass(int order, double low_hz, double high_hz, double fs);
/// Second-order IIR notch (zeros on the unit circle at f0, bandwidth f0/Q).
Biquad design_notch(double f0_hz, double q, double fs);

/// |H(e^{j 2 pi f / fs})| of a cascade.
double magnitude_response(const Sos& sos, double f_hz, double fs);

/// Causal cascade filtering with optional per-section initial states.
std::vector<double> sosfilt(const Sos& sos, std::span<const double> x);
/// Zero-phase forward-backward filtering with odd extension at both ends and
/// steady-state initial conditions (magnitude response is |H|^2).
std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x);

std::vector<double> bandpass(std::span<const double> signal, double fs, const FilterSpec& spec);
std::vector<double> notch(std::span<const double> signal, double fs, const FilterSpec& spec);

/// Affine map onto [-1, 1]: 2 (x - min) / (max - min) - 1.
std::vector<double> rescale_unit(std::span<const double> signal);
/// Zero mean, unit population standard deviation.
std::vector<double> zscore(std::span<const double> signal);
/// Median subtraction.
std::vector<double> baseline_normalize(std::span<const double> signal);

/// Spectral resampling to round(n * target_fs / fs) samples.
std::vector<double> resample_fft(std::span<const double> signal, double fs, double target_fs,
                                 bool allow_upsample = false);

/// Baseline normalization, bandpass, notch, rescale and resample, in that
/// order, on every lead. The notch stage is skipped when the notch frequency
/// is not below the record's Nyquist frequency. Rescaling uses the record-wide
/// extrema unless spec.per_lead_rescale; a constant lead is rejected either way.
EcgRecord preprocess_record(const EcgRecord& record, const FilterSpec& spec);

} // namespace ecgcss::preprocess
