#include "ecgcss/preprocess.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <complex>
#include <numbers>
#include <numeric>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "ecgcss/model_io.hpp"

namespace ecgcss::preprocess {

namespace {

using cplx = std::complex<double>;

double parse_number(std::string_view key, std::string_view value) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty())
        throw InvalidArgument("filter spec: bad value for '" + std::string(key) + "'");
    return v;
}

cplx section_response(const Biquad& s, cplx z_inv) {
    cplx num = s.b[0] + z_inv * (s.b[1] + z_inv * s.b[2]);
    cplx den = s.a[0] + z_inv * (s.a[1] + z_inv * s.a[2]);
    return num / den;
}

cplx cascade_response(const Sos& sos, double omega) {
    cplx z_inv = std::polar(1.0, -omega);
    cplx h = 1.0;
    for (const auto& s : sos) h *= section_response(s, z_inv);
    return h;
}

// Transposed direct form II state for a unit-step steady state.
std::array<double, 2> step_state(const Biquad& s) {
    const double dc_den = s.a[0] + s.a[1] + s.a[2];
    const double g = std::abs(dc_den) < 1e-300 ? 0.0 : (s.b[0] + s.b[1] + s.b[2]) / dc_den;
    return {g - s.b[0], s.b[2] - s.a[2] * g};
}

double dc_gain(const Biquad& s) {
    const double den = s.a[0] + s.a[1] + s.a[2];
    return std::abs(den) < 1e-300 ? 0.0 : (s.b[0] + s.b[1] + s.b[2]) / den;
}

void run_cascade(const Sos& sos, std::vector<double>& x, double x0) {
    // Initial states scaled so a constant input equal to x0 passes without transient.
    double scale = x0;
    for (const auto& s : sos) {
        auto zi = step_state(s);
        double z1 = zi[0] * scale;
        double z2 = zi[1] * scale;
        for (double& v : x) {
            const double in = v;
            const double out = s.b[0] * in + z1;
            z1 = s.b[1] * in - s.a[1] * out + z2;
            z2 = s.b[2] * in - s.a[2] * out;
            v = out;
        }
        scale *= dc_gain(s);
    }
}

} // namespace

void FilterSpec::validate(double fs) const {
    if (!(fs > 0.0)) throw InvalidArgument("filter: sampling rate must be positive");
    if (!(band_low > 0.0) || !(band_low < band_high))
        throw InvalidArgument("filter: need 0 < band_low < band_high");
    if (!(band_high < fs / 2.0))
        throw InvalidArgument("filter: band_high must be below fs/2");
    if (!(target_fs > 2.0 * band_high))
        throw InvalidArgument("filter: target_fs must exceed 2 * band_high");
    if (butterworth_order < 1 || butterworth_order > 12)
        throw InvalidArgument("filter: butterworth_order must be in [1, 12]");
    if (!(notch > 0.0) || !(notch_q > 0.0))
        throw InvalidArgument("filter: notch and notch_q must be positive");
}

std::string format_filter_spec(const FilterSpec& spec) {
    std::string out;
    out += "band_low=" + format_double(spec.band_low) + "\n";
    out += "band_high=" + format_double(spec.band_high) + "\n";
    out += "notch=" + format_double(spec.notch) + "\n";
    out += "target_fs=" + format_double(spec.target_fs) + "\n";
    out += "butterworth_order=" + std::to_string(spec.butterworth_order) + "\n";
    out += "notch_q=" + format_double(spec.notch_q) + "\n";
    out += "per_lead_rescale=" + std::string(spec.per_lead_rescale ? "1" : "0") + "\n";
    return out;
}

bool apply_filter_key(FilterSpec& spec, std::string_view key, std::string_view value) {
    if (key == "band_low")
        spec.band_low = parse_number(key, value);
    else if (key == "band_high")
        spec.band_high = parse_number(key, value);
    else if (key == "notch")
        spec.notch = parse_number(key, value);
    else if (key == "target_fs")
        spec.target_fs = parse_number(key, value);
    else if (key == "notch_q")
        spec.notch_q = parse_number(key, value);
    else if (key == "per_lead_rescale") {
        if (value != "0" && value != "1" && value != "true" && value != "false")
            throw InvalidArgument("filter spec: per_lead_rescale must be 0/1/true/false");
        spec.per_lead_rescale = value == "1" || value == "true";
    } else if (key == "butterworth_order") {
        double v = parse_number(key, value);
        if (v != std::floor(v)) throw InvalidArgument("filter spec: order must be an integer");
        spec.butterworth_order = static_cast<int>(v);
    } else
        return false;
    return true;
}

FilterSpec parse_filter_spec(std::string_view text, FilterSpec base) {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidArgument("filter spec: expected key=value");
        std::string_view key(line.data(), eq);
        std::string_view value(line.data() + eq + 1, line.size() - eq - 1);
        if (!apply_filter_key(base, key, value))
            throw InvalidArgument("filter spec: unknown key '" + std::string(key) + "'");
    }
    return base;
}

Sos design_butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
    if (order < 1) throw InvalidArgument("butterworth: order must be >= 1");
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0))
        throw InvalidArgument("butterworth: need 0 < low < high < fs/2");
    const double pi = std::numbers::pi;
    const double fs2 = 2.0 * fs;
    const double w1 = fs2 * std::tan(pi * low_hz / fs);
    const double w2 = fs2 * std::tan(pi * high_hz / fs);
    const double bw = w2 - w1;
    const double wo = std::sqrt(w1 * w2);

    // Analog lowpass prototype poles on the left half of the unit circle,
    // shifted onto the band and mapped through the bilinear transform.
    std::vector<cplx> poles;
    for (int m = -order + 1; m < order; m += 2) {
        const cplx p = -std::exp(cplx(0.0, pi * m / (2.0 * order)));
        const cplx plp = p * bw / 2.0;
        const cplx root = std::sqrt(plp * plp - wo * wo);
        for (cplx pb : {plp + root, plp - root}) poles.push_back((fs2 + pb) / (fs2 - pb));
    }

    std::vector<cplx> upper;
    std::vector<double> real_poles;
    for (const auto& p : poles) {
        if (std::abs(p.imag()) < 1e-12 * std::max(1.0, std::abs(p)))
            real_poles.push_back(p.real());
        else if (p.imag() > 0.0)
            upper.push_back(p);
    }
    std::sort(upper.begin(), upper.end(),
              [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
    std::sort(real_poles.begin(), real_poles.end());

    // Each section carries one zero at z = 1 and one at z = -1.
    Sos sos;
    for (const auto& p : upper) {
        Biquad s;
        s.b = {1.0, 0.0, -1.0};
        s.a = {1.0, -2.0 * p.real(), std::norm(p)};
        sos.push_back(s);
    }
    for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
        Biquad s;
        s.b = {1.0, 0.0, -1.0};
        s.a = {1.0, -(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]};
        sos.push_back(s);
    }
    if (real_poles.size() % 2 != 0)
        throw InvalidArgument("butterworth: unpaired real pole in bandpass design");

    const double omega0 = 2.0 * std::atan(wo / fs2);
    const double gain = std::abs(cascade_response(sos, omega0));
    for (double& c : sos.front().b) c /= gain;
    return sos;
}

Biquad design_notch(double f0_hz, double q, double fs) {
    if (!(f0_hz > 0.0 && f0_hz < fs / 2.0))
        throw InvalidArgument("notch: frequency must lie in (0, fs/2)");
    if (!(q > 0.0)) throw InvalidArgument("notch: Q must be positive");
    const double w0 = 2.0 * std::numbers::pi * f0_hz / fs;
    const double bw = w0 / q;
    const double gain = 1.0 / (1.0 + std::tan(bw / 2.0));
    Biquad s;
    s.b = {gain, -2.0 * gain * std::cos(w0), gain};
    s.a = {1.0, -2.0 * gain * std::cos(w0), 2.0 * gain - 1.0};
    return s;
}

double magnitude_response(const Sos& sos, double f_hz, double fs) {
    return std::abs(cascade_response(sos, 2.0 * std::numbers::pi * f_hz / fs));
}

std::vector<double> sosfilt(const Sos& sos, std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    run_cascade(sos, y, 0.0);
    return y;
}

std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) throw InvalidArgument("sosfiltfilt: need at least 2 samples");
    std::size_t padlen = 3 * (2 * sos.size() + 1);
    padlen = std::min(padlen, n - 1);

    std::vector<double> ext;
    ext.reserve(n + 2 * padlen);
    for (std::size_t k = padlen; k >= 1; --k) ext.push_back(2.0 * x[0] - x[k]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t k = 1; k <= padlen; ++k) ext.push_back(2.0 * x[n - 1] - x[n - 1 - k]);

    run_cascade(sos, ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    run_cascade(sos, ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
            ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

std::vector<double> bandpass(std::span<const double> signal, double fs, const FilterSpec& spec) {
    spec.validate(fs);
    if (signal.size() < static_cast<std::size_t>(3 * spec.butterworth_order))
        throw InvalidArgument("bandpass: signal shorter than 3 * order samples");
    return sosfiltfilt(
        design_butterworth_bandpass(spec.butterworth_order, spec.band_low, spec.band_high, fs),
        signal);
}

std::vector<double> notch(std::span<const double> signal, double fs, const FilterSpec& spec) {
    if (!(spec.notch < fs / 2.0)) throw InvalidArgument("notch: frequency must be below fs/2");
    if (signal.size() < static_cast<std::size_t>(3 * spec.butterworth_order))
        throw InvalidArgument("notch: signal too short");
    return sosfiltfilt(Sos{design_notch(spec.notch, spec.notch_q, fs)}, signal);
}

std::vector<double> rescale_unit(std::span<const double> signal) {
    if (signal.empty()) throw DataError("rescale_unit: empty signal");
    auto [lo_it, hi_it] = std::minmax_element(signal.begin(), signal.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) throw DataError("rescale_unit: degenerate (constant) signal");
    const double span = hi - lo;
    std::vector<double> out(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) {
        if (signal[i] == lo)
            out[i] = -1.0;
        else if (signal[i] == hi)
            out[i] = 1.0;
        else
            out[i] = 2.0 * (signal[i] - lo) / span - 1.0;
    }
    return out;
}

std::vector<double> zscore(std::span<const double> signal) {
    if (signal.empty()) throw DataError("zscore: empty signal");
    const double n = static_cast<double>(signal.size());
    const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : signal) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0) || sd < 1e-12 * std::max(1.0, std::abs(mean)))
        throw DataError("zscore: zero-variance signal");
    std::vector<double> out(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) out[i] = (signal[i] - mean) / sd;
    return out;
}

std::vector<double> baseline_normalize(std::span<const double> signal) {
    if (signal.empty()) throw DataError("baseline_normalize: empty signal");
    std::vector<double> sorted(signal.begin(), signal.end());
    const std::size_t mid = sorted.size() / 2;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
    double median = sorted[mid];
    if (sorted.size() % 2 == 0) {
        const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    std::vector<double> out(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) out[i] = signal[i] - median;
    return out;
}

std::vector<double> resample_fft(std::span<const double> signal, double fs, double target_fs,
                                 bool allow_upsample) {
    if (!(fs > 0.0) || !(target_fs > 0.0)) throw InvalidArgument("resample_fft: rates must be positive");
    if (target_fs > fs && !allow_upsample)
        throw InvalidArgument("resample_fft: upsampling is disabled");
    const std::size_t n = signal.size();
    if (n < 4) throw InvalidArgument("resample_fft: need at least 4 samples");
    if (target_fs == fs) return {signal.begin(), signal.end()};
    const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(n) * target_fs / fs));
    if (m < 1) throw InvalidArgument("resample_fft: output would be empty");

    Eigen::FFT<double> fft;
    std::vector<double> in(signal.begin(), signal.end());
    std::vector<cplx> spec;
    fft.fwd(spec, in);

    std::vector<cplx> out_spec(m, cplx(0.0, 0.0));
    const std::size_t keep = std::min(n, m);
    const std::size_t half = keep / 2;
    for (std::size_t k = 0; k < (keep + 1) / 2; ++k) out_spec[k] = spec[k];
    for (std::size_t k = 1; k < (keep + 1) / 2; ++k) out_spec[m - k] = spec[n - k];
    if (keep % 2 == 0) {
        if (m < n) {
            // Folded Nyquist bin of the shorter output is real for real input.
            out_spec[half] = cplx(0.5 * (spec[half] + spec[n - half]).real(), 0.0);
        } else if (m > n) {
            out_spec[half] = 0.5 * spec[half];
            out_spec[m - half] = 0.5 * spec[half];
        } else {
            out_spec[half] = spec[half];
        }
    }

    std::vector<cplx> time;
    fft.inv(time, out_spec);
    const double scale = static_cast<double>(m) / static_cast<double>(n);
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = time[i].real() * scale;
    return out;
}

EcgRecord preprocess_record(const EcgRecord& record, const FilterSpec& spec) {
    const double fs = record.fs();
    spec.validate(fs);
    if (spec.target_fs > fs)
        throw InvalidArgument("preprocess: record rate is below the target rate");
    const bool apply_notch = spec.notch < fs / 2.0;
    std::vector<std::vector<double>> leads;
    leads.reserve(record.lead_count());
    std::vector<std::vector<double>> filtered;
    filtered.reserve(record.lead_count());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < record.lead_count(); ++i) {
        auto x = baseline_normalize(record.lead_at(i));
        x = bandpass(x, fs, spec);
        if (apply_notch) x = notch(x, fs, spec);
        const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
        if (!(*mx > *mn)) throw DataError("preprocess: lead " + std::string(lead_name(record.leads()[i])) + " is constant");
        lo = std::min(lo, *mn);
        hi = std::max(hi, *mx);
        filtered.push_back(std::move(x));
    }
    for (auto& x : filtered) {
        if (spec.per_lead_rescale)
            x = rescale_unit(x);
        else
            for (double& v : x) v = 2.0 * (v - lo) / (hi - lo) - 1.0;
        leads.push_back(resample_fft(x, fs, spec.target_fs));
    }
    return EcgRecord(spec.target_fs, record.leads(), std::move(leads), record.subject_id(),
                     record.label());
}

} // namespace ecgcss::preprocess
