#include "ecgcss/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ecgcss/error.hpp"

namespace ecgcss::synth {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 lead_axis(LeadId lead) {
    const double pi = std::numbers::pi;
    auto chest = [&](double deg) { return Vec3{std::cos(deg * pi / 180.0), 0.0, std::sin(deg * pi / 180.0)}; };
    const Vec3 i{1.0, 0.0, 0.0};
    const Vec3 ii{0.5, std::sqrt(3.0) / 2.0, 0.0};
    switch (lead) {
    case LeadId::I: return i;
    case LeadId::II: return ii;
    case LeadId::III: return {ii[0] - i[0], ii[1] - i[1], 0.0};
    case LeadId::aVR: return {-(i[0] + ii[0]) / 2.0, -(i[1] + ii[1]) / 2.0, 0.0};
    case LeadId::aVL: return {i[0] - ii[0] / 2.0, i[1] - ii[1] / 2.0, 0.0};
    case LeadId::aVF: return {ii[0] - i[0] / 2.0, ii[1] - i[1] / 2.0, 0.0};
    case LeadId::V1: return chest(120.0);
    case LeadId::V2: return chest(90.0);
    case LeadId::V3: return chest(75.0);
    case LeadId::V4: return chest(60.0);
    case LeadId::V5: return chest(30.0);
    case LeadId::V6: return chest(0.0);
    }
    return i;
}

Vec3 unit(Vec3 v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

Wave* find(Morphology& m, const std::string& name) {
    for (auto& w : m.waves)
        if (w.name == name) return &w;
    return nullptr;
}

double min_width(const Morphology& m) {
    double s = std::numeric_limits<double>::infinity();
    for (const auto& w : m.waves) s = std::min(s, w.width);
    return s;
}

} // namespace

Morphology class_morphology(ClassLabel label) {
    Morphology m;
    m.waves = {
        {"P", 0.15, -0.17, 0.022, unit({0.6, 0.75, 0.2})},
        {"Q", 0.12, -0.035, 0.010, unit({-0.6, -0.2, 0.5})},
        {"R", 1.30, 0.0, 0.011, unit({0.7, 0.6, -0.38})},
        {"S", 0.35, 0.035, 0.012, unit({-0.4, -0.6, 0.7})},
        {"T", 0.35, 0.30, 0.050, unit({0.6, 0.6, 0.3})},
    };
    switch (label) {
    case ClassLabel::N: break;
    case ClassLabel::H:
        find(m, "R")->amplitude *= 2.2;
        find(m, "T")->amplitude *= -1.0;
        break;
    case ClassLabel::D:
        for (const char* n : {"Q", "R", "S"}) {
            Wave* w = find(m, n);
            w->width *= 2.5;
            w->offset *= 1.8;
        }
        break;
    case ClassLabel::A:
        find(m, "T")->amplitude *= -0.8;
        find(m, "S")->amplitude *= 3.0;
        break;
    case ClassLabel::M:
        m.waves.push_back({"ST", 0.35, 0.13, 0.05, find(m, "R")->direction});
        break;
    case ClassLabel::L:
        find(m, "T")->offset = 0.45;
        find(m, "T")->width = 0.06;
        break;
    }
    return m;
}

void SynthSpec::validate() const {
    if (!(fs > 0.0) || !(duration > 0.0) || !(bpm > 0.0)) throw InvalidArgument("SynthSpec: fs, duration and bpm must be positive");
    if (bpm_jitter < 0.0 || morphology_jitter < 0.0 || powerline_mv < 0.0 || !(powerline_hz > 0.0))
        throw InvalidArgument("SynthSpec: jitter and powerline parameters must be non-negative");
    if (std::isnan(snr_db)) throw InvalidArgument("SynthSpec: SNR must be a number");
    if (duration < 2.0 * 60.0 / bpm) throw InvalidArgument("SynthSpec: duration must cover at least two beats");
    const Morphology m = morphology ? *morphology : class_morphology(label);
    if (m.waves.empty()) throw InvalidArgument("SynthSpec: morphology has no waves");
    for (const auto& w : m.waves)
        if (!(w.width > 0.0) || !std::isfinite(w.amplitude) || !std::isfinite(w.offset))
            throw InvalidArgument("SynthSpec: wave '" + w.name + "' has invalid parameters");
    // Gaussian spectrum falls to 1% at sqrt(2 ln 100) / (2 pi width).
    const double f_max = std::sqrt(2.0 * std::log(100.0)) / (2.0 * std::numbers::pi * min_width(m));
    if (fs <= 2.0 * f_max) throw InvalidArgument("SynthSpec: fs too low for the narrowest wave");
    if (powerline_mv > 0.0 && powerline_hz >= fs / 2.0)
        throw InvalidArgument("SynthSpec: powerline frequency above Nyquist");
}

SynthResult generate(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Morphology m = spec.morphology ? *spec.morphology : class_morphology(spec.label);
    for (auto& w : m.waves) w.amplitude *= 1.0 + spec.morphology_jitter * gauss(rng);

    const auto n = static_cast<int>(std::lround(spec.duration * spec.fs));
    const double rr0 = 60.0 / spec.bpm;
    std::vector<int> peaks;
    double t = rr0 / 2.0;
    while (true) {
        const auto idx = static_cast<int>(std::lround(t * spec.fs));
        if (idx >= n) break;
        peaks.push_back(idx);
        double rr = rr0 * (1.0 + spec.bpm_jitter * gauss(rng));
        rr = std::max(rr, 0.25);
        t = static_cast<double>(idx) / spec.fs + rr;
    }

    // Cardiac vector, one row per spatial axis.
    std::array<std::vector<double>, 3> vec;
    for (auto& v : vec) v.assign(static_cast<std::size_t>(n), 0.0);
    for (int p : peaks) {
        const double tr = p / spec.fs;
        for (const auto& w : m.waves) {
            const double centre = tr + w.offset;
            const int lo = std::max(0, static_cast<int>(std::floor((centre - 6.0 * w.width) * spec.fs)));
            const int hi = std::min(n - 1, static_cast<int>(std::ceil((centre + 6.0 * w.width) * spec.fs)));
            for (int k = lo; k <= hi; ++k) {
                const double d = (k / spec.fs - centre) / w.width;
                const double g = w.amplitude * std::exp(-0.5 * d * d);
                for (int a = 0; a < 3; ++a) vec[a][static_cast<std::size_t>(k)] += g * w.direction[static_cast<std::size_t>(a)];
            }
        }
    }

    std::vector<LeadId> leads(kAllLeads.begin(), kAllLeads.end());
    std::vector<std::vector<double>> samples;
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (LeadId lead : leads) {
        const Vec3 ax = lead_axis(lead);
        std::vector<double> x(static_cast<std::size_t>(n));
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = ax[0] * vec[0][k] + ax[1] * vec[1][k] + ax[2] * vec[2][k];
        if (std::isfinite(spec.snr_db)) {
            double power = 0.0;
            for (double v : x) power += v * v;
            power /= static_cast<double>(x.size());
            const double sd = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
            for (double& v : x) v += sd * gauss(rng);
        }
        if (spec.powerline_mv > 0.0) {
            const double ph = phase(rng);
            for (std::size_t k = 0; k < x.size(); ++k)
                x[k] += spec.powerline_mv *
                        std::sin(2.0 * std::numbers::pi * spec.powerline_hz * static_cast<double>(k) / spec.fs + ph);
        }
        samples.push_back(std::move(x));
    }

    SynthResult r{EcgRecord(spec.fs, std::move(leads), std::move(samples), spec.subject_id, spec.label),
                  segmentation::RPeakList{std::move(peaks), spec.fs}};
    return r;
}

SynthResult generate_cubic_linked(const SynthSpec& spec, const std::map<LeadId, CubicMap>& maps) {
    for (const auto& [lead, map] : maps) {
        if (is_known_lead(lead)) throw InvalidArgument("generate_cubic_linked: cannot map onto a known lead");
        if (!map.finite()) throw InvalidArgument("generate_cubic_linked: non-finite coefficients");
    }
    SynthResult base = generate(spec);
    const auto& rec = base.record;
    std::array<std::vector<double>, 4> known;
    for (std::size_t i = 0; i < 4; ++i) {
        auto s = rec.lead(kKnownLeads[i]);
        known[i].assign(s.begin(), s.end());
    }
    std::vector<std::vector<double>> samples;
    for (LeadId lead : kAllLeads) {
        auto it = maps.find(lead);
        if (it == maps.end()) {
            auto s = rec.lead(lead);
            samples.emplace_back(s.begin(), s.end());
        } else {
            samples.push_back(upscaler::predict_band(it->second, known));
        }
    }
    return {EcgRecord(rec.fs(), rec.leads(), std::move(samples), rec.subject_id(), rec.label()),
            base.true_peaks};
}

std::map<LeadId, CubicMap> random_cubic_maps(std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::map<LeadId, CubicMap> out;
    for (LeadId lead : kSynthesizedLeads) {
        CubicMap m;
        m.bias = 0.1 * scale * u(rng);
        for (auto& row : m.coeffs) {
            row[0] = scale * u(rng);
            row[1] = 0.25 * scale * u(rng);
            row[2] = 0.125 * scale * u(rng);
        }
        out[lead] = m;
    }
    return out;
}

} // namespace ecgcss::synth
