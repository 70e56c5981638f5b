#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecgcss/ecg_model.hpp"
#include "ecgcss/segmentation.hpp"
#include "ecgcss/upscaler.hpp"

namespace ecgcss::synth {

/// One Gaussian component of the cardiac dipole: the vector
/// amplitude * direction * exp(-(t - offset)^2 / (2 width^2)) around each R peak.
struct Wave {
    std::string name;
    double amplitude = 0.0;  // mV
    double offset = 0.0;     // s, relative to the R peak
    double width = 0.01;     // s
    std::array<double, 3> direction{1.0, 0.0, 0.0};  // x left, y inferior, z anterior
};

struct Morphology {
    std::vector<Wave> waves;
};

/// Baseline template with the class-specific shifts applied:
/// H tall QRS and inverted T, D wide QRS, A inverted T with a deep S,
/// M ST elevation, L late T.
Morphology class_morphology(ClassLabel label);

struct SynthSpec {
    double fs = 250.0;
    double duration = 10.0;  // s
    double bpm = 60.0;
    double bpm_jitter = 0.0;  // relative SD of each RR interval
    ClassLabel label = ClassLabel::N;
    std::optional<Morphology> morphology;  // overrides class_morphology(label)
    double morphology_jitter = 0.0;       // relative SD of per-record wave amplitudes
    double snr_db = std::numeric_limits<double>::infinity();
    double powerline_mv = 0.0;
    double powerline_hz = 60.0;
    std::uint64_t seed = 1;
    std::string subject_id = "synth";

    void validate() const;
};

struct SynthResult {
    EcgRecord record;
    segmentation::RPeakList true_peaks;
};

/// Dipole projection onto the 12 standard lead axes; limb leads obey
/// Einthoven/Goldberger exactly before noise is added.
SynthResult generate(const SynthSpec& spec);

using CubicMap = upscaler::BandRegressor;

/// Known leads generated as in generate(); every other lead is the cubic
/// polynomial of the known leads given by `maps`. Missing targets are left as
/// generated.
SynthResult generate_cubic_linked(const SynthSpec& spec, const std::map<LeadId, CubicMap>& maps);

/// Seeded cubic maps for the 8 synthesized leads with coefficients in
/// [-scale, scale] for the linear terms and smaller higher orders.
std::map<LeadId, CubicMap> random_cubic_maps(std::uint64_t seed, double scale = 0.5);

} // namespace ecgcss::synth
