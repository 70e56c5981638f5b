#pragma once
// Corpus builders shared by the unit and acceptance tests.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ecgcss/pipeline.hpp"
#include "ecgcss/synth.hpp"
#include "ecgcss/upscaler.hpp"
#include "ecgcss/wavelet.hpp"

namespace fixture {

using namespace ecgcss;

inline synth::SynthSpec record_spec(int k, std::uint64_t seed, double snr_db = std::numeric_limits<double>::infinity()) {
    synth::SynthSpec s;
    s.label = kAllLabels[static_cast<std::size_t>(k) % kAllLabels.size()];
    s.seed = seed * 7919 + static_cast<std::uint64_t>(k);
    s.subject_id = "s" + std::to_string(k);
    s.morphology_jitter = 0.05;
    s.bpm = 60.0 + 3.0 * (k % 7);
    s.snr_db = snr_db;
    return s;
}

/// Normalized 12-lead beats from `records` synthetic records, at most `per_record` from each.
inline std::vector<Beat> dipole_beats(int records, std::uint64_t seed, int per_record,
                                      double snr_db = std::numeric_limits<double>::infinity()) {
    pipeline::PipelineConfig cfg;
    cfg.sync();
    std::vector<Beat> out;
    for (int k = 0; k < records; ++k) {
        const auto beats = pipeline::extract_beats(synth::generate(record_spec(k, seed, snr_db)).record, cfg);
        for (std::size_t j = 0; j < beats.size() && static_cast<int>(j) < per_record; ++j) out.push_back(beats[j]);
    }
    return out;
}

inline std::vector<double> row_vector(const Beat& b, LeadId lead) {
    const Eigen::VectorXd r = b.row(lead);
    return {r.data(), r.data() + r.size()};
}

/// One cubic map per (synthesized lead, band), seeded per band.
using Teacher = std::map<LeadId, std::vector<upscaler::BandRegressor>>;

inline Teacher random_teacher(std::uint64_t seed, int bands, double scale = 0.5) {
    Teacher t;
    for (int b = 0; b < bands; ++b)
        for (auto& [lead, map] : synth::random_cubic_maps(seed * 31 + static_cast<std::uint64_t>(b), scale))
            t[lead].push_back(map);
    return t;
}

/// Replaces every synthesized lead with idwt of the teacher's cubic applied band by band to the known leads.
inline Beat apply_teacher(const Beat& beat, const Teacher& teacher, const upscaler::WaveletConfig& w) {
    std::array<wavelet::WaveletCoeffs, 4> known;
    for (std::size_t i = 0; i < 4; ++i) known[i] = wavelet::dwt_db4(row_vector(beat, kKnownLeads[i]), w.level, w.boundary);
    Beat out = beat;
    for (const auto& [lead, regs] : teacher) {
        wavelet::WaveletCoeffs c = known[0];
        for (int b = 0; b < c.band_count(); ++b) {
            const std::array<std::vector<double>, 4> bands{known[0].band(b), known[1].band(b), known[2].band(b),
                                                           known[3].band(b)};
            c.band(b) = upscaler::predict_band(regs[static_cast<std::size_t>(b)], bands);
        }
        const auto y = wavelet::idwt_db4(c);
        const int row = out.row_of(lead);
        for (std::size_t j = 0; j < y.size(); ++j) out.samples(row, static_cast<Eigen::Index>(j)) = y[j];
    }
    return out;
}

} // namespace fixture
