#pragma once

#include <span>
#include <vector>

#include "ecgcss/ecg_model.hpp"

namespace ecgcss::segmentation {

inline constexpr double kRefractorySeconds = 0.2;

struct RPeakList {
    std::vector<int> indices;  // strictly increasing, >= refractory apart
    double fs = 0.0;

    /// Throws InvalidArgument if ordering or the refractory gap is violated.
    void validate() const;
};

/// Pan-Tompkins style detector: centred five-point derivative, squaring,
/// 150 ms moving-window integration, adaptive signal/noise thresholds with a
/// 200 ms refractory period and search-back, then refinement to the signal
/// maximum within +-100 ms of each integrator peak.
RPeakList detect_r_peaks(std::span<const double> signal, double fs);

/// Lead used for detection: II when present, otherwise the first lead.
LeadId detection_lead(const EcgRecord& record);

/// One beat per peak whose [peak - pre, peak + post] window fits inside the
/// record; edge peaks are skipped. Samples are copied unmodified.
std::vector<Beat> segment_beats(const EcgRecord& record, const RPeakList& peaks, int pre = 49,
                                int post = 50);

} // namespace ecgcss::segmentation
