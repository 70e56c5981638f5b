#include "ecgcss/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ecgcss::segmentation {

void RPeakList::validate() const {
    if (!(fs > 0.0)) throw InvalidArgument("RPeakList: fs must be positive");
    const int gap = static_cast<int>(std::ceil(kRefractorySeconds * fs - 1e-9));
    for (std::size_t i = 1; i < indices.size(); ++i) {
        if (indices[i] <= indices[i - 1]) throw InvalidArgument("RPeakList: indices not increasing");
        if (indices[i] - indices[i - 1] < gap)
            throw InvalidArgument("RPeakList: peaks closer than the refractory period");
    }
}

RPeakList detect_r_peaks(std::span<const double> signal, double fs) {
    if (!(fs > 0.0)) throw InvalidArgument("detect_r_peaks: fs must be positive");
    const auto n = static_cast<int>(signal.size());
    if (n < static_cast<int>(std::ceil(fs))) throw InvalidArgument("detect_r_peaks: need at least 1 s of signal");

    RPeakList result;
    result.fs = fs;

    auto at = [&](int i) { return signal[static_cast<std::size_t>(std::clamp(i, 0, n - 1))]; };
    std::vector<double> energy(n);
    for (int i = 0; i < n; ++i) {
        const double d = (-at(i - 2) - 2.0 * at(i - 1) + 2.0 * at(i + 1) + at(i + 2)) / 8.0;
        energy[i] = d * d;
    }

    // Centred moving-window integration via prefix sums.
    const int half = std::max(1, static_cast<int>(std::lround(0.15 * fs)) / 2);
    std::vector<double> prefix(n + 1, 0.0);
    for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + energy[i];
    std::vector<double> mwi(n);
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        mwi[i] = (prefix[hi + 1] - prefix[lo]) / (2.0 * half + 1.0);
    }

    const double peak_level = *std::max_element(mwi.begin(), mwi.end());
    if (!(peak_level > 0.0)) return result;

    std::vector<int> candidates;
    for (int i = 1; i + 1 < n; ++i) {
        const double v = mwi[i];
        if (v > mwi[i - 1] && v >= mwi[i + 1] && v > 0.0) candidates.push_back(i);
    }

    const int refractory = static_cast<int>(std::ceil(kRefractorySeconds * fs - 1e-9));
    double spki = 0.25 * peak_level;
    double npki = 0.5 * std::accumulate(mwi.begin(), mwi.end(), 0.0) / n;
    std::vector<int> qrs;
    std::vector<int> noise_since_last;
    double rr_avg = 0.0;

    auto threshold = [&] { return npki + 0.25 * (spki - npki); };

    for (int c : candidates) {
        const double v = mwi[c];
        if (!qrs.empty() && c - qrs.back() < refractory) {
            // Within the refractory window only a larger peak may replace the last QRS.
            if (v > mwi[qrs.back()] && v > threshold()) qrs.back() = c;
            continue;
        }
        if (v > threshold()) {
            if (!qrs.empty() && rr_avg > 0.0 && c - qrs.back() > 1.66 * rr_avg) {
                int best = -1;
                for (int s : noise_since_last) {
                    if (s - qrs.back() < refractory || c - s < refractory) continue;
                    if (mwi[s] > 0.5 * threshold() &&
                        (best < 0 || mwi[s] > mwi[best]))
                        best = s;
                }
                if (best >= 0) {
                    qrs.push_back(best);
                    spki = 0.25 * mwi[best] + 0.75 * spki;
                }
            }
            if (!qrs.empty()) {
                const double rr = c - qrs.back();
                rr_avg = rr_avg > 0.0 ? 0.875 * rr_avg + 0.125 * rr : rr;
            }
            qrs.push_back(c);
            spki = 0.125 * v + 0.875 * spki;
            noise_since_last.clear();
        } else {
            npki = 0.125 * v + 0.875 * npki;
            noise_since_last.push_back(c);
        }
    }

    // Refine each integrator peak to the signal maximum nearby.
    const int search = std::max(1, static_cast<int>(std::lround(0.1 * fs)));
    for (int q : qrs) {
        const int lo = std::max(0, q - search);
        const int hi = std::min(n - 1, q + search);
        int best = lo;
        for (int i = lo + 1; i <= hi; ++i)
            if (signal[i] > signal[best]) best = i;
        if (!result.indices.empty() && best - result.indices.back() < refractory) {
            if (signal[best] > signal[result.indices.back()]) result.indices.back() = best;
            continue;
        }
        result.indices.push_back(best);
    }
    return result;
}

LeadId detection_lead(const EcgRecord& record) {
    return record.has_lead(LeadId::II) ? LeadId::II : record.leads().front();
}

std::vector<Beat> segment_beats(const EcgRecord& record, const RPeakList& peaks, int pre, int post) {
    if (std::abs(record.fs() - peaks.fs) > 1e-9 * record.fs())
        throw InvalidArgument("segment_beats: record and peak list sampling rates differ");
    if (pre < 0 || post < 0) throw InvalidArgument("segment_beats: pre/post must be non-negative");
    const auto n = static_cast<int>(record.size());
    const int len = pre + post + 1;
    std::vector<Beat> beats;
    for (int p : peaks.indices) {
        if (p - pre < 0 || p + post >= n) continue;
        Beat b;
        b.samples.resize(static_cast<Eigen::Index>(record.lead_count()), len);
        for (std::size_t l = 0; l < record.lead_count(); ++l) {
            auto s = record.lead_at(l);
            for (int t = 0; t < len; ++t) b.samples(l, t) = s[p - pre + t];
        }
        b.leads = record.leads();
        b.r_index = pre;
        b.source = record.subject_id();
        b.label = record.label();
        beats.push_back(std::move(b));
    }
    return beats;
}

} // namespace ecgcss::segmentation
