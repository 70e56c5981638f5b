#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecgcss/ecg_model.hpp"

namespace ecgcss::metrics {

/// Row/column order of every confusion matrix and report table.
inline constexpr std::array<ClassLabel, 6> kReportOrder = {ClassLabel::N, ClassLabel::H, ClassLabel::A,
                                                           ClassLabel::M, ClassLabel::L, ClassLabel::D};
int report_index(ClassLabel label);

/// counts(true, predicted), indexed in kReportOrder.
class ConfusionMatrix {
public:
    void add(ClassLabel truth, ClassLabel predicted, long long n = 1);
    long long count(ClassLabel truth, ClassLabel predicted) const;
    long long total() const;
    long long row_total(ClassLabel truth) const;
    long long column_total(ClassLabel predicted) const;
    long long off_diagonal() const;
    const std::array<std::array<long long, 6>, 6>& counts() const noexcept { return counts_; }
    /// Header row "true\\pred,N,H,A,M,L,D" then one row per true class.
    std::string to_csv() const;

private:
    std::array<std::array<long long, 6>, 6> counts_{};
};

struct ClassStats {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    std::optional<double> precision, recall, specificity, f1;
};

/// F1 = 2PR / (P + R); absent when either input is absent, 0 when both are 0.
std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall);
ClassStats per_class_stats(const ConfusionMatrix& cm, ClassLabel label);

struct F1Summary {
    std::optional<double> macro_f1;  // over classes whose F1 is defined
    double micro_f1 = 0.0;
};
F1Summary macro_micro_f1(const ConfusionMatrix& cm);
/// Unweighted mean of the defined entries; absent when none is defined.
std::optional<double> macro_average(std::span<const std::optional<double>> values);

double pearson(std::span<const double> a, std::span<const double> b);
double mean_squared_error(std::span<const double> a, std::span<const double> b);

struct BlandAltman {
    double bias = 0.0;
    double sd = 0.0;  // sample SD of the differences
    double loa_low = 0.0;
    double loa_high = 0.0;
    std::vector<std::pair<double, double>> pairs;  // (mean, difference)

    double fraction_within() const;
    /// "mean,difference" rows for external plotting.
    std::string to_csv() const;
};
BlandAltman bland_altman(std::span<const double> a, std::span<const double> b);

/// QTc = QT / sqrt(RR), QT in ms and RR in s.
double bazett_qtc(double qt_ms, double rr_s);

struct StageSample {
    double preprocess_ms = 0.0;
    double inference_ms = 0.0;
    double svm_ms = 0.0;
    double total_ms = 0.0;
};

struct StageSummary {
    double median = 0.0;
    double p95 = 0.0;
};

struct LatencyProfile {
    StageSummary preprocess, inference, svm, total;
    int runs = 0;
};

inline constexpr int kLatencyWarmup = 5;
inline constexpr int kLatencyMinRuns = 30;

/// Medians and 95th percentiles (nearest rank) of warm runs; needs >= 30 samples.
LatencyProfile latency_profile(std::span<const StageSample> samples);
/// Discards kLatencyWarmup calls of `run_once`, then profiles `runs` more.
LatencyProfile profile(const std::function<StageSample()>& run_once, int runs = kLatencyMinRuns);

double median(std::vector<double> v);
double percentile(std::vector<double> v, double q);

} // namespace ecgcss::metrics
