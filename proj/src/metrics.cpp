#include "ecgcss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ecgcss/error.hpp"
#include "ecgcss/model_io.hpp"

namespace ecgcss::metrics {

int report_index(ClassLabel label) {
    for (std::size_t i = 0; i < kReportOrder.size(); ++i)
        if (kReportOrder[i] == label) return static_cast<int>(i);
    throw InvalidArgument("report_index: unknown label");
}

void ConfusionMatrix::add(ClassLabel truth, ClassLabel predicted, long long n) {
    if (n < 0) throw InvalidArgument("ConfusionMatrix: counts must be non-negative");
    counts_[static_cast<std::size_t>(report_index(truth))][static_cast<std::size_t>(report_index(predicted))] += n;
}

long long ConfusionMatrix::count(ClassLabel truth, ClassLabel predicted) const {
    return counts_[static_cast<std::size_t>(report_index(truth))][static_cast<std::size_t>(report_index(predicted))];
}

long long ConfusionMatrix::total() const {
    long long s = 0;
    for (const auto& r : counts_) s += std::accumulate(r.begin(), r.end(), 0LL);
    return s;
}

long long ConfusionMatrix::row_total(ClassLabel truth) const {
    const auto& r = counts_[static_cast<std::size_t>(report_index(truth))];
    return std::accumulate(r.begin(), r.end(), 0LL);
}

long long ConfusionMatrix::column_total(ClassLabel predicted) const {
    const auto c = static_cast<std::size_t>(report_index(predicted));
    long long s = 0;
    for (const auto& r : counts_) s += r[c];
    return s;
}

long long ConfusionMatrix::off_diagonal() const {
    long long s = total();
    for (std::size_t i = 0; i < counts_.size(); ++i) s -= counts_[i][i];
    return s;
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream os;
    os << "true\\pred";
    for (ClassLabel l : kReportOrder) os << ',' << label_char(l);
    os << '\n';
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        os << label_char(kReportOrder[i]);
        for (long long v : counts_[i]) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

namespace {

std::optional<double> ratio(long long num, long long den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall) {
    if (!precision || !recall) return std::nullopt;
    const double s = *precision + *recall;
    if (s == 0.0) return 0.0;
    return 2.0 * (*precision) * (*recall) / s;
}

ClassStats per_class_stats(const ConfusionMatrix& cm, ClassLabel label) {
    ClassStats s;
    s.tp = cm.count(label, label);
    s.fp = cm.column_total(label) - s.tp;
    s.fn = cm.row_total(label) - s.tp;
    s.tn = cm.total() - s.tp - s.fp - s.fn;
    s.precision = ratio(s.tp, s.tp + s.fp);
    s.recall = ratio(s.tp, s.tp + s.fn);
    s.specificity = ratio(s.tn, s.tn + s.fp);
    s.f1 = f1_score(s.precision, s.recall);
    return s;
}

std::optional<double> macro_average(std::span<const std::optional<double>> values) {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : values)
        if (v) {
            sum += *v;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

F1Summary macro_micro_f1(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DataError("macro_micro_f1: empty confusion matrix");
    std::vector<std::optional<double>> f1s;
    long long tp = 0, fp = 0, fn = 0;
    for (ClassLabel l : kReportOrder) {
        const auto s = per_class_stats(cm, l);
        f1s.push_back(s.f1);
        tp += s.tp;
        fp += s.fp;
        fn += s.fn;
    }
    F1Summary out;
    out.macro_f1 = macro_average(f1s);
    out.micro_f1 = f1_score(ratio(tp, tp + fp), ratio(tp, tp + fn)).value_or(0.0);
    return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("pearson: length mismatch");
    if (a.size() < 2) throw InvalidArgument("pearson: need at least two samples");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw DataError("pearson: constant input");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double mean_squared_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw InvalidArgument("mean_squared_error: empty or mismatched input");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double BlandAltman::fraction_within() const {
    if (pairs.empty()) return 0.0;
    const auto n = std::count_if(pairs.begin(), pairs.end(), [&](const auto& p) {
        return p.second >= loa_low && p.second <= loa_high;
    });
    return static_cast<double>(n) / static_cast<double>(pairs.size());
}

std::string BlandAltman::to_csv() const {
    std::string s = "mean,difference\n";
    for (const auto& [m, d] : pairs) s += format_double(m) + "," + format_double(d) + "\n";
    return s;
}

BlandAltman bland_altman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("bland_altman: length mismatch");
    if (a.size() < 2) throw InvalidArgument("bland_altman: need at least two pairs");
    BlandAltman r;
    const double n = static_cast<double>(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        r.pairs.emplace_back((a[i] + b[i]) / 2.0, a[i] - b[i]);
        sum += a[i] - b[i];
    }
    r.bias = sum / n;
    double ss = 0.0;
    for (const auto& p : r.pairs) ss += (p.second - r.bias) * (p.second - r.bias);
    r.sd = std::sqrt(ss / (n - 1.0));
    r.loa_low = r.bias - 1.96 * r.sd;
    r.loa_high = r.bias + 1.96 * r.sd;
    return r;
}

double bazett_qtc(double qt_ms, double rr_s) {
    if (!(rr_s > 0.0)) throw InvalidArgument("bazett_qtc: RR must be positive");
    return qt_ms / std::sqrt(rr_s);
}

double median(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw InvalidArgument("percentile: empty input");
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

LatencyProfile latency_profile(std::span<const StageSample> samples) {
    if (static_cast<int>(samples.size()) < kLatencyMinRuns)
        throw InvalidArgument("latency_profile: need at least " + std::to_string(kLatencyMinRuns) + " runs");
    std::vector<double> p, i, s, t;
    for (const auto& x : samples) {
        p.push_back(x.preprocess_ms);
        i.push_back(x.inference_ms);
        s.push_back(x.svm_ms);
        t.push_back(x.total_ms);
    }
    LatencyProfile out;
    out.preprocess = {median(p), percentile(p, 95)};
    out.inference = {median(i), percentile(i, 95)};
    out.svm = {median(s), percentile(s, 95)};
    out.total = {median(t), percentile(t, 95)};
    out.runs = static_cast<int>(samples.size());
    return out;
}

LatencyProfile profile(const std::function<StageSample()>& run_once, int runs) {
    if (runs < kLatencyMinRuns)
        throw InvalidArgument("profile: need at least " + std::to_string(kLatencyMinRuns) + " runs");
    for (int w = 0; w < kLatencyWarmup; ++w) run_once();
    std::vector<StageSample> samples;
    samples.reserve(static_cast<std::size_t>(runs));
    for (int r = 0; r < runs; ++r) samples.push_back(run_once());
    return latency_profile(samples);
}

} // namespace ecgcss::metrics
