#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecgcss/classifier.hpp"
#include "ecgcss/ecg_model.hpp"
#include "ecgcss/metrics.hpp"
#include "ecgcss/preprocess.hpp"
#include "ecgcss/taes.hpp"
#include "ecgcss/upscaler.hpp"

namespace ecgcss::pipeline {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct PipelineConfig {
    preprocess::FilterSpec filter;
    upscaler::TrainConfig upscaler;
    upscaler::WaveletConfig wavelet;
    taes::TaesConfig taes;
    std::vector<double> c_grid = svm::kDefaultCGrid;
    int folds = 5;
    std::optional<double> gamma;  // default: 1 / (dim * var)
    int pre = 49;
    int post = 50;
    std::uint64_t seed = 1;
    int jobs = 1;
    int upscaler_beats_per_record = 0;  // 0 keeps every beat
    int taes_beats_per_record = 6;
    int svm_beats_per_record = 6;
    double holdout_fraction = 0.1;  // records held out for validation during training
    double mape_floor = 0.05;

    /// Pushes the global seed, job count and beat length into every component config.
    void sync();
    void validate() const;
};

/// `key=value` lines; blank lines and lines starting with '#' are ignored.
KeyValues parse_config_text(std::string_view text);
/// Applies one entry; returns false for an unknown key. Keys use snake_case;
/// dashes are accepted in place of underscores.
bool apply_config_key(PipelineConfig& cfg, std::string_view key, std::string_view value);
/// Applies taes_preset entries first so later fields override the preset.
void apply_config(PipelineConfig& cfg, const KeyValues& entries);
KeyValues config_entries(const PipelineConfig& cfg);

/// Every *.csv under `dir`, sorted by file name.
std::vector<EcgRecord> load_dataset(const std::filesystem::path& dir);

/// Removes each lead's mean and divides all leads by the pooled standard
/// deviation of the known leads present (all leads when none is known).
Beat normalize_beat(const Beat& beat);

/// preprocess -> R peaks on the detection lead -> windows -> normalize_beat.
std::vector<Beat> extract_beats(const EcgRecord& raw, const PipelineConfig& cfg);

struct Holdout {
    std::vector<EcgRecord> train;
    std::vector<EcgRecord> validation;
};
Holdout holdout_split(const std::vector<EcgRecord>& records, const PipelineConfig& cfg);

upscaler::UpscalerModel fit_upscaler(const std::vector<EcgRecord>& records, const PipelineConfig& cfg);

/// 12-lead beats pass through unchanged (bypassed = true); 4-lead beats are upscaled.
std::vector<Beat> to_twelve_lead(const std::vector<Beat>& beats, const upscaler::UpscalerModel& up,
                                 bool* bypassed = nullptr);

taes::TaesModel fit_taes(const std::vector<EcgRecord>& records, const upscaler::UpscalerModel& up,
                         const PipelineConfig& cfg);

struct SvmFit {
    svm::OvoSvmModel model;
    svm::GridSearchResult grid;
    double gamma = 0.0;
};
SvmFit fit_svm(const std::vector<EcgRecord>& records, const upscaler::UpscalerModel& up,
               const taes::TaesModel& taes, const PipelineConfig& cfg);

struct ModelSet {
    const upscaler::UpscalerModel& upscaler;
    const taes::TaesModel& taes;
    const svm::OvoSvmModel& svm;
};

struct BeatResult {
    int r_index_in_record = 0;
    svm::VoteResult votes;
};

struct RecordReport {
    std::string subject;
    std::optional<ClassLabel> truth;
    bool upscaling_bypassed = false;
    std::vector<BeatResult> beats;
    ClassLabel verdict = ClassLabel::N;
    metrics::StageSample timing;  // wall-clock, not part of deterministic reports
};

/// Throws DataError when no beat is detected.
RecordReport classify_record(const EcgRecord& raw, const ModelSet& models, const PipelineConfig& cfg);

/// One timed pass over a one-second excerpt: preprocessing of the excerpt, then
/// upscaling + encoding and SVM prediction of one beat of the record.
metrics::StageSample time_one_second(const EcgRecord& raw, const Beat& beat, const ModelSet& models,
                                     const PipelineConfig& cfg);

struct EvaluationReport {
    metrics::ConfusionMatrix beat_confusion;
    metrics::ConfusionMatrix record_confusion;
    std::vector<RecordReport> records;
    std::map<LeadId, double> mape;  // empty without 12-lead records
    std::optional<metrics::LatencyProfile> latency;
};

/// Requires labeled records. Latency profiling runs `latency_runs` warm passes
/// (plus warm-up) when latency_runs > 0.
EvaluationReport evaluate(const std::vector<EcgRecord>& records, const ModelSet& models,
                          const PipelineConfig& cfg, int latency_runs = 0);

} // namespace ecgcss::pipeline
