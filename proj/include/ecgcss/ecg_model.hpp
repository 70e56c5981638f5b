#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ecgcss/error.hpp"

namespace ecgcss {

enum class LeadId : std::uint8_t { I, II, III, aVR, aVL, aVF, V1, V2, V3, V4, V5, V6 };

inline constexpr std::array<LeadId, 12> kAllLeads = {
    LeadId::I,  LeadId::II, LeadId::III, LeadId::aVR, LeadId::aVL, LeadId::aVF,
    LeadId::V1, LeadId::V2, LeadId::V3,  LeadId::V4,  LeadId::V5,  LeadId::V6};

// Order of the regression inputs X_i.
inline constexpr std::array<LeadId, 4> kKnownLeads = {LeadId::aVR, LeadId::II, LeadId::V2,
                                                      LeadId::V5};

inline constexpr std::array<LeadId, 8> kSynthesizedLeads = {
    LeadId::I, LeadId::III, LeadId::aVL, LeadId::aVF,
    LeadId::V1, LeadId::V3, LeadId::V4, LeadId::V6};

std::string_view lead_name(LeadId lead);
std::optional<LeadId> parse_lead(std::string_view name);
bool is_known_lead(LeadId lead);

enum class ClassLabel : std::uint8_t { N, H, D, A, M, L };

inline constexpr std::array<ClassLabel, 6> kAllLabels = {ClassLabel::N, ClassLabel::H,
                                                         ClassLabel::D, ClassLabel::A,
                                                         ClassLabel::M, ClassLabel::L};
inline constexpr int kNumClasses = 6;

char label_char(ClassLabel label);
std::optional<ClassLabel> parse_label(std::string_view text);
inline int label_index(ClassLabel label) { return static_cast<int>(label); }

/// Multi-lead sampled voltage record. Immutable once constructed; the
/// constructor enforces equal lead lengths (>= 2), fs > 0 and finite samples.
class EcgRecord {
public:
    EcgRecord(double fs, std::vector<LeadId> leads, std::vector<std::vector<double>> samples,
              std::string subject_id = {}, std::optional<ClassLabel> label = std::nullopt);

    double fs() const noexcept { return fs_; }
    const std::string& subject_id() const noexcept { return subject_id_; }
    const std::optional<ClassLabel>& label() const noexcept { return label_; }
    std::size_t size() const noexcept { return samples_.front().size(); }
    std::size_t lead_count() const noexcept { return leads_.size(); }
    const std::vector<LeadId>& leads() const noexcept { return leads_; }

    bool has_lead(LeadId lead) const noexcept;
    std::span<const double> lead(LeadId lead) const;
    std::span<const double> lead_at(std::size_t index) const { return samples_.at(index); }

    EcgRecord with_label(std::optional<ClassLabel> label) const;
    /// Keeps only the requested leads, in the requested order.
    EcgRecord select_leads(std::span<const LeadId> leads) const;

private:
    double fs_;
    std::vector<LeadId> leads_;
    std::vector<std::vector<double>> samples_;
    std::string subject_id_;
    std::optional<ClassLabel> label_;
};

/// One lead-aligned window around an R peak. Rows follow `leads`.
struct Beat {
    Eigen::MatrixXd samples;  // n_leads x beat_len
    std::vector<LeadId> leads;
    int r_index = 0;
    std::string source;
    std::optional<ClassLabel> label;

    int beat_len() const { return static_cast<int>(samples.cols()); }
    int lead_count() const { return static_cast<int>(samples.rows()); }
    /// Row index of `lead`, or -1.
    int row_of(LeadId lead) const;
    Eigen::VectorXd row(LeadId lead) const;
};

/// Returns the 4-lead beat {aVR, II, V2, V5}; throws if any is missing.
Beat to_known_leads(const Beat& beat);

struct DatasetSplit {
    std::vector<EcgRecord> train;
    std::vector<EcgRecord> validation;
    std::vector<EcgRecord> test;
};

struct SplitFractions {
    double train = 0.98;
    double validation = 0.01;
    double test = 0.01;
};

/// Seeded shuffle of unique subject ids, then greedy fill of train/val/test
/// by record count. Records sharing a subject id always land together.
DatasetSplit split_by_subject(std::span<const EcgRecord> records, std::uint64_t seed,
                              SplitFractions fractions = {});

EcgRecord load_record(const std::filesystem::path& path);
EcgRecord parse_record(std::string_view text, std::string subject_id = {});
void save_record(const EcgRecord& record, const std::filesystem::path& path);
std::string format_record(const EcgRecord& record);

} // namespace ecgcss
