#include "ecgcss/ecg_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace ecgcss {

namespace {

constexpr std::array<std::string_view, 12> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return value;
}

void append_double(std::string& out, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    out.append(buf, ptr);
}

} // namespace

std::string_view lead_name(LeadId lead) { return kLeadNames[static_cast<std::size_t>(lead)]; }

std::optional<LeadId> parse_lead(std::string_view name) {
    for (std::size_t i = 0; i < kLeadNames.size(); ++i)
        if (kLeadNames[i] == name) return static_cast<LeadId>(i);
    return std::nullopt;
}

bool is_known_lead(LeadId lead) {
    return std::find(kKnownLeads.begin(), kKnownLeads.end(), lead) != kKnownLeads.end();
}

char label_char(ClassLabel label) {
    constexpr std::array<char, 6> chars = {'N', 'H', 'D', 'A', 'M', 'L'};
    return chars[static_cast<std::size_t>(label)];
}

std::optional<ClassLabel> parse_label(std::string_view text) {
    text = trim(text);
    if (text.size() != 1) return std::nullopt;
    for (ClassLabel l : kAllLabels)
        if (label_char(l) == text.front()) return l;
    return std::nullopt;
}

EcgRecord::EcgRecord(double fs, std::vector<LeadId> leads,
                     std::vector<std::vector<double>> samples, std::string subject_id,
                     std::optional<ClassLabel> label)
    : fs_(fs), leads_(std::move(leads)), samples_(std::move(samples)),
      subject_id_(std::move(subject_id)), label_(label) {
    if (!(fs_ > 0.0) || !std::isfinite(fs_))
        throw InvalidArgument("EcgRecord: sampling rate must be positive");
    if (leads_.empty() || leads_.size() != samples_.size())
        throw InvalidArgument("EcgRecord: lead list and sample matrix disagree");
    for (std::size_t i = 0; i < leads_.size(); ++i)
        for (std::size_t j = i + 1; j < leads_.size(); ++j)
            if (leads_[i] == leads_[j])
                throw InvalidArgument("EcgRecord: duplicate lead " +
                                      std::string(lead_name(leads_[i])));
    const auto n = samples_.front().size();
    if (n < 2) throw InvalidArgument("EcgRecord: leads need at least 2 samples");
    for (const auto& s : samples_) {
        if (s.size() != n) throw InvalidArgument("EcgRecord: leads have unequal lengths");
        for (double v : s)
            if (!std::isfinite(v)) throw InvalidArgument("EcgRecord: non-finite sample");
    }
}

bool EcgRecord::has_lead(LeadId lead) const noexcept {
    return std::find(leads_.begin(), leads_.end(), lead) != leads_.end();
}

std::span<const double> EcgRecord::lead(LeadId lead) const {
    auto it = std::find(leads_.begin(), leads_.end(), lead);
    if (it == leads_.end())
        throw InvalidArgument("EcgRecord: lead " + std::string(lead_name(lead)) + " not present");
    return samples_[static_cast<std::size_t>(it - leads_.begin())];
}

EcgRecord EcgRecord::with_label(std::optional<ClassLabel> label) const {
    return EcgRecord(fs_, leads_, samples_, subject_id_, label);
}

EcgRecord EcgRecord::select_leads(std::span<const LeadId> leads) const {
    std::vector<std::vector<double>> rows;
    rows.reserve(leads.size());
    for (LeadId l : leads) {
        auto s = lead(l);
        rows.emplace_back(s.begin(), s.end());
    }
    return EcgRecord(fs_, std::vector<LeadId>(leads.begin(), leads.end()), std::move(rows),
                     subject_id_, label_);
}

int Beat::row_of(LeadId lead) const {
    auto it = std::find(leads.begin(), leads.end(), lead);
    return it == leads.end() ? -1 : static_cast<int>(it - leads.begin());
}

Eigen::VectorXd Beat::row(LeadId lead) const {
    int r = row_of(lead);
    if (r < 0) throw InvalidArgument("Beat: lead " + std::string(lead_name(lead)) + " not present");
    return samples.row(r).transpose();
}

Beat to_known_leads(const Beat& beat) {
    Beat out;
    out.samples.resize(4, beat.samples.cols());
    for (std::size_t i = 0; i < kKnownLeads.size(); ++i) {
        int r = beat.row_of(kKnownLeads[i]);
        if (r < 0) throw InvalidArgument("to_known_leads: beat lacks a known lead");
        out.samples.row(static_cast<Eigen::Index>(i)) = beat.samples.row(r);
    }
    out.leads.assign(kKnownLeads.begin(), kKnownLeads.end());
    out.r_index = beat.r_index;
    out.source = beat.source;
    out.label = beat.label;
    return out;
}

DatasetSplit split_by_subject(std::span<const EcgRecord> records, std::uint64_t seed,
                              SplitFractions fractions) {
    if (records.empty()) throw InvalidArgument("split_by_subject: no records");
    if (!(fractions.train > 0.0) || !(fractions.validation > 0.0) || !(fractions.test > 0.0))
        throw InvalidArgument("split_by_subject: fractions must be positive");
    if (std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9)
        throw InvalidArgument("split_by_subject: fractions must sum to 1");

    // Preserve first-appearance order before shuffling so the result depends
    // only on the input order and the seed.
    std::vector<std::string> subjects;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& m = members[records[i].subject_id()];
        if (m.empty()) subjects.push_back(records[i].subject_id());
        m.push_back(i);
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = subjects.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(subjects[i - 1], subjects[pick(rng)]);
    }

    const double n = static_cast<double>(records.size());
    const auto want_train = static_cast<std::size_t>(std::llround(fractions.train * n));
    const auto want_val = static_cast<std::size_t>(std::llround(fractions.validation * n));

    DatasetSplit split;
    for (const auto& s : subjects) {
        std::vector<EcgRecord>* dest = &split.test;
        if (split.train.size() < want_train)
            dest = &split.train;
        else if (split.validation.size() < want_val)
            dest = &split.validation;
        for (std::size_t idx : members[s]) dest->push_back(records[idx]);
    }
    return split;
}

EcgRecord parse_record(std::string_view text, std::string subject_id) {
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start <= text.size()) {
            auto pos = text.find('\n', start);
            auto line = text.substr(start, pos == std::string_view::npos ? text.size() - start
                                                                         : pos - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    }
    if (lines.size() < 2) throw ParseError(ParseErrc::MalformedHeader, "missing header lines");

    auto fs_line = trim(lines[0]);
    if (fs_line.substr(0, 3) != "fs=")
        throw ParseError(ParseErrc::MalformedHeader, "first line must be fs=<Hz>");
    auto fs = parse_double(fs_line.substr(3));
    if (!fs || !std::isfinite(*fs))
        throw ParseError(ParseErrc::MalformedHeader, "cannot parse sampling rate");
    if (*fs <= 0.0) throw ParseError(ParseErrc::NonPositiveFs, "sampling rate must be positive");

    std::vector<LeadId> leads;
    for (auto name : split_commas(lines[1])) {
        auto lead = parse_lead(name);
        if (!lead) throw ParseError(ParseErrc::UnknownLead, "unknown lead '" + std::string(name) + "'");
        if (std::find(leads.begin(), leads.end(), *lead) != leads.end())
            throw ParseError(ParseErrc::MalformedHeader, "duplicate lead '" + std::string(name) + "'");
        leads.push_back(*lead);
    }

    std::size_t row = 2;
    std::optional<ClassLabel> label;
    if (lines.size() > 2 && trim(lines[2]).substr(0, 6) == "label=") {
        label = parse_label(trim(lines[2]).substr(6));
        if (!label) throw ParseError(ParseErrc::BadLabel, "label must be one of N,H,D,A,M,L");
        row = 3;
    }

    std::vector<std::vector<double>> samples(leads.size());
    for (; row < lines.size(); ++row) {
        auto fields = split_commas(lines[row]);
        if (fields.size() != leads.size())
            throw ParseError(ParseErrc::RaggedRow,
                             "row " + std::to_string(row + 1) + " has " +
                                 std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(leads.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            auto v = parse_double(fields[c]);
            if (!v)
                throw ParseError(ParseErrc::BadNumber,
                                 "row " + std::to_string(row + 1) + ": not a number");
            if (!std::isfinite(*v))
                throw ParseError(ParseErrc::NonFiniteSample,
                                 "row " + std::to_string(row + 1) + ": non-finite sample");
            samples[c].push_back(*v);
        }
    }
    if (samples.front().size() < 2)
        throw ParseError(ParseErrc::TooFewSamples, "record needs at least 2 sample rows");
    return EcgRecord(*fs, std::move(leads), std::move(samples), std::move(subject_id), label);
}

EcgRecord load_record(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseErrc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_record(ss.str(), path.stem().string());
}

std::string format_record(const EcgRecord& record) {
    std::string out = "fs=";
    append_double(out, record.fs());
    out += '\n';
    for (std::size_t i = 0; i < record.lead_count(); ++i) {
        if (i) out += ',';
        out += lead_name(record.leads()[i]);
    }
    out += '\n';
    if (record.label()) {
        out += "label=";
        out += label_char(*record.label());
        out += '\n';
    }
    for (std::size_t t = 0; t < record.size(); ++t) {
        for (std::size_t i = 0; i < record.lead_count(); ++i) {
            if (i) out += ',';
            append_double(out, record.lead_at(i)[t]);
        }
        out += '\n';
    }
    return out;
}

void save_record(const EcgRecord& record, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_record(record);
    if (!out) throw DataError("write failed for " + path.string());
}

} // namespace ecgcss
