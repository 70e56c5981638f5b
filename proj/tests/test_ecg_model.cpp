#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "ecgcss/ecg_model.hpp"

using namespace ecgcss;

namespace {

EcgRecord ramp_record(std::string subject, std::size_t n = 10) {
    std::vector<std::vector<double>> s(2, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        s[0][i] = 0.001 * static_cast<double>(i);
        s[1][i] = -0.5 + 1e-3 * static_cast<double>(i * i);
    }
    return EcgRecord(250.0, {LeadId::II, LeadId::V2}, s, std::move(subject));
}

ParseErrc parse_code(const std::string& text) {
    try {
        parse_record(text);
    } catch (const ParseError& e) {
        return e.code();
    }
    FAIL("expected a parse error");
    return ParseErrc::Io;
}

} // namespace

TEST_SUITE("ecg_model") {

TEST_CASE("lead sets") {
    CHECK(kAllLeads.size() == 12);
    std::set<LeadId> all(kAllLeads.begin(), kAllLeads.end());
    CHECK(all.size() == 12);
    std::set<LeadId> known(kKnownLeads.begin(), kKnownLeads.end());
    CHECK(known == std::set<LeadId>{LeadId::II, LeadId::aVR, LeadId::V2, LeadId::V5});
    std::set<LeadId> synth(kSynthesizedLeads.begin(), kSynthesizedLeads.end());
    CHECK(synth == std::set<LeadId>{LeadId::I, LeadId::III, LeadId::aVL, LeadId::aVF, LeadId::V1, LeadId::V3,
                                    LeadId::V4, LeadId::V6});
    for (LeadId l : kAllLeads) {
        CHECK(parse_lead(lead_name(l)) == l);
        CHECK(is_known_lead(l) == known.count(l) > 0);
    }
    CHECK_FALSE(parse_lead("X9").has_value());
}

TEST_CASE("labels") {
    CHECK(kAllLabels.size() == 6);
    for (ClassLabel l : kAllLabels) CHECK(parse_label(std::string(1, label_char(l))) == l);
    CHECK_FALSE(parse_label("Q").has_value());
}

TEST_CASE("record invariants") {
    CHECK_THROWS_AS(EcgRecord(0.0, {LeadId::I}, {{1.0, 2.0}}), InvalidArgument);
    CHECK_THROWS_AS(EcgRecord(250.0, {LeadId::I}, {{1.0}}), InvalidArgument);
    CHECK_THROWS_AS(EcgRecord(250.0, {LeadId::I, LeadId::II}, {{1.0, 2.0}, {1.0}}), InvalidArgument);
    CHECK_THROWS_AS(EcgRecord(250.0, {LeadId::I}, {{1.0, std::nan("")}}), InvalidArgument);
    CHECK_THROWS_AS(EcgRecord(250.0, {LeadId::I, LeadId::I}, {{1.0, 2.0}, {1.0, 2.0}}), InvalidArgument);
    const auto r = ramp_record("a");
    CHECK(r.size() == 10);
    CHECK(r.has_lead(LeadId::V2));
    CHECK_FALSE(r.has_lead(LeadId::V1));
    CHECK_THROWS_AS(r.lead(LeadId::V1), InvalidArgument);
}

TEST_CASE("two-lead csv with 500 rows") {
    std::string text = "fs=250\nII,V5\n";
    for (int i = 0; i < 500; ++i) text += std::to_string(0.01 * i) + "," + std::to_string(-0.02 * i) + "\n";
    const auto r = parse_record(text);
    CHECK(r.lead_count() == 2);
    CHECK(r.size() == 500);
    CHECK(r.fs() == 250.0);
    CHECK(r.lead(LeadId::V5)[10] == doctest::Approx(-0.2));
    CHECK_FALSE(r.label().has_value());
}

TEST_CASE("csv label line and CRLF") {
    const auto r = parse_record("fs=100\r\nI,II\r\nlabel=H\r\n1,2\r\n3,4\r\n");
    CHECK(r.label() == ClassLabel::H);
    CHECK(r.lead(LeadId::II)[1] == 4.0);
}

TEST_CASE("csv errors are distinct") {
    CHECK(parse_code("fs=250\nII,X9\n1,2\n3,4\n") == ParseErrc::UnknownLead);
    CHECK(parse_code("fs=250\nII,V2\n1,2\n3\n") == ParseErrc::RaggedRow);
    CHECK(parse_code("rate=250\nII\n1\n2\n") == ParseErrc::MalformedHeader);
    CHECK(parse_code("fs=-5\nII\n1\n2\n") == ParseErrc::NonPositiveFs);
    CHECK(parse_code("fs=250\nII\nlabel=Z\n1\n2\n") == ParseErrc::BadLabel);
    CHECK(parse_code("fs=250\nII\n1\nabc\n") == ParseErrc::BadNumber);
    CHECK(parse_code("fs=250\nII\n1\ninf\n") == ParseErrc::NonFiniteSample);
    CHECK(parse_code("fs=250\nII\n1\n") == ParseErrc::TooFewSamples);
    CHECK_THROWS_AS(load_record("/nonexistent/file.csv"), ParseError);
}

TEST_CASE("save/load round trip is bit-identical") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> s(3, std::vector<double>(64));
    for (auto& lead : s)
        for (auto& v : lead) v = g(rng) * 1e-3 + g(rng);
    EcgRecord r(257.3, {LeadId::aVR, LeadId::V6, LeadId::III}, s, "x", ClassLabel::M);
    const auto path = std::filesystem::temp_directory_path() / "ecgcss_roundtrip.csv";
    save_record(r, path);
    const auto back = load_record(path);
    CHECK(back.fs() == r.fs());
    CHECK(back.leads() == r.leads());
    CHECK(back.label() == ClassLabel::M);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t i = 0; i < 64; ++i) CHECK(back.lead_at(l)[i] == r.lead_at(l)[i]);
    save_record(back, path);
    const auto again = load_record(path);
    for (std::size_t i = 0; i < 64; ++i) CHECK(again.lead_at(1)[i] == r.lead_at(1)[i]);
    std::filesystem::remove(path);
}

TEST_CASE("select_leads and beats") {
    const auto r = ramp_record("a");
    const auto s = r.select_leads(std::vector<LeadId>{LeadId::V2});
    CHECK(s.lead_count() == 1);
    Beat b;
    b.samples = Eigen::MatrixXd::Random(12, 100);
    b.leads.assign(kAllLeads.begin(), kAllLeads.end());
    CHECK(b.row_of(LeadId::V5) == 10);
    const auto k = to_known_leads(b);
    CHECK(k.lead_count() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(k.row(kKnownLeads[i]) == b.row(kKnownLeads[i]));
    Beat partial = k;
    partial.samples.conservativeResize(3, Eigen::NoChange);
    partial.leads.pop_back();
    CHECK_THROWS_AS(to_known_leads(partial), InvalidArgument);
}

TEST_CASE("split 100 records 98/1/1 with seed 7") {
    std::vector<EcgRecord> recs;
    for (int i = 0; i < 100; ++i) recs.push_back(ramp_record("s" + std::to_string(i)));
    const auto sp = split_by_subject(recs, 7, {0.98, 0.01, 0.01});
    CHECK(sp.train.size() == 98);
    CHECK(sp.validation.size() == 1);
    CHECK(sp.test.size() == 1);
    const auto again = split_by_subject(recs, 7, {0.98, 0.01, 0.01});
    for (std::size_t i = 0; i < sp.train.size(); ++i) CHECK(sp.train[i].subject_id() == again.train[i].subject_id());
    CHECK(sp.test.front().subject_id() == again.test.front().subject_id());
}

TEST_CASE("single record lands in one split") {
    std::vector<EcgRecord> recs{ramp_record("only")};
    const auto sp = split_by_subject(recs, 1, {0.5, 0.25, 0.25});
    CHECK(sp.train.size() + sp.validation.size() + sp.test.size() == 1);
}

TEST_CASE("split errors") {
    std::vector<EcgRecord> none;
    CHECK_THROWS_AS(split_by_subject(none, 1), InvalidArgument);
    std::vector<EcgRecord> recs{ramp_record("a")};
    CHECK_THROWS_AS(split_by_subject(recs, 1, {0.5, 0.3, 0.3}), InvalidArgument);
    CHECK_THROWS_AS(split_by_subject(recs, 1, {1.0, 0.0, 0.0}), InvalidArgument);
}

TEST_CASE("property: splits are subject-disjoint for any seed") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> count(1, 60), subj(0, 19);
        std::vector<EcgRecord> recs;
        const int n = count(rng);
        for (int i = 0; i < n; ++i) recs.push_back(ramp_record("p" + std::to_string(subj(rng))));
        const auto sp = split_by_subject(recs, rng(), {0.8, 0.1, 0.1});
        std::set<std::string> a, b, c;
        for (auto& r : sp.train) a.insert(r.subject_id());
        for (auto& r : sp.validation) b.insert(r.subject_id());
        for (auto& r : sp.test) c.insert(r.subject_id());
        for (auto& s : a) CHECK((b.count(s) == 0 && c.count(s) == 0));
        for (auto& s : b) CHECK(c.count(s) == 0);
        CHECK(sp.train.size() + sp.validation.size() + sp.test.size() == recs.size());
    }
}

} // TEST_SUITE
