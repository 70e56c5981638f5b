#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "ecgcss/error.hpp"
#include "ecgcss/pipeline.hpp"
#include "ecgcss/synth.hpp"
#include "fixtures.hpp"

using namespace ecgcss;
using namespace ecgcss::pipeline;

namespace {

PipelineConfig small_config() {
    PipelineConfig cfg;
    apply_config(cfg, parse_config_text("up_epochs=30\n"
                                        "taes_epochs=2\n"
                                        "taes_beats_per_record=3\n"
                                        "svm_beats_per_record=4\n"
                                        "holdout_fraction=0.2\n"
                                        "folds=2\n"));
    cfg.sync();
    cfg.validate();
    return cfg;
}

std::vector<EcgRecord> corpus(int n, std::uint64_t seed) {
    std::vector<EcgRecord> out;
    for (int k = 0; k < n; ++k) out.push_back(synth::generate(fixture::record_spec(k, seed, 30.0)).record);
    return out;
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config text parsing") {
    const auto kv = parse_config_text("# comment\n\n seed = 7 \nc_grid=0.5,2\r\ntaes-preset=beat1200\n");
    REQUIRE(kv.size() == 3);
    CHECK(kv[0] == std::pair<std::string, std::string>{"seed", "7"});
    CHECK(kv[1].second == "0.5,2");
    CHECK_THROWS_AS(parse_config_text("seed 7\n"), InvalidArgument);

    PipelineConfig cfg;
    // Later fields override the preset regardless of order.
    apply_config(cfg, parse_config_text("d_model=48\ntaes_preset=beat1200\nseed=7\nc_grid=0.5,2\ngamma=0.25\n"));
    CHECK(cfg.taes.preset == "beat1200");
    CHECK(cfg.taes.d_model == 48);
    CHECK(cfg.seed == 7);
    CHECK(cfg.c_grid == std::vector<double>{0.5, 2.0});
    CHECK(*cfg.gamma == 0.25);
    cfg.sync();
    CHECK(cfg.upscaler.seed == 7);
    CHECK(cfg.taes.seed == 7);
    CHECK(cfg.taes.beat_len == 100);

    CHECK(apply_config_key(cfg, "band-low", "4"));
    CHECK(cfg.filter.band_low == 4.0);
    CHECK_FALSE(apply_config_key(cfg, "no_such_key", "1"));
    CHECK_THROWS_AS(apply_config(cfg, {{"no_such_key", "1"}}), InvalidArgument);
    CHECK_THROWS_AS(apply_config_key(cfg, "seed", "-1"), InvalidArgument);
    CHECK_THROWS_AS(apply_config_key(cfg, "folds", "two"), InvalidArgument);
    CHECK_THROWS_AS(apply_config_key(cfg, "gamma", "1e999"), InvalidArgument);
    CHECK_THROWS_AS(apply_config_key(cfg, "allow_expanding_schedule", "maybe"), InvalidArgument);
    CHECK_THROWS_AS(apply_config_key(cfg, "taes_preset", "huge"), InvalidArgument);
}

TEST_CASE("config entries round trip") {
    PipelineConfig a;
    apply_config(a, parse_config_text("seed=11\njobs=2\nc_grid=0.1,3\nwavelet_boundary=periodization\n"
                                      "wavelet_level=2\nup_l1=0.002\nfolds=4\ngamma=0.125\nnotch=50\n"));
    a.sync();
    PipelineConfig b;
    apply_config(b, config_entries(a));
    b.sync();
    CHECK(config_entries(b) == config_entries(a));
    CHECK(b.wavelet.level == 2);
    CHECK(*b.gamma == 0.125);

    PipelineConfig d;
    d.sync();
    PipelineConfig e;
    e.gamma = 3.0;
    apply_config(e, config_entries(d));
    CHECK_FALSE(e.gamma.has_value());
}

TEST_CASE("config validation") {
    auto bad = [](const char* text) {
        PipelineConfig cfg;
        apply_config(cfg, parse_config_text(text));
        cfg.sync();
        CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    };
    bad("jobs=0");
    bad("folds=1");
    bad("c_grid=1,-2");
    bad("gamma=0");
    bad("holdout_fraction=1");
    bad("mape_floor=0");
    bad("svm_beats_per_record=-1");
    bad("up_learning_rate=-1");
    PipelineConfig cfg;
    cfg.pre = 30;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg.sync();
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("beat normalization uses the pooled known-lead scale") {
    std::mt19937_64 rng(2);
    Beat b;
    b.leads.assign(kAllLeads.begin(), kAllLeads.end());
    b.samples = Eigen::MatrixXd::Random(12, 100) * 3.0;
    b.samples.array() += 5.0;
    const Beat n = normalize_beat(b);
    double ss = 0.0;
    for (LeadId l : kKnownLeads) {
        const Eigen::VectorXd r = n.row(l);
        CHECK(std::abs(r.mean()) <= 1e-12);
        ss += r.squaredNorm();
    }
    CHECK(ss / 400.0 == doctest::Approx(1.0).epsilon(1e-12));
    for (int r = 0; r < 12; ++r) CHECK(std::abs(n.samples.row(r).mean()) <= 1e-12);

    // Uniform scaling and offsets do not change the result.
    Beat scaled = b;
    scaled.samples = b.samples * 7.5;
    scaled.samples.row(3).array() -= 2.0;
    const Beat n2 = normalize_beat(scaled);
    CHECK((n2.samples - n.samples).cwiseAbs().maxCoeff() <= 1e-9);

    Beat flat = b;
    flat.samples.setConstant(1.0);
    CHECK_THROWS_AS(normalize_beat(flat), DataError);
}

TEST_CASE("beat extraction on a synthetic record") {
    PipelineConfig cfg;
    cfg.sync();
    synth::SynthSpec s;
    s.label = ClassLabel::L;
    s.bpm = 75.0;
    s.duration = 10.0;
    const auto res = synth::generate(s);
    const auto beats = extract_beats(res.record, cfg);
    // 12.5 beats in 10 s; first and last lack a full window.
    CHECK(beats.size() >= 10);
    CHECK(beats.size() <= 12);
    for (const auto& b : beats) {
        CHECK(b.beat_len() == 100);
        CHECK(b.lead_count() == 12);
        CHECK(b.label == ClassLabel::L);
        CHECK(b.samples.allFinite());
    }
    const EcgRecord four = res.record.select_leads(kKnownLeads);
    const auto fb = extract_beats(four, cfg);
    CHECK(fb.size() == beats.size());
    CHECK(fb.front().lead_count() == 4);
}

TEST_CASE("holdout keeps subjects apart") {
    PipelineConfig cfg;
    cfg.holdout_fraction = 0.2;
    const auto recs = corpus(20, 3);
    const Holdout h = holdout_split(recs, cfg);
    CHECK(h.train.size() + h.validation.size() == 20);
    CHECK(h.validation.size() >= 2);
    std::set<std::string> train_ids;
    for (const auto& r : h.train) train_ids.insert(r.subject_id());
    for (const auto& r : h.validation) CHECK(train_ids.count(r.subject_id()) == 0);
    const Holdout again = holdout_split(recs, cfg);
    REQUIRE(again.validation.size() == h.validation.size());
    for (std::size_t i = 0; i < h.validation.size(); ++i)
        CHECK(again.validation[i].subject_id() == h.validation[i].subject_id());
    CHECK_THROWS_AS(holdout_split({}, cfg), DataError);
}

TEST_CASE("dataset loading") {
    const auto dir = std::filesystem::temp_directory_path() / "ecgcss_pipeline_dataset";
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_dataset(dir), ParseError);
    std::filesystem::create_directories(dir);
    CHECK_THROWS_AS(load_dataset(dir), DataError);
    const auto recs = corpus(3, 4);
    save_record(recs[2], dir / "b.csv");
    save_record(recs[0], dir / "a.csv");
    const auto loaded = load_dataset(dir);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].size() == recs[0].size());
    CHECK(loaded[0].label() == recs[0].label());
    CHECK(loaded[1].label() == recs[2].label());
    std::filesystem::remove_all(dir);
}

TEST_CASE("training stages reject unusable input") {
    PipelineConfig cfg = small_config();
    auto recs = corpus(4, 5);
    std::vector<EcgRecord> four;
    for (const auto& r : recs) four.push_back(r.select_leads(kKnownLeads));
    CHECK_THROWS_AS(fit_upscaler(four, cfg), DataError);
    upscaler::UpscalerModel up;
    up.wavelet = cfg.wavelet;
    up.beat_len = 100;
    for (LeadId l : kSynthesizedLeads) up.per_lead[l].resize(static_cast<std::size_t>(up.band_count()));
    const taes::TaesModel taes(cfg.taes);
    std::vector<EcgRecord> unlabeled{recs[0].with_label(std::nullopt)};
    CHECK_THROWS_AS(fit_svm(unlabeled, up, taes, cfg), DataError);
}

TEST_CASE("small end-to-end run") {
    PipelineConfig cfg = small_config();
    const auto recs = corpus(18, 6);
    const auto up = fit_upscaler(recs, cfg);
    const auto taes = fit_taes(recs, up, cfg);
    const auto svm = fit_svm(recs, up, taes, cfg);
    CHECK(svm.model.machines.size() == 15);
    CHECK(svm.gamma > 0.0);
    CHECK(svm.grid.accuracy.size() == cfg.c_grid.size());
    const ModelSet models{up, taes, svm.model};

    const RecordReport twelve = classify_record(recs[0], models, cfg);
    CHECK(twelve.upscaling_bypassed);
    CHECK_FALSE(twelve.beats.empty());
    const RecordReport four = classify_record(recs[0].select_leads(kKnownLeads), models, cfg);
    CHECK_FALSE(four.upscaling_bypassed);
    CHECK(four.beats.size() == twelve.beats.size());
    for (const auto& b : four.beats) {
        int total = 0;
        for (int v : b.votes.votes) total += v;
        CHECK(total == 15);
    }

    std::vector<std::vector<double>> zeros(12, std::vector<double>(2500, 0.0));
    const EcgRecord silent(250.0, std::vector<LeadId>(kAllLeads.begin(), kAllLeads.end()), zeros, "flat", ClassLabel::N);
    CHECK_THROWS_AS(classify_record(silent, models, cfg), DataError);

    const std::vector<EcgRecord> eval(recs.begin(), recs.begin() + 6);
    const EvaluationReport rep = evaluate(eval, models, cfg, metrics::kLatencyMinRuns);
    CHECK(rep.record_confusion.total() == 6);
    long long beats = 0;
    for (const auto& r : rep.records) beats += static_cast<long long>(r.beats.size());
    CHECK(rep.beat_confusion.total() == beats);
    CHECK(rep.mape.size() == 8);
    REQUIRE(rep.latency.has_value());
    CHECK(rep.latency->runs == metrics::kLatencyMinRuns);
    CHECK(rep.latency->total.median > 0.0);

    const EvaluationReport again = evaluate(eval, models, cfg);
    CHECK(again.beat_confusion.counts() == rep.beat_confusion.counts());
    CHECK_FALSE(again.latency.has_value());
    CHECK_THROWS_AS(evaluate({recs[0].with_label(std::nullopt)}, models, cfg), DataError);
}

}
