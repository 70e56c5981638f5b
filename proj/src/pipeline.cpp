#include "ecgcss/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "ecgcss/error.hpp"
#include "ecgcss/model_io.hpp"
#include "ecgcss/segmentation.hpp"

namespace ecgcss::pipeline {

namespace {

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

double to_double(std::string_view key, std::string_view v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
        throw InvalidArgument("config: '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    return out;
}

long long to_int(std::string_view key, std::string_view v) {
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw InvalidArgument("config: '" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw InvalidArgument("config: '" + std::string(key) + "' expects 0/1/true/false");
}

template <typename T, typename F>
std::vector<T> to_list(std::string_view v, F&& parse) {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        auto pos = v.find(',', start);
        auto item = trim(v.substr(start, pos == std::string_view::npos ? v.size() - start : pos - start));
        out.push_back(parse(item));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
    const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<Beat> capped(std::vector<Beat> beats, int cap) {
    if (cap > 0 && static_cast<int>(beats.size()) > cap) beats.resize(static_cast<std::size_t>(cap));
    return beats;
}

/// Beats of every record, in record order, each list capped.
std::vector<std::vector<Beat>> beats_per_record(const std::vector<EcgRecord>& records, const PipelineConfig& cfg,
                                                int cap) {
    std::vector<std::vector<Beat>> out(records.size());
    parallel_for(records.size(), cfg.jobs, [&](std::size_t i) { out[i] = capped(extract_beats(records[i], cfg), cap); });
    return out;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::span<const double> row_span(const std::vector<double>& v) { return {v.data(), v.size()}; }

} // namespace

// ---------------------------------------------------------------------------

void PipelineConfig::sync() {
    upscaler.seed = seed;
    upscaler.jobs = jobs;
    taes.seed = seed;
    taes.beat_len = pre + post + 1;
}

void PipelineConfig::validate() const {
    if (pre < 0 || post < 0) throw InvalidArgument("config: pre/post must be non-negative");
    if (jobs < 1) throw InvalidArgument("config: jobs must be positive");
    if (folds < 2) throw InvalidArgument("config: folds must be at least 2");
    if (c_grid.empty()) throw InvalidArgument("config: c_grid must not be empty");
    for (double c : c_grid)
        if (!(c > 0.0)) throw InvalidArgument("config: every C must be positive");
    if (gamma && !(*gamma > 0.0)) throw InvalidArgument("config: gamma must be positive");
    if (upscaler_beats_per_record < 0 || taes_beats_per_record < 0 || svm_beats_per_record < 0)
        throw InvalidArgument("config: beat caps must be non-negative");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw InvalidArgument("config: holdout_fraction must lie in (0, 1)");
    if (!(mape_floor > 0.0)) throw InvalidArgument("config: mape_floor must be positive");
    upscaler.validate();
    taes.validate();
    if (taes.beat_len != pre + post + 1) throw InvalidArgument("config: TAES beat_len must equal pre + post + 1");
}

KeyValues parse_config_text(std::string_view text) {
    KeyValues out;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key=value");
        out.emplace_back(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
    return out;
}

bool apply_config_key(PipelineConfig& cfg, std::string_view raw_key, std::string_view v) {
    std::string key(raw_key);
    std::replace(key.begin(), key.end(), '-', '_');
    if (preprocess::apply_filter_key(cfg.filter, key, v)) return true;
    auto& up = cfg.upscaler;
    auto& ta = cfg.taes;
    auto as_int = [&] { return static_cast<int>(to_int(key, v)); };
    if (key == "seed") {
        const long long s = to_int(key, v);
        if (s < 0) throw InvalidArgument("config: seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "jobs") cfg.jobs = as_int();
    else if (key == "pre") cfg.pre = as_int();
    else if (key == "post") cfg.post = as_int();
    else if (key == "folds") cfg.folds = as_int();
    else if (key == "gamma") {
        if (v == "auto") cfg.gamma.reset();
        else cfg.gamma = to_double(key, v);
    }
    else if (key == "c_grid") cfg.c_grid = to_list<double>(v, [&](const std::string& s) { return to_double(key, s); });
    else if (key == "upscaler_beats_per_record") cfg.upscaler_beats_per_record = as_int();
    else if (key == "taes_beats_per_record") cfg.taes_beats_per_record = as_int();
    else if (key == "svm_beats_per_record") cfg.svm_beats_per_record = as_int();
    else if (key == "holdout_fraction") cfg.holdout_fraction = to_double(key, v);
    else if (key == "mape_floor") cfg.mape_floor = to_double(key, v);
    else if (key == "up_learning_rate") up.learning_rate = to_double(key, v);
    else if (key == "up_l1") up.l1_lambda = to_double(key, v);
    else if (key == "up_epochs") up.epochs = as_int();
    else if (key == "up_validation_every") up.validation_every = as_int();
    else if (key == "up_patience") up.patience = as_int();
    else if (key == "up_batch_size") up.batch_size = as_int();
    else if (key == "up_final_lr_fraction") up.final_lr_fraction = to_double(key, v);
    else if (key == "wavelet_level") cfg.wavelet.level = as_int();
    else if (key == "wavelet_boundary") cfg.wavelet.boundary = wavelet::parse_boundary(v);
    else if (key == "taes_preset") {
        const int beat_len = ta.beat_len;
        ta = taes::TaesConfig::from_preset(v);
        ta.beat_len = beat_len;
    } else if (key == "d_model") ta.d_model = as_int();
    else if (key == "n_heads") ta.n_heads = as_int();
    else if (key == "n_layers") ta.n_layers = as_int();
    else if (key == "schedule") ta.schedule = to_list<int>(v, [&](const std::string& s) { return static_cast<int>(to_int(key, s)); });
    else if (key == "kernel") ta.kernel = as_int();
    else if (key == "pool") ta.pool = as_int();
    else if (key == "n_leads") ta.n_leads = as_int();
    else if (key == "taes_epochs") ta.epochs_per_layer = as_int();
    else if (key == "taes_batch_size") ta.batch_size = as_int();
    else if (key == "taes_learning_rate") ta.learning_rate = to_double(key, v);
    else if (key == "transformer_lr") ta.transformer_lr = to_double(key, v);
    else if (key == "taes_l1") ta.l1_lambda = to_double(key, v);
    else if (key == "taes_validation_every") ta.validation_every = as_int();
    else if (key == "fine_tune_epochs") ta.fine_tune_epochs = as_int();
    else if (key == "fine_tune_lr") ta.fine_tune_lr = to_double(key, v);
    else if (key == "allow_expanding_schedule") ta.allow_expanding_schedule = to_bool(key, v);
    else return false;
    return true;
}

void apply_config(PipelineConfig& cfg, const KeyValues& entries) {
    auto is_preset = [](const std::string& k) { return k == "taes_preset" || k == "taes-preset"; };
    for (const auto& [k, v] : entries)
        if (is_preset(k)) apply_config_key(cfg, k, v);
    for (const auto& [k, v] : entries)
        if (!is_preset(k) && !apply_config_key(cfg, k, v))
            throw InvalidArgument("config: unknown key '" + k + "'");
}

KeyValues config_entries(const PipelineConfig& cfg) {
    auto ints = [](const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    std::string grid;
    for (std::size_t i = 0; i < cfg.c_grid.size(); ++i) grid += (i ? "," : "") + format_double(cfg.c_grid[i]);
    const auto& f = cfg.filter;
    const auto& up = cfg.upscaler;
    const auto& ta = cfg.taes;
    return {
        {"seed", std::to_string(cfg.seed)},
        {"band_low", format_double(f.band_low)},
        {"band_high", format_double(f.band_high)},
        {"notch", format_double(f.notch)},
        {"target_fs", format_double(f.target_fs)},
        {"butterworth_order", std::to_string(f.butterworth_order)},
        {"notch_q", format_double(f.notch_q)},
        {"per_lead_rescale", f.per_lead_rescale ? "1" : "0"},
        {"pre", std::to_string(cfg.pre)},
        {"post", std::to_string(cfg.post)},
        {"up_learning_rate", format_double(up.learning_rate)},
        {"up_l1", format_double(up.l1_lambda)},
        {"up_epochs", std::to_string(up.epochs)},
        {"up_validation_every", std::to_string(up.validation_every)},
        {"up_patience", std::to_string(up.patience)},
        {"up_batch_size", std::to_string(up.batch_size)},
        {"up_final_lr_fraction", format_double(up.final_lr_fraction)},
        {"wavelet_level", std::to_string(cfg.wavelet.level)},
        {"wavelet_boundary", std::string(wavelet::boundary_name(cfg.wavelet.boundary))},
        {"taes_preset", ta.preset},
        {"d_model", std::to_string(ta.d_model)},
        {"n_heads", std::to_string(ta.n_heads)},
        {"n_layers", std::to_string(ta.n_layers)},
        {"schedule", ints(ta.schedule)},
        {"kernel", std::to_string(ta.kernel)},
        {"pool", std::to_string(ta.pool)},
        {"n_leads", std::to_string(ta.n_leads)},
        {"taes_epochs", std::to_string(ta.epochs_per_layer)},
        {"taes_batch_size", std::to_string(ta.batch_size)},
        {"taes_learning_rate", format_double(ta.learning_rate)},
        {"transformer_lr", format_double(ta.transformer_lr)},
        {"taes_l1", format_double(ta.l1_lambda)},
        {"taes_validation_every", std::to_string(ta.validation_every)},
        {"fine_tune_epochs", std::to_string(ta.fine_tune_epochs)},
        {"fine_tune_lr", format_double(ta.fine_tune_lr)},
        {"c_grid", grid},
        {"folds", std::to_string(cfg.folds)},
        {"gamma", cfg.gamma ? format_double(*cfg.gamma) : "auto"},
        {"upscaler_beats_per_record", std::to_string(cfg.upscaler_beats_per_record)},
        {"taes_beats_per_record", std::to_string(cfg.taes_beats_per_record)},
        {"svm_beats_per_record", std::to_string(cfg.svm_beats_per_record)},
        {"holdout_fraction", format_double(cfg.holdout_fraction)},
        {"mape_floor", format_double(cfg.mape_floor)},
    };
}

// ---------------------------------------------------------------------------

std::vector<EcgRecord> load_dataset(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw ParseError(ParseErrc::Io, "dataset directory '" + dir.string() + "' does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<EcgRecord> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(load_record(f));
    if (out.empty()) throw DataError("dataset directory '" + dir.string() + "' contains no .csv records");
    return out;
}

Beat normalize_beat(const Beat& beat) {
    Beat out = beat;
    const Eigen::VectorXd means = beat.samples.rowwise().mean();
    out.samples = beat.samples.colwise() - means;
    double ss = 0.0;
    Eigen::Index count = 0;
    for (LeadId l : kKnownLeads) {
        const int r = out.row_of(l);
        if (r < 0) continue;
        ss += out.samples.row(r).squaredNorm();
        count += out.samples.cols();
    }
    if (count == 0) {
        ss = out.samples.squaredNorm();
        count = out.samples.size();
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 1e-12)) throw DataError("normalize_beat: flat beat");
    out.samples /= sd;
    return out;
}

std::vector<Beat> extract_beats(const EcgRecord& raw, const PipelineConfig& cfg) {
    const EcgRecord rec = preprocess::preprocess_record(raw, cfg.filter);
    const auto peaks = segmentation::detect_r_peaks(rec.lead(segmentation::detection_lead(rec)), rec.fs());
    std::vector<Beat> out;
    for (auto& b : segmentation::segment_beats(rec, peaks, cfg.pre, cfg.post)) {
        try {
            out.push_back(normalize_beat(b));
        } catch (const DataError&) {
            // flat windows carry no morphology
        }
    }
    return out;
}

Holdout holdout_split(const std::vector<EcgRecord>& records, const PipelineConfig& cfg) {
    if (records.empty()) throw DataError("no records");
    SplitFractions f;
    f.train = 1.0 - cfg.holdout_fraction;
    f.validation = cfg.holdout_fraction * 0.5;
    f.test = cfg.holdout_fraction * 0.5;
    auto split = split_by_subject(records, cfg.seed, f);
    Holdout h;
    h.train = std::move(split.train);
    h.validation = std::move(split.validation);
    for (auto& r : split.test) h.validation.push_back(std::move(r));
    if (h.train.empty()) {
        h.train = std::move(h.validation);
        h.validation.clear();
    }
    return h;
}

upscaler::UpscalerModel fit_upscaler(const std::vector<EcgRecord>& records, const PipelineConfig& cfg) {
    for (const auto& r : records)
        if (r.lead_count() != kAllLeads.size())
            throw DataError("upscaler training needs 12-lead records; '" + r.subject_id() + "' has " +
                            std::to_string(r.lead_count()));
    const Holdout h = holdout_split(records, cfg);
    std::vector<Beat> train, val;
    for (auto& v : beats_per_record(h.train, cfg, cfg.upscaler_beats_per_record))
        train.insert(train.end(), v.begin(), v.end());
    for (auto& v : beats_per_record(h.validation, cfg, cfg.upscaler_beats_per_record))
        val.insert(val.end(), v.begin(), v.end());
    if (train.empty()) throw DataError("no beats detected in the training records");
    return upscaler::train_upscaler(train, val, cfg.upscaler, cfg.wavelet);
}

std::vector<Beat> to_twelve_lead(const std::vector<Beat>& beats, const upscaler::UpscalerModel& up, bool* bypassed) {
    std::vector<Beat> out;
    out.reserve(beats.size());
    bool all_twelve = true;
    for (const auto& b : beats) {
        bool twelve = b.lead_count() == static_cast<int>(kAllLeads.size());
        for (LeadId l : kAllLeads) twelve = twelve && b.row_of(l) >= 0;
        all_twelve = all_twelve && twelve;
        out.push_back(twelve ? b : upscaler::upscale(up, to_known_leads(b)));
    }
    if (bypassed) *bypassed = !beats.empty() && all_twelve;
    return out;
}

taes::TaesModel fit_taes(const std::vector<EcgRecord>& records, const upscaler::UpscalerModel& up,
                         const PipelineConfig& cfg) {
    const Holdout h = holdout_split(records, cfg);
    // The encoder sees what inference will see: upscaled 4-lead beats.
    auto resynth = [&](const std::vector<EcgRecord>& recs) {
        std::vector<Beat> out;
        for (auto& v : beats_per_record(recs, cfg, cfg.taes_beats_per_record))
            for (auto& b : v) out.push_back(upscaler::upscale(up, to_known_leads(b)));
        return out;
    };
    const auto train = resynth(h.train);
    const auto val = resynth(h.validation);
    if (train.empty()) throw DataError("no beats detected in the training records");
    return taes::train_taes(train, val, cfg.taes);
}

SvmFit fit_svm(const std::vector<EcgRecord>& records, const upscaler::UpscalerModel& up, const taes::TaesModel& taes,
               const PipelineConfig& cfg) {
    for (const auto& r : records)
        if (!r.label()) throw DataError("SVM training needs labeled records; '" + r.subject_id() + "' has no label");
    std::vector<Beat> beats;
    for (auto& v : beats_per_record(records, cfg, cfg.svm_beats_per_record))
        for (auto& b : v) beats.push_back(upscaler::upscale(up, to_known_leads(b)));
    if (beats.empty()) throw DataError("no beats detected in the training records");
    const auto latents = taes::encode_batch(taes, beats, cfg.jobs);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(latents.size()), static_cast<Eigen::Index>(latents.front().values.size()));
    std::vector<ClassLabel> y;
    for (std::size_t i = 0; i < latents.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::RowVectorXd>(latents[i].values.data(), static_cast<Eigen::Index>(latents[i].values.size()));
        y.push_back(*beats[i].label);
    }
    SvmFit fit;
    fit.gamma = cfg.gamma ? *cfg.gamma : svm::default_gamma(x);
    fit.grid = svm::grid_search_c(x, y, fit.gamma, cfg.c_grid, cfg.folds, cfg.seed, {}, cfg.jobs);
    fit.model = svm::train_ovo(x, y, fit.gamma, fit.grid.best_c, {}, cfg.jobs);
    return fit;
}

// ---------------------------------------------------------------------------

RecordReport classify_record(const EcgRecord& raw, const ModelSet& models, const PipelineConfig& cfg) {
    RecordReport rep;
    rep.subject = raw.subject_id();
    rep.truth = raw.label();
    const auto t0 = std::chrono::steady_clock::now();
    const auto beats = extract_beats(raw, cfg);
    rep.timing.preprocess_ms = ms_since(t0);
    if (beats.empty()) throw DataError("no beats detected in record '" + raw.subject_id() + "'");

    const auto t1 = std::chrono::steady_clock::now();
    const auto full = to_twelve_lead(beats, models.upscaler, &rep.upscaling_bypassed);
    const auto latents = taes::encode_batch(models.taes, full, 1);
    rep.timing.inference_ms = ms_since(t1);

    const auto t2 = std::chrono::steady_clock::now();
    std::vector<ClassLabel> labels;
    for (std::size_t i = 0; i < latents.size(); ++i) {
        BeatResult br;
        br.r_index_in_record = beats[i].r_index;
        br.votes = svm::classify_votes(models.svm, row_span(latents[i].values));
        labels.push_back(br.votes.winner);
        rep.beats.push_back(br);
    }
    rep.verdict = svm::label_record(labels);
    rep.timing.svm_ms = ms_since(t2);
    rep.timing.total_ms = ms_since(t0);
    return rep;
}

metrics::StageSample time_one_second(const EcgRecord& raw, const Beat& beat, const ModelSet& models,
                                     const PipelineConfig& cfg) {
    const auto n = std::min<std::size_t>(raw.size(), static_cast<std::size_t>(std::lround(raw.fs())));
    std::vector<std::vector<double>> excerpt;
    for (std::size_t l = 0; l < raw.lead_count(); ++l) {
        auto s = raw.lead_at(l);
        excerpt.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n));
    }
    const EcgRecord window(raw.fs(), raw.leads(), std::move(excerpt), raw.subject_id());
    metrics::StageSample s;
    const auto t0 = std::chrono::steady_clock::now();
    const auto pre = preprocess::preprocess_record(window, cfg.filter);
    s.preprocess_ms = ms_since(t0);
    const auto t1 = std::chrono::steady_clock::now();
    const auto full = to_twelve_lead({beat}, models.upscaler);
    const auto latent = taes::encode(models.taes, full.front());
    s.inference_ms = ms_since(t1);
    const auto t2 = std::chrono::steady_clock::now();
    const auto label = svm::classify(models.svm, row_span(latent.values));
    s.svm_ms = ms_since(t2);
    s.total_ms = ms_since(t0);
    (void)pre;
    (void)label;
    return s;
}

EvaluationReport evaluate(const std::vector<EcgRecord>& records, const ModelSet& models, const PipelineConfig& cfg,
                          int latency_runs) {
    if (records.empty()) throw DataError("evaluate: no records");
    for (const auto& r : records)
        if (!r.label()) throw DataError("evaluate: record '" + r.subject_id() + "' is unlabeled");
    EvaluationReport rep;
    rep.records.resize(records.size());
    parallel_for(records.size(), cfg.jobs, [&](std::size_t i) { rep.records[i] = classify_record(records[i], models, cfg); });
    for (const auto& r : rep.records) {
        rep.record_confusion.add(*r.truth, r.verdict);
        for (const auto& b : r.beats) rep.beat_confusion.add(*r.truth, b.votes.winner);
    }

    std::vector<Beat> twelve;
    for (const auto& r : records)
        if (r.lead_count() == kAllLeads.size()) {
            auto b = extract_beats(r, cfg);
            twelve.insert(twelve.end(), b.begin(), b.end());
        }
    if (!twelve.empty()) rep.mape = upscaler::evaluate_mape(models.upscaler, twelve, cfg.mape_floor);

    if (latency_runs > 0) {
        const auto beats = extract_beats(records.front(), cfg);
        if (beats.empty()) throw DataError("evaluate: no beat available for latency profiling");
        rep.latency = metrics::profile([&] { return time_one_second(records.front(), beats.front(), models, cfg); },
                                       latency_runs);
    }
    return rep;
}

} // namespace ecgcss::pipeline
