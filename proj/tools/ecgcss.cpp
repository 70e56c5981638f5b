// ecgcss: command-line front end for the screening pipeline.
//
//   ecgcss synth           --out DIR [--label X|all] [--count N] ...
//   ecgcss train-upscaler  --data DIR --out MODEL
//   ecgcss train-taes      --data DIR --upscaler MODEL --out MODEL
//   ecgcss train-svm       --data DIR --upscaler MODEL --taes MODEL --out MODEL
//   ecgcss upscale         --input CSV --upscaler MODEL --out CSV
//   ecgcss classify        --input CSV --upscaler M --taes M --svm M [--out JSON]
//   ecgcss evaluate        --data DIR --upscaler M --taes M --svm M --out DIR
//
// Exit codes: 0 success, 2 usage error, 3 data or I/O error.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecgcss/error.hpp"
#include "ecgcss/metrics.hpp"
#include "ecgcss/model_io.hpp"
#include "ecgcss/pipeline.hpp"
#include "ecgcss/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ecgcss;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr const char* kConfigEnv = "ECGCSS_CONFIG";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ParseError(ParseErrc::Io, "cannot read '" + p.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path() && !fs::is_directory(p.parent_path()))
        throw ParseError(ParseErrc::Io, "output directory '" + p.parent_path().string() + "' does not exist");
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ParseError(ParseErrc::Io, "cannot write '" + p.string() + "'");
    out << text;
    if (!out) throw ParseError(ParseErrc::Io, "write failed for '" + p.string() + "'");
}

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) throw ParseError(ParseErrc::Io, std::string(what) + " '" + p.string() + "' not found");
}

std::string kebab(std::string s) {
    for (char& c : s)
        if (c == '_') c = '-';
    return s;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// Config file, then kebab-cased flag overrides, then --jobs.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> overrides;
    int jobs = 0;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "key=value config file (default: $ECGCSS_CONFIG)");
        app->add_option("--jobs", jobs, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
        pipeline::PipelineConfig defaults;
        defaults.sync();
        for (const auto& [key, value] : pipeline::config_entries(defaults))
            app->add_option("--" + kebab(key), overrides[key], "default " + value);
    }

    pipeline::PipelineConfig build() const {
        pipeline::PipelineConfig cfg;
        std::string path = config_path;
        if (path.empty())
            if (const char* env = std::getenv(kConfigEnv)) path = env;
        try {
            if (!path.empty()) {
                require_file(path, "config file");
                pipeline::apply_config(cfg, pipeline::parse_config_text(read_text(path)));
            }
            pipeline::KeyValues flags;
            for (const auto& [k, v] : overrides)
                if (!v.empty()) flags.emplace_back(k, v);
            pipeline::apply_config(cfg, flags);
            cfg.jobs = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
            cfg.sync();
            cfg.validate();
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
        return cfg;
    }
};

std::string loss_log(const std::vector<upscaler::EpochLoss>& rows) {
    std::string s = "epoch,train_loss,val_loss\n";
    for (const auto& r : rows)
        s += std::to_string(r.epoch) + "," + format_double(r.train_mse) + "," +
             (r.val_mse ? format_double(*r.val_mse) : "") + "\n";
    return s;
}

std::string loss_log(const std::vector<taes::LayerLoss>& rows) {
    std::string s = "stage,epoch,train_loss,val_loss\n";
    for (const auto& r : rows)
        s += r.stage + "," + std::to_string(r.epoch) + "," + format_double(r.train_mse) + "," +
             (r.val_mse ? format_double(*r.val_mse) : "") + "\n";
    return s;
}

void write_manifest_for(const fs::path& model, const std::string& kind, const pipeline::PipelineConfig& cfg,
                        std::size_t records, const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    std::vector<std::pair<std::string, std::string>> entries = {{"kind", kind},
                                                                {"model", model.filename().string()},
                                                                {"records", std::to_string(records)}};
    entries.insert(entries.end(), extra.begin(), extra.end());
    for (auto& e : pipeline::config_entries(cfg)) entries.push_back(e);
    write_manifest(fs::path(model.string() + ".manifest"), entries);
}

fs::path log_path(const fs::path& model, const std::string& flag) {
    return flag.empty() ? fs::path(model.string() + ".log.csv") : fs::path(flag);
}

void check_output_parent(const fs::path& p) {
    if (p.has_parent_path() && !fs::is_directory(p.parent_path()))
        throw ParseError(ParseErrc::Io, "output directory '" + p.parent_path().string() + "' does not exist");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::string label = "N";
    int count = 1;
    std::string prefix = "rec";
    double fs = 250.0;
    double duration = 10.0;
    double bpm = 60.0;
    double bpm_jitter = 0.0;
    double morphology_jitter = 0.0;
    double bpm_spread = 0.0;
    std::string snr = "inf";
    double powerline = 0.0;
    double powerline_hz = 60.0;
    std::uint64_t seed = 1;
    int leads = 12;
    bool cubic = false;
    std::uint64_t cubic_seed = 7;
    int cubic_degree = 3;
};

int cmd_synth(const SynthArgs& a) {
    const fs::path dir(a.out);
    if (!fs::is_directory(dir)) throw ParseError(ParseErrc::Io, "output directory '" + a.out + "' does not exist");
    if (a.leads != 12 && a.leads != 4) throw UsageError("--leads must be 12 or 4");
    std::vector<ClassLabel> labels;
    if (a.label == "all") {
        labels.assign(kAllLabels.begin(), kAllLabels.end());
    } else {
        auto l = parse_label(a.label);
        if (!l) throw UsageError("unknown label '" + a.label + "'");
        labels = {*l};
    }
    double snr = std::numeric_limits<double>::infinity();
    if (a.snr != "inf") {
        try {
            snr = std::stod(a.snr);
        } catch (const std::exception&) {
            throw UsageError("--snr expects a number or 'inf'");
        }
    }
    if (a.cubic_degree < 1 || a.cubic_degree > 3) throw UsageError("--cubic-degree must be 1, 2 or 3");
    auto maps = synth::random_cubic_maps(a.cubic_seed);
    for (auto& [lead, m] : maps)
        for (auto& row : m.coeffs)
            for (int p = a.cubic_degree; p < 3; ++p) row[static_cast<std::size_t>(p)] = 0.0;
    const int width = static_cast<int>(std::to_string(std::max(1, a.count * static_cast<int>(labels.size()) - 1)).size());
    int index = 0;
    for (int i = 0; i < a.count; ++i)
        for (ClassLabel label : labels) {
            std::ostringstream name;
            name << a.prefix << '_' << std::setw(width) << std::setfill('0') << index;
            synth::SynthSpec spec;
            spec.fs = a.fs;
            spec.duration = a.duration;
            spec.bpm = a.bpm + a.bpm_spread * static_cast<double>(index % 7) / 6.0;
            spec.bpm_jitter = a.bpm_jitter;
            spec.morphology_jitter = a.morphology_jitter;
            spec.snr_db = snr;
            spec.powerline_mv = a.powerline;
            spec.powerline_hz = a.powerline_hz;
            spec.label = label;
            spec.seed = a.seed * 1000003ULL + static_cast<std::uint64_t>(index);
            spec.subject_id = name.str();
            try {
                spec.validate();
            } catch (const InvalidArgument& e) {
                throw UsageError(e.what());
            }
            auto result = a.cubic ? synth::generate_cubic_linked(spec, maps) : synth::generate(spec);
            EcgRecord rec = a.leads == 4 ? result.record.select_leads(kKnownLeads) : result.record;
            save_record(rec, dir / (name.str() + ".csv"));

            json side;
            side["subject"] = spec.subject_id;
            side["label"] = std::string(1, label_char(label));
            side["fs"] = spec.fs;
            side["leads"] = a.leads;
            side["peaks"] = result.true_peaks.indices;
            json gen;
            gen["duration_s"] = spec.duration;
            gen["bpm"] = spec.bpm;
            gen["bpm_jitter"] = spec.bpm_jitter;
            gen["morphology_jitter"] = spec.morphology_jitter;
            gen["snr_db"] = std::isfinite(snr) ? json(snr) : json("inf");
            gen["powerline_mv"] = spec.powerline_mv;
            gen["powerline_hz"] = spec.powerline_hz;
            gen["seed"] = spec.seed;
            gen["cubic_linked"] = a.cubic;
            if (a.cubic) {
                gen["cubic_seed"] = a.cubic_seed;
                gen["cubic_degree"] = a.cubic_degree;
            }
            side["generation"] = gen;
            write_text(dir / (name.str() + ".json"), side.dump(2) + "\n");
            ++index;
        }
    std::cout << "wrote " << index << " records to " << dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct ModelPaths {
    std::string upscaler, taes, svm;
};

int cmd_train_upscaler(const pipeline::PipelineConfig& cfg, const std::string& data, const fs::path& out,
                       const std::string& log) {
    check_output_parent(out);
    const auto records = pipeline::load_dataset(data);
    const auto model = pipeline::fit_upscaler(records, cfg);
    model.save(out);
    write_text(log_path(out, log), loss_log(model.history));
    write_manifest_for(out, std::string(upscaler::kUpscalerKind), cfg, records.size(),
                       {{"final_val_mse", format_double(model.final_val_mse)}});
    std::cout << "upscaler: " << records.size() << " records, final val MSE " << format_double(model.final_val_mse)
              << "\n";
    return kExitOk;
}

int cmd_train_taes(const pipeline::PipelineConfig& cfg, const std::string& data, const ModelPaths& m,
                   const fs::path& out, const std::string& log) {
    check_output_parent(out);
    require_file(m.upscaler, "upscaler model");
    const auto up = upscaler::UpscalerModel::load(m.upscaler);
    const auto records = pipeline::load_dataset(data);
    const auto model = pipeline::fit_taes(records, up, cfg);
    model.save(out);
    write_text(log_path(out, log), loss_log(model.history));
    write_manifest_for(out, std::string(taes::kTaesKind), cfg, records.size(),
                       {{"latent_dim", std::to_string(cfg.taes.latent_dim())}});
    std::cout << "taes: " << records.size() << " records, latent dim " << cfg.taes.latent_dim() << "\n";
    return kExitOk;
}

int cmd_train_svm(const pipeline::PipelineConfig& cfg, const std::string& data, const ModelPaths& m,
                  const fs::path& out, const std::string& log) {
    check_output_parent(out);
    require_file(m.upscaler, "upscaler model");
    require_file(m.taes, "TAES model");
    const auto up = upscaler::UpscalerModel::load(m.upscaler);
    const auto tm = taes::TaesModel::load(m.taes);
    const auto records = pipeline::load_dataset(data);
    const auto fit = pipeline::fit_svm(records, up, tm, cfg);
    fit.model.save(out);
    std::string grid = "c,cv_accuracy\n";
    for (const auto& [c, acc] : fit.grid.accuracy) grid += format_double(c) + "," + format_double(acc) + "\n";
    write_text(log_path(out, log), grid);
    write_manifest_for(out, std::string(svm::kSvmKind), cfg, records.size(),
                       {{"gamma", format_double(fit.gamma)}, {"best_c", format_double(fit.grid.best_c)}});
    for (const auto& w : fit.model.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "svm: gamma " << format_double(fit.gamma) << ", C " << format_double(fit.grid.best_c) << ", "
              << fit.model.machines.size() << " machines\n";
    return kExitOk;
}

int cmd_upscale(const pipeline::PipelineConfig& cfg, const std::string& input, const std::string& model,
                const fs::path& out) {
    check_output_parent(out);
    require_file(input, "input record");
    require_file(model, "upscaler model");
    const auto up = upscaler::UpscalerModel::load(model);
    const auto rec = load_record(input);
    const auto beats = pipeline::extract_beats(rec, cfg);
    if (beats.empty()) throw DataError("no beats detected in '" + input + "'");
    bool bypassed = false;
    const auto full = pipeline::to_twelve_lead(beats, up, &bypassed);
    std::ostringstream os;
    os << "beat,r_index,sample";
    for (LeadId l : kAllLeads) os << ',' << lead_name(l);
    os << '\n';
    for (std::size_t b = 0; b < full.size(); ++b)
        for (int t = 0; t < full[b].beat_len(); ++t) {
            os << b << ',' << full[b].r_index << ',' << t;
            for (LeadId l : kAllLeads) os << ',' << format_double(full[b].samples(full[b].row_of(l), t));
            os << '\n';
        }
    write_text(out, os.str());
    std::cout << full.size() << " beats" << (bypassed ? " (upscaling bypassed: 12-lead input)" : "") << "\n";
    return kExitOk;
}

json record_json(const pipeline::RecordReport& r) {
    json j;
    j["subject"] = r.subject;
    j["truth"] = r.truth ? json(std::string(1, label_char(*r.truth))) : json(nullptr);
    j["verdict"] = std::string(1, label_char(r.verdict));
    j["upscaling_bypassed"] = r.upscaling_bypassed;
    json beats = json::array();
    for (const auto& b : r.beats) {
        json jb;
        jb["r_index"] = b.r_index_in_record;
        jb["label"] = std::string(1, label_char(b.votes.winner));
        json votes;
        for (ClassLabel l : kAllLabels) votes[std::string(1, label_char(l))] = b.votes.votes[static_cast<std::size_t>(label_index(l))];
        jb["votes"] = votes;
        beats.push_back(jb);
    }
    j["beats"] = beats;
    return j;
}

json timing_json(const metrics::StageSample& s) {
    return json{{"preprocess_ms", s.preprocess_ms}, {"inference_ms", s.inference_ms}, {"svm_ms", s.svm_ms},
                {"total_ms", s.total_ms}};
}

struct LoadedModels {
    upscaler::UpscalerModel up;
    taes::TaesModel taes;
    svm::OvoSvmModel svm;
};

LoadedModels load_models(const ModelPaths& m) {
    require_file(m.upscaler, "upscaler model");
    require_file(m.taes, "TAES model");
    require_file(m.svm, "SVM model");
    return {upscaler::UpscalerModel::load(m.upscaler), taes::TaesModel::load(m.taes), svm::OvoSvmModel::load(m.svm)};
}

int cmd_classify(const pipeline::PipelineConfig& cfg, const std::string& input, const ModelPaths& paths,
                 const std::string& out) {
    if (!out.empty()) check_output_parent(out);
    require_file(input, "input record");
    const auto models = load_models(paths);
    const auto rec = load_record(input);
    const auto report = pipeline::classify_record(rec, {models.up, models.taes, models.svm}, cfg);
    const json j = record_json(report);
    if (!out.empty()) write_text(out, j.dump(2) + "\n");
    json summary;
    summary["verdict"] = j["verdict"];
    summary["beats"] = report.beats.size();
    summary["upscaling_bypassed"] = report.upscaling_bypassed;
    summary["stage_latency"] = timing_json(report.timing);
    if (out.empty()) summary["report"] = j;
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

std::string stats_csv(const metrics::ConfusionMatrix& cm) {
    std::string s = "class,tp,fp,fn,tn,precision,recall,specificity,f1\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (ClassLabel l : metrics::kReportOrder) {
        const auto st = metrics::per_class_stats(cm, l);
        s += std::string(1, label_char(l)) + "," + std::to_string(st.tp) + "," + std::to_string(st.fp) + "," +
             std::to_string(st.fn) + "," + std::to_string(st.tn) + "," + opt(st.precision) + "," + opt(st.recall) +
             "," + opt(st.specificity) + "," + opt(st.f1) + "\n";
    }
    return s;
}

json summary_json(const metrics::ConfusionMatrix& cm) {
    json j;
    json per;
    for (ClassLabel l : metrics::kReportOrder) {
        const auto st = metrics::per_class_stats(cm, l);
        per[std::string(1, label_char(l))] = {{"precision", optional_json(st.precision)},
                                              {"recall", optional_json(st.recall)},
                                              {"specificity", optional_json(st.specificity)},
                                              {"f1", optional_json(st.f1)}};
    }
    const auto f1 = metrics::macro_micro_f1(cm);
    j["per_class"] = per;
    j["macro_f1"] = optional_json(f1.macro_f1);
    j["micro_f1"] = f1.micro_f1;
    j["misidentifications"] = cm.off_diagonal();
    return j;
}

int cmd_evaluate(const pipeline::PipelineConfig& cfg, const std::string& data, const ModelPaths& paths,
                 const fs::path& out, int latency_runs) {
    if (!fs::is_directory(out)) throw ParseError(ParseErrc::Io, "output directory '" + out.string() + "' does not exist");
    const auto models = load_models(paths);
    const auto records = pipeline::load_dataset(data);
    const auto rep = pipeline::evaluate(records, {models.up, models.taes, models.svm}, cfg, latency_runs);

    write_text(out / "confusion_beats.csv", rep.beat_confusion.to_csv());
    write_text(out / "confusion_records.csv", rep.record_confusion.to_csv());
    write_text(out / "class_stats_beats.csv", stats_csv(rep.beat_confusion));
    write_text(out / "class_stats_records.csv", stats_csv(rep.record_confusion));
    std::string mape = "lead,mape_percent\n";
    for (LeadId l : kSynthesizedLeads)
        if (auto it = rep.mape.find(l); it != rep.mape.end())
            mape += std::string(lead_name(l)) + "," + format_double(it->second) + "\n";
    write_text(out / "mape.csv", mape);

    json j;
    j["records"] = records.size();
    j["mape_floor"] = cfg.mape_floor;
    j["beats"] = summary_json(rep.beat_confusion);
    j["record_level"] = summary_json(rep.record_confusion);
    json mj;
    for (const auto& [l, v] : rep.mape) mj[std::string(lead_name(l))] = v;
    j["mape_percent"] = mj;
    json rj = json::array();
    for (const auto& r : rep.records) rj.push_back(record_json(r));
    j["per_record"] = rj;
    write_text(out / "report.json", j.dump(2) + "\n");

    if (rep.latency) {
        const auto& p = *rep.latency;
        auto stage = [](const metrics::StageSummary& s) { return json{{"median_ms", s.median}, {"p95_ms", s.p95}}; };
        json lj{{"runs", p.runs},
                {"preprocess", stage(p.preprocess)},
                {"inference", stage(p.inference)},
                {"svm", stage(p.svm)},
                {"total", stage(p.total)}};
        write_text(out / "latency.json", lj.dump(2) + "\n");
        std::cout << "latency median total " << format_double(p.total.median) << " ms\n";
    }
    std::cout << "records " << records.size() << ", beat misidentifications " << rep.beat_confusion.off_diagonal()
              << ", record misidentifications " << rep.record_confusion.off_diagonal() << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECG screening pipeline: lead upscaling, beat encoding and classification"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synth", "write synthetic ECG records with ground-truth sidecars");
    synth_cmd->add_option("--out", sa.out, "existing output directory")->required();
    synth_cmd->add_option("--label", sa.label, "class label N/H/D/A/M/L or 'all'");
    synth_cmd->add_option("--count", sa.count, "records per label")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--prefix", sa.prefix, "file name prefix");
    synth_cmd->add_option("--fs", sa.fs, "sampling rate in Hz");
    synth_cmd->add_option("--duration", sa.duration, "record length in s");
    synth_cmd->add_option("--bpm", sa.bpm, "heart rate");
    synth_cmd->add_option("--bpm-spread", sa.bpm_spread, "heart rate range spread over records");
    synth_cmd->add_option("--bpm-jitter", sa.bpm_jitter, "relative SD of RR intervals");
    synth_cmd->add_option("--morphology-jitter", sa.morphology_jitter, "relative SD of wave amplitudes");
    synth_cmd->add_option("--snr", sa.snr, "white-noise SNR in dB, or inf");
    synth_cmd->add_option("--powerline", sa.powerline, "powerline amplitude in mV");
    synth_cmd->add_option("--powerline-hz", sa.powerline_hz, "powerline frequency");
    synth_cmd->add_option("--seed", sa.seed, "generator seed");
    synth_cmd->add_option("--leads", sa.leads, "12 or 4");
    synth_cmd->add_flag("--cubic", sa.cubic, "derive the 8 missing leads from seeded cubic maps of the known leads");
    synth_cmd->add_option("--cubic-seed", sa.cubic_seed, "seed of the cubic maps");
    synth_cmd->add_option("--cubic-degree", sa.cubic_degree, "highest power kept in the cubic maps");

    std::string data, out, log, input;
    ModelPaths mp;
    int latency_runs = 0;
    ConfigFlags cf_up, cf_taes, cf_svm, cf_upscale, cf_classify, cf_eval;

    auto* up_cmd = app.add_subcommand("train-upscaler", "fit the 4-to-12-lead upscaler");
    up_cmd->add_option("--data", data, "directory of 12-lead CSV records")->required();
    up_cmd->add_option("--out", out, "model file")->required();
    up_cmd->add_option("--log", log, "training log CSV (default MODEL.log.csv)");
    cf_up.attach(up_cmd);

    auto* taes_cmd = app.add_subcommand("train-taes", "fit the transformer autoencoder");
    taes_cmd->add_option("--data", data, "directory of 12-lead CSV records")->required();
    taes_cmd->add_option("--upscaler", mp.upscaler, "upscaler model")->required();
    taes_cmd->add_option("--out", out, "model file")->required();
    taes_cmd->add_option("--log", log, "training log CSV (default MODEL.log.csv)");
    cf_taes.attach(taes_cmd);

    auto* svm_cmd = app.add_subcommand("train-svm", "fit the one-vs-one SVM on encoded beats");
    svm_cmd->add_option("--data", data, "directory of labeled CSV records")->required();
    svm_cmd->add_option("--upscaler", mp.upscaler, "upscaler model")->required();
    svm_cmd->add_option("--taes", mp.taes, "TAES model")->required();
    svm_cmd->add_option("--out", out, "model file")->required();
    svm_cmd->add_option("--log", log, "grid-search CSV (default MODEL.log.csv)");
    cf_svm.attach(svm_cmd);

    auto* upscale_cmd = app.add_subcommand("upscale", "reconstruct 12-lead beats from a 4-lead record");
    upscale_cmd->add_option("--input", input, "record CSV")->required();
    upscale_cmd->add_option("--upscaler", mp.upscaler, "upscaler model")->required();
    upscale_cmd->add_option("--out", out, "beats CSV")->required();
    cf_upscale.attach(upscale_cmd);

    auto* classify_cmd = app.add_subcommand("classify", "classify every beat of one record");
    classify_cmd->add_option("--input", input, "record CSV")->required();
    classify_cmd->add_option("--upscaler", mp.upscaler, "upscaler model")->required();
    classify_cmd->add_option("--taes", mp.taes, "TAES model")->required();
    classify_cmd->add_option("--svm", mp.svm, "SVM model")->required();
    classify_cmd->add_option("--out", out, "report JSON (default: stdout)");
    cf_classify.attach(classify_cmd);

    auto* eval_cmd = app.add_subcommand("evaluate", "score a labeled dataset");
    eval_cmd->add_option("--data", data, "directory of labeled CSV records")->required();
    eval_cmd->add_option("--upscaler", mp.upscaler, "upscaler model")->required();
    eval_cmd->add_option("--taes", mp.taes, "TAES model")->required();
    eval_cmd->add_option("--svm", mp.svm, "SVM model")->required();
    eval_cmd->add_option("--out", out, "existing report directory")->required();
    eval_cmd->add_option("--latency-runs", latency_runs, "timed runs for latency.json (0 skips, else >= 30)");
    cf_eval.attach(eval_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(sa);
        if (up_cmd->parsed()) return cmd_train_upscaler(cf_up.build(), data, out, log);
        if (taes_cmd->parsed()) return cmd_train_taes(cf_taes.build(), data, mp, out, log);
        if (svm_cmd->parsed()) return cmd_train_svm(cf_svm.build(), data, mp, out, log);
        if (upscale_cmd->parsed()) return cmd_upscale(cf_upscale.build(), input, mp.upscaler, out);
        if (classify_cmd->parsed()) return cmd_classify(cf_classify.build(), input, mp, out);
        if (eval_cmd->parsed()) {
            if (latency_runs != 0 && latency_runs < metrics::kLatencyMinRuns)
                throw UsageError("--latency-runs must be 0 or at least " + std::to_string(metrics::kLatencyMinRuns));
            return cmd_evaluate(cf_eval.build(), data, mp, out, latency_runs);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
