#include "ecgcss/taes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ecgcss/error.hpp"

namespace ecgcss::taes {

using nn::Matrix;

std::vector<int> TaesConfig::stage_lengths() const {
    std::vector<int> lens{seq_len()};
    for (int s = 0; s < stage_count(); ++s) lens.push_back((lens.back() + pool - 1) / pool);
    return lens;
}

int TaesConfig::latent_dim() const { return stage_lengths().back() * schedule.back(); }

void TaesConfig::validate() const {
    if (schedule.size() < 2) throw InvalidArgument("TaesConfig: schedule needs an input size and at least one stage");
    for (int s : schedule)
        if (s < 1) throw InvalidArgument("TaesConfig: schedule entries must be positive");
    if (n_leads < 1 || schedule.front() % n_leads != 0)
        throw InvalidArgument("TaesConfig: schedule[0] must be a multiple of n_leads");
    if (!allow_expanding_schedule)
        for (std::size_t i = 1; i < schedule.size(); ++i)
            if (schedule[i] >= schedule[i - 1])
                throw InvalidArgument("TaesConfig: feature schedule must be strictly decreasing");
    if (d_model < 1 || n_heads < 1 || n_heads > d_model) throw InvalidArgument("TaesConfig: need 1 <= n_heads <= d_model");
    if (n_layers < 1) throw InvalidArgument("TaesConfig: n_layers must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("TaesConfig: kernel must be odd and positive");
    if (pool < 1) throw InvalidArgument("TaesConfig: pool must be positive");
    if (beat_len < 2) throw InvalidArgument("TaesConfig: beat_len must be at least 2");
    if (epochs_per_layer < 1 || batch_size < 1 || validation_every < 1 || fine_tune_epochs < 0)
        throw InvalidArgument("TaesConfig: epoch, batch and validation counts must be positive");
    if (!(learning_rate > 0.0) || !(transformer_lr > 0.0) || !(fine_tune_lr > 0.0) || l1_lambda < 0.0)
        throw InvalidArgument("TaesConfig: learning rates must be positive and l1 non-negative");
}

TaesConfig TaesConfig::table3() { return {}; }

TaesConfig TaesConfig::beat1200() {
    TaesConfig c;
    c.preset = "beat1200";
    c.schedule = {1200, 252, 128, 72, 56, 32};
    return c;
}

TaesConfig TaesConfig::worked_example() {
    TaesConfig c;
    c.preset = "worked_example";
    c.schedule = {1200, 32, 64, 128, 256, 512};
    c.allow_expanding_schedule = true;
    return c;
}

TaesConfig TaesConfig::miniature() {
    TaesConfig c;
    c.preset = "miniature";
    c.d_model = 8;
    c.n_heads = 3;
    c.n_layers = 2;
    c.schedule = {24, 12, 6};
    c.n_leads = 1;
    c.beat_len = 24;
    return c;
}

TaesConfig TaesConfig::from_preset(std::string_view name) {
    if (name == "table3") return table3();
    if (name == "beat1200") return beat1200();
    if (name == "worked_example") return worked_example();
    if (name == "miniature") return miniature();
    throw InvalidArgument("unknown TAES preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

Matrix interpolate_rows(const Matrix& x, int out_len) {
    if (out_len < 1 || x.rows() < 1) throw InvalidArgument("interpolate_rows: empty input or output");
    if (out_len == x.rows()) return x;
    Matrix y(out_len, x.cols());
    if (x.rows() == 1 || out_len == 1) {
        for (int i = 0; i < out_len; ++i) y.row(i) = x.row(0);
        return y;
    }
    const double step = static_cast<double>(x.rows() - 1) / (out_len - 1);
    for (int i = 0; i < out_len; ++i) {
        const double pos = i * step;
        const auto lo = std::min<Eigen::Index>(static_cast<Eigen::Index>(pos), x.rows() - 2);
        const double f = pos - static_cast<double>(lo);
        y.row(i) = (1.0 - f) * x.row(lo) + f * x.row(lo + 1);
    }
    return y;
}

TaesModel::TaesModel(TaesConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    embed_ = nn::Linear("embed", cfg_.n_leads, cfg_.d_model, rng);
    std::normal_distribution<double> pn(0.0, 0.02);
    Matrix pos(cfg_.seq_len(), cfg_.d_model);
    for (Eigen::Index j = 0; j < pos.cols(); ++j)
        for (Eigen::Index i = 0; i < pos.rows(); ++i) pos(i, j) = pn(rng);
    pos_ = nn::Param("pos", std::move(pos));
    for (int l = 0; l < cfg_.n_layers; ++l)
        layers_.emplace_back("tf" + std::to_string(l), cfg_.d_model, cfg_.n_heads, cfg_.d_ff(), rng);
    int c_in = cfg_.d_model;
    for (int s = 0; s < cfg_.stage_count(); ++s) {
        const int c_out = cfg_.schedule[static_cast<std::size_t>(s + 1)];
        enc_.emplace_back("enc" + std::to_string(s + 1), c_in, c_out, cfg_.kernel, cfg_.pool, rng);
        dec_.emplace_back("dec" + std::to_string(s + 1), c_out, c_in, cfg_.kernel, cfg_.pool, rng);
        c_in = c_out;
    }
    head_ = nn::Linear("head", cfg_.d_model, cfg_.n_leads, rng);
}

Matrix TaesModel::tokens(const Beat& beat) const {
    if (beat.lead_count() != cfg_.n_leads || beat.beat_len() != cfg_.beat_len)
        throw ShapeError("TAES: beat is " + std::to_string(beat.lead_count()) + "x" +
                         std::to_string(beat.beat_len()) + ", model expects " +
                         std::to_string(cfg_.n_leads) + "x" + std::to_string(cfg_.beat_len));
    Matrix t(beat.beat_len(), cfg_.n_leads);
    bool canonical = cfg_.n_leads == static_cast<int>(kAllLeads.size());
    if (canonical)
        for (LeadId l : kAllLeads) canonical = canonical && beat.row_of(l) >= 0;
    for (int c = 0; c < cfg_.n_leads; ++c) {
        const int row = canonical ? beat.row_of(kAllLeads[static_cast<std::size_t>(c)]) : c;
        t.col(c) = beat.samples.row(row).transpose();
    }
    return interpolate_rows(t, cfg_.seq_len());
}

Matrix TaesModel::transform_cached(const Matrix& tokens, TransformerCache* cache) const {
    if (tokens.rows() != cfg_.seq_len() || tokens.cols() != cfg_.n_leads)
        throw ShapeError("TAES: token matrix shape does not match the configuration");
    Matrix h = embed_.forward(tokens, cache ? &cache->embed : nullptr) + pos_.value;
    if (cache) cache->layers.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l)
        h = layers_[l].forward(h, cache ? &cache->layers[l] : nullptr);
    return h;
}

void TaesModel::transform_backward(const Matrix& d_out, const TransformerCache& cache) {
    Matrix d = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) d = layers_[l].backward(d, cache.layers[l]);
    pos_.grad += d;
    embed_.backward(d, cache.embed);
}

Matrix TaesModel::transform(const Matrix& tokens) const { return transform_cached(tokens, nullptr); }

Matrix TaesModel::encode_tokens(const Matrix& tokens) const {
    Matrix h = transform(tokens);
    for (const auto& e : enc_) h = e.forward(h);
    return h;
}

Matrix TaesModel::reconstruct_tokens(const Matrix& tokens) const {
    const auto lens = cfg_.stage_lengths();
    Matrix h = encode_tokens(tokens);
    for (std::size_t s = dec_.size(); s-- > 0;) h = dec_[s].forward(h, lens[s]);
    return head_.forward(h);
}

double TaesModel::full_loss(const Matrix& tokens) const {
    return (reconstruct_tokens(tokens) - tokens).squaredNorm() / static_cast<double>(tokens.size());
}

double TaesModel::full_loss_and_grad(const Matrix& tokens, double scale) {
    const auto lens = cfg_.stage_lengths();
    TransformerCache tc;
    Matrix h = transform_cached(tokens, &tc);
    std::vector<nn::EncoderStage::Cache> ec(enc_.size());
    for (std::size_t s = 0; s < enc_.size(); ++s) h = enc_[s].forward(h, &ec[s]);
    std::vector<nn::DecoderStage::Cache> dc(dec_.size());
    for (std::size_t s = dec_.size(); s-- > 0;) h = dec_[s].forward(h, lens[s], &dc[s]);
    nn::Linear::Cache hc;
    Matrix out = head_.forward(h, &hc);
    Matrix diff = out - tokens;
    const double n = static_cast<double>(tokens.size());
    Matrix d = head_.backward(diff * (2.0 * scale / n), hc);
    for (std::size_t s = 0; s < dec_.size(); ++s) d = dec_[s].backward(d, dc[s]);
    for (std::size_t s = enc_.size(); s-- > 0;) d = enc_[s].backward(d, ec[s]);
    transform_backward(d, tc);
    return diff.squaredNorm() / n;
}

std::vector<nn::Param*> TaesModel::transformer_params() {
    std::vector<nn::Param*> p = embed_.params();
    p.push_back(&pos_);
    for (auto& l : layers_)
        for (auto* q : l.params()) p.push_back(q);
    return p;
}

std::vector<nn::Param*> TaesModel::parameters() {
    std::vector<nn::Param*> p = transformer_params();
    for (auto& e : enc_)
        for (auto* q : e.params()) p.push_back(q);
    for (auto& d : dec_)
        for (auto* q : d.params()) p.push_back(q);
    for (auto* q : head_.params()) p.push_back(q);
    return p;
}

std::size_t TaesModel::parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
    return n;
}

// ---------------------------------------------------------------------------

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw DataError("TAES model: bad schedule entry '" + item + "'");
        }
    }
    return out;
}

} // namespace

ModelContainer TaesModel::to_container() const {
    ModelContainer c{std::string(kTaesKind)};
    c.set_meta("preset", cfg_.preset);
    c.set_meta("d_model", std::to_string(cfg_.d_model));
    c.set_meta("n_heads", std::to_string(cfg_.n_heads));
    c.set_meta("n_layers", std::to_string(cfg_.n_layers));
    c.set_meta("schedule", join_ints(cfg_.schedule));
    c.set_meta("kernel", std::to_string(cfg_.kernel));
    c.set_meta("pool", std::to_string(cfg_.pool));
    c.set_meta("n_leads", std::to_string(cfg_.n_leads));
    c.set_meta("beat_len", std::to_string(cfg_.beat_len));
    c.set_meta("epochs_per_layer", std::to_string(cfg_.epochs_per_layer));
    c.set_meta("batch_size", std::to_string(cfg_.batch_size));
    c.set_meta("learning_rate", format_double(cfg_.learning_rate));
    c.set_meta("transformer_lr", format_double(cfg_.transformer_lr));
    c.set_meta("l1_lambda", format_double(cfg_.l1_lambda));
    c.set_meta("validation_every", std::to_string(cfg_.validation_every));
    c.set_meta("fine_tune_epochs", std::to_string(cfg_.fine_tune_epochs));
    c.set_meta("fine_tune_lr", format_double(cfg_.fine_tune_lr));
    c.set_meta("allow_expanding_schedule", cfg_.allow_expanding_schedule ? "1" : "0");
    c.set_meta("seed", std::to_string(cfg_.seed));
    auto* self = const_cast<TaesModel*>(this);
    for (const nn::Param* p : self->parameters()) c.add_matrix(p->name, p->value);
    return c;
}

TaesModel TaesModel::from_container(const ModelContainer& c) {
    if (c.kind() != kTaesKind) throw DataError("not a TAES model");
    TaesConfig cfg;
    try {
        cfg.preset = c.meta("preset");
        cfg.d_model = static_cast<int>(c.meta_int("d_model"));
        cfg.n_heads = static_cast<int>(c.meta_int("n_heads"));
        cfg.n_layers = static_cast<int>(c.meta_int("n_layers"));
        cfg.schedule = split_ints(c.meta("schedule"));
        cfg.kernel = static_cast<int>(c.meta_int("kernel"));
        cfg.pool = static_cast<int>(c.meta_int("pool"));
        cfg.n_leads = static_cast<int>(c.meta_int("n_leads"));
        cfg.beat_len = static_cast<int>(c.meta_int("beat_len"));
        cfg.epochs_per_layer = static_cast<int>(c.meta_int("epochs_per_layer"));
        cfg.batch_size = static_cast<int>(c.meta_int("batch_size"));
        cfg.learning_rate = c.meta_double("learning_rate");
        cfg.transformer_lr = c.meta_double("transformer_lr");
        cfg.l1_lambda = c.meta_double("l1_lambda");
        cfg.validation_every = static_cast<int>(c.meta_int("validation_every"));
        cfg.fine_tune_epochs = static_cast<int>(c.meta_int("fine_tune_epochs"));
        cfg.fine_tune_lr = c.meta_double("fine_tune_lr");
        cfg.allow_expanding_schedule = c.meta("allow_expanding_schedule") == "1";
        cfg.seed = static_cast<std::uint64_t>(c.meta_int("seed"));
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("TAES model: ") + e.what());
    }
    TaesModel m(cfg);
    for (nn::Param* p : m.parameters()) {
        Matrix v = c.matrix(p->name);
        if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
            throw DataError("TAES model: tensor '" + p->name + "' has the wrong shape");
        if (!v.allFinite()) throw DataError("TAES model: tensor '" + p->name + "' is not finite");
        p->value = std::move(v);
    }
    return m;
}

void TaesModel::save(const std::filesystem::path& path) const { to_container().save(path); }

TaesModel TaesModel::load(const std::filesystem::path& path) {
    return from_container(ModelContainer::load(path, kTaesKind));
}

// ---------------------------------------------------------------------------

LatentVector encode(const TaesModel& model, const Beat& beat) {
    Matrix h = model.encode_tokens(model.tokens(beat));
    LatentVector lv;
    lv.values.resize(static_cast<std::size_t>(h.size()));
    // Row-major flatten: time step, then channel.
    for (Eigen::Index i = 0; i < h.rows(); ++i)
        for (Eigen::Index j = 0; j < h.cols(); ++j)
            lv.values[static_cast<std::size_t>(i * h.cols() + j)] = h(i, j);
    lv.source = beat.source;
    return lv;
}

std::vector<LatentVector> encode_batch(const TaesModel& model, std::span<const Beat> beats, int jobs) {
    std::vector<LatentVector> out(beats.size());
    const auto workers = static_cast<std::size_t>(std::clamp<int>(jobs, 1, std::max<int>(1, static_cast<int>(beats.size()))));
    if (workers == 1) {
        for (std::size_t i = 0; i < beats.size(); ++i) out[i] = encode(model, beats[i]);
        return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < beats.size(); i += workers) out[i] = encode(model, beats[i]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

Beat reconstruct(const TaesModel& model, const Beat& beat) {
    const Matrix tok = model.tokens(beat);
    const Matrix rec = interpolate_rows(model.reconstruct_tokens(tok), beat.beat_len());
    Beat out = beat;
    const auto& cfg = model.config();
    bool canonical = cfg.n_leads == static_cast<int>(kAllLeads.size());
    if (canonical)
        for (LeadId l : kAllLeads) canonical = canonical && beat.row_of(l) >= 0;
    for (int c = 0; c < cfg.n_leads; ++c) {
        const int row = canonical ? beat.row_of(kAllLeads[static_cast<std::size_t>(c)]) : c;
        out.samples.row(row) = rec.col(c).transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct StageRunner {
    const TaesConfig& cfg;
    std::mt19937_64& rng;
    std::vector<LayerLoss>& history;

    // step(i, scale) returns the loss of training sample i and accumulates its
    // gradient scaled by `scale`; val() returns the mean validation loss.
    void run(const std::string& stage, int epochs, double lr, const std::vector<nn::Param*>& params,
             std::size_t n, const std::function<double(std::size_t, double)>& step,
             const std::function<std::optional<double>()>& val) {
        nn::Adam adam;
        adam.lr = lr;
        adam.l1 = cfg.l1_lambda;
        nn::Adam::reset(params);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        const auto bs = static_cast<std::size_t>(cfg.batch_size);
        for (int epoch = 1; epoch <= epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            double total = 0.0;
            for (std::size_t start = 0; start < n; start += bs) {
                const std::size_t len = std::min(bs, n - start);
                for (auto* p : params) p->zero_grad();
                for (std::size_t k = 0; k < len; ++k)
                    total += step(order[start + k], 1.0 / static_cast<double>(len));
                adam.step(params);
            }
            LayerLoss row{stage, epoch, total / static_cast<double>(n), std::nullopt};
            if (!std::isfinite(row.train_mse))
                throw TrainingError("TAES training diverged: non-finite loss in stage '" + stage +
                                    "' at epoch " + std::to_string(epoch));
            if (epoch % cfg.validation_every == 0) row.val_mse = val();
            history.push_back(row);
        }
        for (auto* p : params) p->zero_grad();
    }
};

double mse(const Matrix& a, const Matrix& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

} // namespace

TaesModel train_taes(std::span<const Beat> train, std::span<const Beat> val, const TaesConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw DataError("train_taes: empty training set");
    TaesModel model(cfg);
    std::vector<Matrix> tr_tok, va_tok;
    for (const auto& b : train) tr_tok.push_back(model.tokens(b));
    for (const auto& b : val) va_tok.push_back(model.tokens(b));

    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0x7a35u};
    std::mt19937_64 rng(seq);
    StageRunner runner{cfg, rng, model.history};
    const auto lens = cfg.stage_lengths();

    // Transformer block with the temporary linear head.
    {
        auto params = model.transformer_params();
        for (auto* p : model.head_.params()) params.push_back(p);
        auto step = [&](std::size_t i, double scale) {
            TaesModel::TransformerCache tc;
            Matrix h = model.transform_cached(tr_tok[i], &tc);
            nn::Linear::Cache hc;
            Matrix diff = model.head_.forward(h, &hc) - tr_tok[i];
            const double n = static_cast<double>(diff.size());
            model.transform_backward(model.head_.backward(diff * (2.0 * scale / n), hc), tc);
            return diff.squaredNorm() / n;
        };
        auto vloss = [&]() -> std::optional<double> {
            if (va_tok.empty()) return std::nullopt;
            double s = 0.0;
            for (const auto& t : va_tok) s += mse(model.head_.forward(model.transform(t)), t);
            return s / static_cast<double>(va_tok.size());
        };
        runner.run("transformer", cfg.epochs_per_layer, cfg.transformer_lr, params, tr_tok.size(), step, vloss);
    }

    std::vector<Matrix> tr_h, va_h;
    for (const auto& t : tr_tok) tr_h.push_back(model.transform(t));
    for (const auto& t : va_tok) va_h.push_back(model.transform(t));

    for (std::size_t s = 0; s < model.enc_.size(); ++s) {
        auto& enc = model.enc_[s];
        auto& dec = model.dec_[s];
        const Eigen::Index in_len = lens[s];
        auto params = enc.params();
        for (auto* p : dec.params()) params.push_back(p);
        auto step = [&](std::size_t i, double scale) {
            nn::EncoderStage::Cache ec;
            nn::DecoderStage::Cache dc;
            Matrix z = enc.forward(tr_h[i], &ec);
            Matrix diff = dec.forward(z, in_len, &dc) - tr_h[i];
            const double n = static_cast<double>(diff.size());
            enc.backward(dec.backward(diff * (2.0 * scale / n), dc), ec);
            return diff.squaredNorm() / n;
        };
        auto vloss = [&]() -> std::optional<double> {
            if (va_h.empty()) return std::nullopt;
            double sum = 0.0;
            for (const auto& h : va_h) sum += mse(dec.forward(enc.forward(h), in_len), h);
            return sum / static_cast<double>(va_h.size());
        };
        runner.run("conv" + std::to_string(s + 1), cfg.epochs_per_layer, cfg.learning_rate, params,
                   tr_h.size(), step, vloss);
        for (auto& h : tr_h) h = enc.forward(h);
        for (auto& h : va_h) h = enc.forward(h);
    }

    if (cfg.fine_tune_epochs > 0) {
        auto params = model.parameters();
        auto step = [&](std::size_t i, double scale) { return model.full_loss_and_grad(tr_tok[i], scale); };
        auto vloss = [&]() -> std::optional<double> {
            if (va_tok.empty()) return std::nullopt;
            double s = 0.0;
            for (const auto& t : va_tok) s += model.full_loss(t);
            return s / static_cast<double>(va_tok.size());
        };
        runner.run("finetune", cfg.fine_tune_epochs, cfg.fine_tune_lr, params, tr_tok.size(), step, vloss);
    }
    return model;
}

} // namespace ecgcss::taes
