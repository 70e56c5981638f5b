#include "ecgcss/upscaler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <mutex>
#include <thread>

namespace ecgcss::upscaler {

namespace {

double safe_sd(double sd) { return sd > 1e-12 ? sd : 1.0; }

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::array<std::uint64_t, 1> out{};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return out[0];
}

struct BandData {
    Eigen::MatrixXd inputs;  // rows x 4
    Eigen::VectorXd target;
};

// Rows of (known-lead band coefficients -> target band coefficient), stacked over beats.
BandData collect_band(std::span<const Beat> beats, LeadId target, int band, Mode mode,
                      const WaveletConfig& wcfg) {
    std::vector<std::array<double, 4>> rows;
    std::vector<double> ys;
    for (const auto& beat : beats) {
        std::array<std::vector<double>, 4> known;
        std::vector<double> tgt;
        for (std::size_t i = 0; i < 4; ++i) {
            Eigen::VectorXd r = beat.row(kKnownLeads[i]);
            std::vector<double> v(r.data(), r.data() + r.size());
            known[i] = mode == Mode::Decomposition
                           ? wavelet::dwt_db4(v, wcfg.level, wcfg.boundary).band(band)
                           : v;
        }
        {
            Eigen::VectorXd r = beat.row(target);
            std::vector<double> v(r.data(), r.data() + r.size());
            tgt = mode == Mode::Decomposition ? wavelet::dwt_db4(v, wcfg.level, wcfg.boundary).band(band)
                                              : v;
        }
        for (std::size_t j = 0; j < tgt.size(); ++j) {
            rows.push_back({known[0][j], known[1][j], known[2][j], known[3][j]});
            ys.push_back(tgt[j]);
        }
    }
    BandData d;
    d.inputs.resize(static_cast<Eigen::Index>(rows.size()), 4);
    d.target.resize(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < 4; ++c) d.inputs(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
        d.target(static_cast<Eigen::Index>(r)) = ys[r];
    }
    return d;
}

BandRegressor to_regressor(const PolyFit& fit) {
    BandRegressor reg;
    reg.bias = fit.bias;
    for (int i = 0; i < 4; ++i)
        for (int p = 0; p < 3; ++p)
            reg.coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)] =
                p < fit.coeffs.cols() ? fit.coeffs(i, p) : 0.0;
    return reg;
}

void check_beat_leads(const Beat& beat, bool need_all) {
    for (LeadId l : kKnownLeads)
        if (beat.row_of(l) < 0) throw InvalidArgument("upscaler: beat lacks known lead " + std::string(lead_name(l)));
    if (need_all)
        for (LeadId l : kSynthesizedLeads)
            if (beat.row_of(l) < 0)
                throw InvalidArgument("upscaler: training beats must carry all 12 leads");
}

} // namespace

bool BandRegressor::finite() const {
    if (!std::isfinite(bias)) return false;
    for (const auto& row : coeffs)
        for (double v : row)
            if (!std::isfinite(v)) return false;
    return true;
}

double BandRegressor::l1_norm() const {
    double s = 0.0;
    for (const auto& row : coeffs)
        for (double v : row) s += std::abs(v);
    return s;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) ||
        !(epsilon > 0.0) || l1_lambda < 0.0 || epochs < 1 || validation_every < 1 ||
        patience < 0 || batch_size < 1 || !(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0) ||
        jobs < 1)
        throw InvalidArgument("upscaler TrainConfig: invalid hyperparameters");
}

void UpscalerModel::validate() const {
    if (per_lead.size() != kSynthesizedLeads.size())
        throw InvalidArgument("UpscalerModel: expected exactly 8 target leads");
    for (LeadId l : kSynthesizedLeads) {
        auto it = per_lead.find(l);
        if (it == per_lead.end()) throw InvalidArgument("UpscalerModel: missing target lead " + std::string(lead_name(l)));
        if (static_cast<int>(it->second.size()) != band_count())
            throw InvalidArgument("UpscalerModel: wrong number of band regressors");
        for (const auto& r : it->second)
            if (!r.finite()) throw InvalidArgument("UpscalerModel: non-finite parameter");
    }
}

ModelContainer UpscalerModel::to_container() const {
    validate();
    ModelContainer c{std::string(kUpscalerKind)};
    c.set_meta("mode", mode == Mode::Decomposition ? "decomposition" : "sequence_length");
    c.set_meta("wavelet", "db4");
    c.set_meta("level", std::to_string(wavelet.level));
    c.set_meta("boundary", std::string(wavelet::boundary_name(wavelet.boundary)));
    c.set_meta("beat_len", std::to_string(beat_len));
    c.set_meta("epochs", std::to_string(train.epochs));
    c.set_meta("learning_rate", format_double(train.learning_rate));
    c.set_meta("l1_lambda", format_double(train.l1_lambda));
    c.set_meta("seed", std::to_string(train.seed));
    c.set_meta("final_val_mse", format_double(final_val_mse));
    for (LeadId l : kSynthesizedLeads) {
        const auto& regs = per_lead.at(l);
        // One row per band: bias then b[i][p] in (lead, power) order.
        Eigen::MatrixXd m(static_cast<Eigen::Index>(regs.size()), 13);
        for (std::size_t b = 0; b < regs.size(); ++b) {
            m(static_cast<Eigen::Index>(b), 0) = regs[b].bias;
            for (int i = 0; i < 4; ++i)
                for (int p = 0; p < 3; ++p)
                    m(static_cast<Eigen::Index>(b), 1 + 3 * i + p) = regs[b].coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
        }
        c.add_matrix("lead/" + std::string(lead_name(l)), m);
    }
    return c;
}

UpscalerModel UpscalerModel::from_container(const ModelContainer& c) {
    if (c.kind() != kUpscalerKind) throw DataError("not an upscaler model");
    UpscalerModel m;
    const auto& mode = c.meta("mode");
    if (mode == "decomposition")
        m.mode = Mode::Decomposition;
    else if (mode == "sequence_length")
        m.mode = Mode::SequenceLength;
    else
        throw DataError("upscaler model: unknown mode '" + mode + "'");
    m.wavelet.level = static_cast<int>(c.meta_int("level"));
    m.wavelet.boundary = wavelet::parse_boundary(c.meta("boundary"));
    m.beat_len = static_cast<int>(c.meta_int("beat_len"));
    m.train.epochs = static_cast<int>(c.meta_int("epochs"));
    m.train.learning_rate = c.meta_double("learning_rate");
    m.train.l1_lambda = c.meta_double("l1_lambda");
    m.train.seed = static_cast<std::uint64_t>(c.meta_int("seed"));
    m.final_val_mse = c.meta_double("final_val_mse");
    for (LeadId l : kSynthesizedLeads) {
        auto mat = c.matrix("lead/" + std::string(lead_name(l)));
        if (mat.cols() != 13) throw DataError("upscaler model: bad regressor tensor shape");
        std::vector<BandRegressor> regs(static_cast<std::size_t>(mat.rows()));
        for (Eigen::Index b = 0; b < mat.rows(); ++b) {
            regs[static_cast<std::size_t>(b)].bias = mat(b, 0);
            for (int i = 0; i < 4; ++i)
                for (int p = 0; p < 3; ++p)
                    regs[static_cast<std::size_t>(b)].coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)] = mat(b, 1 + 3 * i + p);
        }
        m.per_lead[l] = std::move(regs);
    }
    try {
        m.validate();
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("upscaler model: ") + e.what());
    }
    return m;
}

void UpscalerModel::save(const std::filesystem::path& path) const { to_container().save(path); }

UpscalerModel UpscalerModel::load(const std::filesystem::path& path) {
    return from_container(ModelContainer::load(path, kUpscalerKind));
}

std::vector<double> predict_band(const BandRegressor& reg,
                                 std::span<const std::vector<double>> known_bands) {
    if (known_bands.size() != 4) throw InvalidArgument("predict_band: need exactly 4 known bands");
    const std::size_t n = known_bands[0].size();
    for (const auto& b : known_bands)
        if (b.size() != n) throw InvalidArgument("predict_band: known bands differ in length");
    std::vector<double> out(n, reg.bias);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& c = reg.coeffs[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double x = known_bands[i][j];
            out[j] += x * (c[0] + x * (c[1] + x * c[2]));
        }
    }
    return out;
}

Eigen::VectorXd PolyFit::predict(const Eigen::MatrixXd& inputs) const {
    if (inputs.cols() != coeffs.rows()) throw ShapeError("PolyFit: input width mismatch");
    Eigen::VectorXd y = Eigen::VectorXd::Constant(inputs.rows(), bias);
    for (Eigen::Index i = 0; i < coeffs.rows(); ++i) {
        Eigen::ArrayXd x = inputs.col(i).array();
        Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(inputs.rows());
        for (Eigen::Index p = coeffs.cols() - 1; p >= 0; --p) acc = (acc + coeffs(i, p)) * x;
        y.array() += acc;
    }
    return y;
}

StandardizedObjective::StandardizedObjective(const Eigen::MatrixXd& inputs,
                                             const Eigen::VectorXd& target, int degree,
                                             double l1_lambda)
    : degree_(degree), l1_(l1_lambda) {
    if (inputs.rows() == 0 || inputs.rows() != target.size())
        throw InvalidArgument("regression: inputs and target must be non-empty and conform");
    if (degree < 1 || degree > 3) throw InvalidArgument("regression: degree must be 1..3");
    const auto n = static_cast<double>(inputs.rows());
    const Eigen::Index k = inputs.cols();
    input_mean_ = inputs.colwise().mean().transpose();
    input_sd_.resize(k);
    for (Eigen::Index i = 0; i < k; ++i)
        input_sd_(i) = safe_sd(std::sqrt((inputs.col(i).array() - input_mean_(i)).square().sum() / n));
    features_.resize(inputs.rows(), k * degree);
    for (Eigen::Index i = 0; i < k; ++i) {
        Eigen::ArrayXd z = (inputs.col(i).array() - input_mean_(i)) / input_sd_(i);
        Eigen::ArrayXd pw = z;
        for (int p = 0; p < degree; ++p) {
            features_.col(i * degree + p) = pw.matrix();
            pw *= z;
        }
    }
    feature_mean_ = features_.colwise().mean().transpose();
    features_.rowwise() -= feature_mean_.transpose();
    // Symmetric (ZCA) whitening; directions with negligible variance are dropped.
    const Eigen::MatrixXd cov = features_.transpose() * features_ / n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd lambda = eig.eigenvalues();
    const double cutoff = std::max(lambda.maxCoeff(), 0.0) * 1e-12;
    Eigen::VectorXd inv_sqrt(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) inv_sqrt(i) = lambda(i) > cutoff && lambda(i) > 0.0 ? 1.0 / std::sqrt(lambda(i)) : 0.0;
    whiten_ = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    features_ = features_ * whiten_;
    target_mean_ = target.mean();
    target_sd_ = safe_sd(std::sqrt((target.array() - target_mean_).square().sum() / n));
    target_std_ = ((target.array() - target_mean_) / target_sd_).matrix();
}

double StandardizedObjective::value(const Eigen::VectorXd& theta) const {
    const Eigen::Index p = features_.cols();
    Eigen::VectorXd r = target_std_ - features_ * theta.tail(p);
    r.array() -= theta(0);
    return r.squaredNorm() / static_cast<double>(r.size()) + l1_ * theta.tail(p).lpNorm<1>();
}

Eigen::VectorXd StandardizedObjective::gradient(const Eigen::VectorXd& theta) const {
    const Eigen::Index p = features_.cols();
    Eigen::VectorXd r = target_std_ - features_ * theta.tail(p);
    r.array() -= theta(0);
    const double scale = -2.0 / static_cast<double>(r.size());
    Eigen::VectorXd g(p + 1);
    g(0) = scale * r.sum();
    g.tail(p) = scale * (features_.transpose() * r);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double w = theta(1 + i);
        g(1 + i) += l1_ * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0));
    }
    return g;
}

Eigen::VectorXd StandardizedObjective::gradient(const Eigen::VectorXd& theta,
                                                std::span<const int> rows) const {
    const Eigen::Index p = features_.cols();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p + 1);
    const auto w = theta.tail(p);
    for (int row : rows) {
        const double r = target_std_(row) - theta(0) - features_.row(row).dot(w);
        g(0) += r;
        g.tail(p) += r * features_.row(row).transpose();
    }
    g *= -2.0 / static_cast<double>(rows.size());
    for (Eigen::Index i = 0; i < p; ++i) {
        const double v = theta(1 + i);
        g(1 + i) += l1_ * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
    return g;
}

PolyFit StandardizedObjective::fold(const Eigen::VectorXd& theta) const {
    const Eigen::Index k = input_mean_.size();
    PolyFit fit;
    fit.coeffs = Eigen::MatrixXd::Zero(k, degree_);
    double constant = theta(0);
    const Eigen::VectorXd w_feat = whiten_ * theta.tail(features_.cols());
    constant -= w_feat.dot(feature_mean_);
    for (Eigen::Index i = 0; i < k; ++i) {
        // z = c0 + c1 x
        const double c1 = 1.0 / input_sd_(i);
        const double c0 = -input_mean_(i) * c1;
        for (int p = 1; p <= degree_; ++p) {
            const double w = w_feat(i * degree_ + (p - 1));
            for (int q = 0; q <= p; ++q) {
                const double term = w * binomial(p, q) * std::pow(c0, p - q) * std::pow(c1, q);
                if (q == 0)
                    constant += term;
                else
                    fit.coeffs(i, q - 1) += term;
            }
        }
    }
    fit.bias = target_mean_ + target_sd_ * constant;
    fit.coeffs *= target_sd_;
    return fit;
}

PolyFit fit_polynomial(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& target,
                       const Eigen::MatrixXd& val_inputs, const Eigen::VectorXd& val_target,
                       int degree, const TrainConfig& cfg, std::mt19937_64& rng,
                       FitReport* report) {
    cfg.validate();
    StandardizedObjective objective(inputs, target, degree, cfg.l1_lambda);
    const bool has_val = val_inputs.rows() > 0;
    const Eigen::MatrixXd& vx = has_val ? val_inputs : inputs;
    const Eigen::VectorXd& vy = has_val ? val_target : target;

    const int np = objective.parameter_count();
    std::uniform_real_distribution<double> init(0.0, 1.0);
    Eigen::VectorXd theta(np);
    for (int i = 0; i < np; ++i) theta(i) = init(rng);

    auto val_mse = [&](const Eigen::VectorXd& t) {
        return (objective.fold(t).predict(vx) - vy).squaredNorm() / static_cast<double>(vy.size());
    };

    Eigen::VectorXd m = Eigen::VectorXd::Zero(np), v = Eigen::VectorXd::Zero(np);
    std::vector<int> order(static_cast<std::size_t>(inputs.rows()));
    std::iota(order.begin(), order.end(), 0);
    const double target_var = std::pow((target.array() - target.mean()).matrix().norm(), 2) /
                              static_cast<double>(target.size());
    const double raw_scale = target_var > 1e-24 ? target_var : 1.0;
    // Validation objective in the same standardized units as training.
    auto val_objective = [&](const Eigen::VectorXd& t, double mse) {
        return mse / raw_scale + cfg.l1_lambda * t.tail(np - 1).lpNorm<1>();
    };

    Eigen::VectorXd best = theta;
    double best_mse = val_mse(theta);
    double best_obj = val_objective(theta, best_mse);
    FitReport local;
    local.initial_val_mse = best_mse;
    local.snapshots.emplace_back(0, best_obj);
    long long step = 0;
    int stale = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double progress = cfg.epochs > 1 ? static_cast<double>(epoch - 1) / (cfg.epochs - 1) : 0.0;
        const double lr = cfg.learning_rate * std::pow(cfg.final_lr_fraction, progress);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
            Eigen::VectorXd g = objective.gradient(theta, std::span<const int>(order.data() + start, len));
            ++step;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
        }
        if (!theta.allFinite()) throw TrainingError("upscaler regression diverged (non-finite parameters)");

        EpochLoss row;
        row.epoch = epoch;
        // Training MSE in target units (data term of the objective, de-standardized).
        row.train_mse = (objective.value(theta) - cfg.l1_lambda * theta.tail(np - 1).lpNorm<1>()) * raw_scale;
        if (epoch % cfg.validation_every == 0 || epoch == cfg.epochs) {
            const double vm = val_mse(theta);
            row.val_mse = vm;
            const double vo = val_objective(theta, vm);
            if (vo < best_obj) {
                best_obj = vo;
                best_mse = vm;
                best = theta;
                local.best_epoch = epoch;
                local.snapshots.emplace_back(epoch, vo);
                stale = 0;
            } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
                local.epochs.push_back(row);
                break;
            }
        }
        local.epochs.push_back(row);
    }
    local.best_val_mse = best_mse;
    if (report) *report = std::move(local);
    return objective.fold(best);
}

UpscalerModel train_upscaler(std::span<const Beat> train, std::span<const Beat> val,
                             const TrainConfig& cfg, WaveletConfig wcfg, Mode mode) {
    cfg.validate();
    if (train.empty()) throw DataError("train_upscaler: empty training set");
    const int beat_len = train.front().beat_len();
    for (const auto& b : train) {
        check_beat_leads(b, true);
        if (b.beat_len() != beat_len) throw InvalidArgument("train_upscaler: beats differ in length");
    }
    for (const auto& b : val) {
        check_beat_leads(b, true);
        if (b.beat_len() != beat_len) throw InvalidArgument("train_upscaler: validation beat length differs");
    }
    if (mode == Mode::Decomposition &&
        (wcfg.level < 1 || wcfg.level > wavelet::max_level(static_cast<std::size_t>(beat_len))))
        throw InvalidArgument("train_upscaler: wavelet level invalid for beat length");

    UpscalerModel model;
    model.mode = mode;
    model.wavelet = wcfg;
    model.beat_len = beat_len;
    model.train = cfg;
    const int bands = model.band_count();

    struct Job {
        LeadId lead;
        int band;
        BandRegressor result;
        FitReport report;
    };
    std::vector<Job> jobs;
    for (LeadId l : kSynthesizedLeads)
        for (int b = 0; b < bands; ++b) jobs.push_back({l, b, {}, {}});

    auto run = [&](Job& job) {
        auto tr = collect_band(train, job.lead, job.band, mode, wcfg);
        BandData va;
        if (!val.empty()) va = collect_band(val, job.lead, job.band, mode, wcfg);
        std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(job.lead), static_cast<std::uint64_t>(job.band)));
        job.result = to_regressor(fit_polynomial(tr.inputs, tr.target, va.inputs, va.target, 3, cfg, rng, &job.report));
    };

    const auto workers = static_cast<std::size_t>(std::max(1, cfg.jobs));
    if (workers == 1) {
        for (auto& j : jobs) run(j);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < jobs.size(); i += workers) {
                    try {
                        run(jobs[i]);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (LeadId l : kSynthesizedLeads) model.per_lead[l].resize(static_cast<std::size_t>(bands));
    std::size_t longest = 0;
    for (const auto& j : jobs) {
        model.per_lead[j.lead][static_cast<std::size_t>(j.band)] = j.result;
        longest = std::max(longest, j.report.epochs.size());
    }
    for (std::size_t e = 0; e < longest; ++e) {
        EpochLoss row;
        row.epoch = static_cast<int>(e) + 1;
        double tsum = 0.0, vsum = 0.0;
        int tcount = 0, vcount = 0;
        for (const auto& j : jobs) {
            if (e >= j.report.epochs.size()) continue;
            tsum += j.report.epochs[e].train_mse;
            ++tcount;
            if (j.report.epochs[e].val_mse) {
                vsum += *j.report.epochs[e].val_mse;
                ++vcount;
            }
        }
        row.train_mse = tsum / std::max(1, tcount);
        if (vcount > 0) row.val_mse = vsum / vcount;
        model.history.push_back(row);
    }
    model.final_val_mse = evaluate_mse(model, val.empty() ? train : val);
    return model;
}

Beat upscale(const UpscalerModel& model, const Beat& beat4) {
    if (beat4.lead_count() != 4) throw InvalidArgument("upscale: expected a 4-lead beat");
    check_beat_leads(beat4, false);
    if (beat4.beat_len() != model.beat_len)
        throw InvalidArgument("upscale: beat length " + std::to_string(beat4.beat_len()) +
                              " does not match model length " + std::to_string(model.beat_len));

    std::array<wavelet::WaveletCoeffs, 4> known;
    std::array<std::vector<double>, 4> raw;
    for (std::size_t i = 0; i < 4; ++i) {
        Eigen::VectorXd r = beat4.row(kKnownLeads[i]);
        raw[i].assign(r.data(), r.data() + r.size());
        if (model.mode == Mode::Decomposition)
            known[i] = wavelet::dwt_db4(raw[i], model.wavelet.level, model.wavelet.boundary);
    }

    Beat out;
    out.samples.resize(12, beat4.beat_len());
    out.leads.assign(kAllLeads.begin(), kAllLeads.end());
    out.r_index = beat4.r_index;
    out.source = beat4.source;
    out.label = beat4.label;
    for (std::size_t li = 0; li < kAllLeads.size(); ++li) {
        const LeadId lead = kAllLeads[li];
        const auto row = static_cast<Eigen::Index>(li);
        if (is_known_lead(lead)) {
            out.samples.row(row) = beat4.samples.row(beat4.row_of(lead));
            continue;
        }
        const auto& regs = model.per_lead.at(lead);
        std::vector<double> synthesized;
        if (model.mode == Mode::Decomposition) {
            wavelet::WaveletCoeffs target = known[0];
            for (int b = 0; b < model.band_count(); ++b) {
                std::array<std::vector<double>, 4> bands = {known[0].band(b), known[1].band(b),
                                                            known[2].band(b), known[3].band(b)};
                target.band(b) = predict_band(regs[static_cast<std::size_t>(b)], bands);
            }
            synthesized = wavelet::idwt_db4(target);
        } else {
            synthesized = predict_band(regs.front(), raw);
        }
        for (int t = 0; t < beat4.beat_len(); ++t) out.samples(row, t) = synthesized[static_cast<std::size_t>(t)];
    }
    return out;
}

double mape(std::span<const double> actual, std::span<const double> predicted, double floor) {
    if (actual.empty()) throw InvalidArgument("mape: empty input");
    if (actual.size() != predicted.size()) throw InvalidArgument("mape: length mismatch");
    if (!(floor > 0.0)) throw InvalidArgument("mape: floor must be positive");
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i)
        s += std::abs(actual[i] - predicted[i]) / std::max(std::abs(actual[i]), floor);
    return 100.0 * s / static_cast<double>(actual.size());
}

std::map<LeadId, double> evaluate_mape(const UpscalerModel& model, std::span<const Beat> beats,
                                       double floor) {
    if (beats.empty()) throw DataError("evaluate_mape: no beats");
    std::map<LeadId, std::vector<double>> actual, predicted;
    for (const auto& b : beats) {
        check_beat_leads(b, true);
        Beat up = upscale(model, to_known_leads(b));
        for (LeadId l : kSynthesizedLeads) {
            Eigen::VectorXd a = b.row(l), p = up.row(l);
            actual[l].insert(actual[l].end(), a.data(), a.data() + a.size());
            predicted[l].insert(predicted[l].end(), p.data(), p.data() + p.size());
        }
    }
    std::map<LeadId, double> out;
    for (LeadId l : kSynthesizedLeads) out[l] = mape(actual[l], predicted[l], floor);
    return out;
}

double evaluate_mse(const UpscalerModel& model, std::span<const Beat> beats) {
    if (beats.empty()) throw DataError("evaluate_mse: no beats");
    double s = 0.0;
    long long n = 0;
    for (const auto& b : beats) {
        Beat up = upscale(model, to_known_leads(b));
        for (LeadId l : kSynthesizedLeads) {
            s += (b.row(l) - up.row(l)).squaredNorm();
            n += b.beat_len();
        }
    }
    return s / static_cast<double>(n);
}

} // namespace ecgcss::upscaler
