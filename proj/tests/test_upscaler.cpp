#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ecgcss/upscaler.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ecgcss;
using namespace ecgcss::upscaler;

namespace {

/// Direct polynomial evaluation, one sample at a time.
std::vector<double> poly_oracle(const BandRegressor& r, const std::array<std::vector<double>, 4>& x) {
    std::vector<double> y(x[0].size());
    for (std::size_t j = 0; j < y.size(); ++j) {
        double acc = r.bias;
        for (std::size_t i = 0; i < 4; ++i) {
            double p = 1.0;
            for (std::size_t k = 0; k < 3; ++k) {
                p *= x[i][j];
                acc += r.coeffs[i][k] * p;
            }
        }
        y[j] = acc;
    }
    return y;
}

BandRegressor random_regressor(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BandRegressor r;
    r.bias = u(rng);
    for (auto& row : r.coeffs)
        for (auto& c : row) c = u(rng);
    return r;
}

UpscalerModel zero_model(int beat_len, WaveletConfig w = {}) {
    UpscalerModel m;
    m.wavelet = w;
    m.beat_len = beat_len;
    for (LeadId l : kSynthesizedLeads) m.per_lead[l].assign(static_cast<std::size_t>(w.level + 1), BandRegressor{});
    return m;
}

Beat random_beat4(std::mt19937_64& rng, int len = 100) {
    Beat b;
    b.leads.assign(kKnownLeads.begin(), kKnownLeads.end());
    b.samples = oracle::randn(4, len, rng);
    b.r_index = 49;
    return b;
}

double band_mse(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

} // namespace

TEST_SUITE("upscaler") {

TEST_CASE("predict_band: identity and constant regressors") {
    std::mt19937_64 rng(1);
    std::array<std::vector<double>, 4> x;
    for (auto& v : x) v = oracle::randn(20, rng);
    BandRegressor id;
    id.coeffs[1][0] = 1.0;  // II
    CHECK(predict_band(id, x) == x[1]);
    BandRegressor c;
    c.bias = 0.75;
    for (double v : predict_band(c, x)) CHECK(v == 0.75);
}

TEST_CASE("predict_band matches a direct evaluator") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        std::array<std::vector<double>, 4> x;
        for (auto& v : x) v = oracle::randn(37, rng);
        const auto r = random_regressor(rng);
        const auto got = predict_band(r, x);
        const auto want = poly_oracle(r, x);
        for (std::size_t j = 0; j < got.size(); ++j) CHECK(std::abs(got[j] - want[j]) <= 1e-12);
    }
    std::array<std::vector<double>, 4> bad{std::vector<double>(5), std::vector<double>(5), std::vector<double>(4),
                                           std::vector<double>(5)};
    CHECK_THROWS_AS(predict_band(BandRegressor{}, bad), InvalidArgument);
}

TEST_CASE("mape") {
    CHECK(mape(std::vector<double>{1, 2, 4}, std::vector<double>{1, 2, 4}) == 0.0);
    CHECK(mape(std::vector<double>{1, 1, 1}, std::vector<double>{1.1, 0.9, 1.0}) == doctest::Approx(20.0 / 3.0));
    CHECK(mape(std::vector<double>{2, -2}, std::vector<double>{1, -1}) == doctest::Approx(50.0));
    // |y| below the floor uses the floor as denominator.
    CHECK(mape(std::vector<double>{0.0}, std::vector<double>{0.01}) == doctest::Approx(20.0));
    CHECK(mape(std::vector<double>{0.0}, std::vector<double>{0.01}, 0.1) == doctest::Approx(10.0));
    CHECK_THROWS_AS(mape(std::vector<double>{}, std::vector<double>{}), InvalidArgument);
    CHECK_THROWS_AS(mape(std::vector<double>{1}, std::vector<double>{1, 2}), InvalidArgument);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.validation_every = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.l1_lambda = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("gradient check on the regression objective") {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd x = oracle::randn(60, 4, rng);
    Eigen::VectorXd y(60);
    for (int j = 0; j < 60; ++j) y(j) = 0.3 + x(j, 0) - 0.5 * x(j, 1) * x(j, 1) + 0.1 * std::pow(x(j, 3), 3) + 0.05 * x(j, 2);
    const StandardizedObjective obj(x, y, 3, 1e-3);
    CHECK(obj.parameter_count() == 13);
    std::normal_distribution<double> g(0.0, 1.0);
    int points = 0;
    for (int t = 0; t < 100; ++t) {
        Eigen::VectorXd theta(13);
        for (int i = 0; i < 13; ++i) theta(i) = g(rng);
        if ((theta.tail(12).array().abs() < 1e-8).any()) continue;
        const Eigen::VectorXd analytic = obj.gradient(theta);
        Eigen::VectorXd fd(13);
        const double h = 1e-6;
        for (int i = 0; i < 13; ++i) {
            Eigen::VectorXd p = theta, m = theta;
            p(i) += h;
            m(i) -= h;
            fd(i) = (obj.value(p) - obj.value(m)) / (2.0 * h);
        }
        const double rel = (analytic - fd).norm() / std::max(analytic.norm(), fd.norm());
        CHECK(rel <= 1e-5);
        ++points;
    }
    CHECK(points >= 50);
}

TEST_CASE("minibatch gradient over every row equals the full gradient") {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd x = oracle::randn(30, 4, rng);
    const Eigen::VectorXd y = oracle::randn(30, 1, rng);
    const StandardizedObjective obj(x, y, 3, 0.01);
    const Eigen::VectorXd theta = oracle::randn(13, 1, rng);
    std::vector<int> rows(30);
    std::iota(rows.begin(), rows.end(), 0);
    CHECK((obj.gradient(theta) - obj.gradient(theta, rows)).norm() <= 1e-12);
}

TEST_CASE("fold reproduces the whitened-space prediction") {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd x = oracle::randn(40, 4, rng);
    const Eigen::VectorXd y = oracle::randn(40, 1, rng, 2.0);
    const StandardizedObjective obj(x, y, 3, 0.0);
    const Eigen::VectorXd theta = oracle::randn(13, 1, rng);
    const Eigen::VectorXd z = (theta(0) + (obj.features() * theta.tail(12)).array()).matrix();
    const Eigen::VectorXd t = obj.standardized_target();
    // value = mean squared standardized residual.
    CHECK(obj.value(theta) == doctest::Approx((t - z).squaredNorm() / 40.0).epsilon(1e-12));
    const double sd = std::sqrt((y.array() - y.mean()).square().mean());
    const Eigen::VectorXd raw = obj.fold(theta).predict(x);
    for (int j = 0; j < 40; ++j) CHECK(raw(j) == doctest::Approx(y.mean() + sd * z(j)).epsilon(1e-9));
}

TEST_CASE("least-squares equivalence: one input, quadratic, no penalty") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 5; ++t) {
        const int n = 6 + t % 3;
        const Eigen::MatrixXd x = oracle::randn(n, 1, rng);
        const Eigen::VectorXd y = oracle::randn(n, 1, rng);
        Eigen::MatrixXd design(n, 3);
        for (int j = 0; j < n; ++j) design.row(j) << 1.0, x(j, 0), x(j, 0) * x(j, 0);
        const Eigen::VectorXd ols = design.colPivHouseholderQr().solve(y);
        TrainConfig cfg;
        cfg.l1_lambda = 0.0;
        cfg.learning_rate = 0.01;
        cfg.epochs = 20000;
        cfg.validation_every = 100;
        std::mt19937_64 fit_rng(7);
        const PolyFit fit = fit_polynomial(x, y, Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), 2, cfg, fit_rng);
        CHECK(fit.bias == doctest::Approx(ols(0)).epsilon(1e-3).scale(1.0));
        CHECK(fit.coeffs(0, 0) == doctest::Approx(ols(1)).epsilon(1e-3).scale(1.0));
        CHECK(fit.coeffs(0, 1) == doctest::Approx(ols(2)).epsilon(1e-3).scale(1.0));
    }
}

TEST_CASE("validation snapshots never get worse") {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd x = oracle::randn(200, 4, rng), vx = oracle::randn(50, 4, rng);
    auto f = [](const Eigen::MatrixXd& m) {
        Eigen::VectorXd y(m.rows());
        for (Eigen::Index j = 0; j < m.rows(); ++j) y(j) = m(j, 0) - m(j, 2) * m(j, 2) * m(j, 2) * 0.2;
        return y;
    };
    const Eigen::VectorXd y = f(x) + oracle::randn(200, 1, rng, 0.1), vy = f(vx) + oracle::randn(50, 1, rng, 0.1);
    TrainConfig cfg;
    cfg.epochs = 100;
    FitReport rep;
    const auto fit = fit_polynomial(x, y, vx, vy, 3, cfg, rng, &rep);
    REQUIRE(!rep.snapshots.empty());
    CHECK(rep.snapshots.front().first == 0);
    for (std::size_t i = 1; i < rep.snapshots.size(); ++i) CHECK(rep.snapshots[i].second < rep.snapshots[i - 1].second);
    CHECK(rep.best_val_mse <= rep.initial_val_mse);
    CHECK(rep.best_epoch == rep.snapshots.back().first);
    CHECK((fit.predict(vx) - vy).squaredNorm() / 50.0 == doctest::Approx(rep.best_val_mse).epsilon(1e-9));
    for (const auto& e : rep.epochs) CHECK(e.val_mse.has_value() == (e.epoch % 5 == 0 || e.epoch == 100));
}

TEST_CASE("dominating L1 penalty shrinks every coefficient") {
    auto beats = fixture::dipole_beats(6, 11, 2);
    TrainConfig cfg;
    cfg.l1_lambda = 1e6;
    cfg.learning_rate = 0.05;
    cfg.final_lr_fraction = 1e-4;
    cfg.epochs = 200;
    const auto model = train_upscaler(beats, {}, cfg);
    for (LeadId l : kSynthesizedLeads) {
        for (int b = 0; b < model.band_count(); ++b) {
            const auto& r = model.per_lead.at(l)[static_cast<std::size_t>(b)];
            CHECK(r.l1_norm() <= 1e-3);
            double mean = 0.0;
            std::size_t n = 0;
            for (const auto& beat : beats) {
                const auto band = wavelet::dwt_db4(fixture::row_vector(beat, l), 3).band(b);
                for (double v : band) mean += v;
                n += band.size();
            }
            mean /= static_cast<double>(n);
            CHECK(std::abs(r.bias - mean) <= 0.01);
        }
    }
}

TEST_CASE("a single training beat is fitted") {
    const auto beats = fixture::dipole_beats(1, 12, 1);
    REQUIRE(beats.size() == 1);
    TrainConfig cfg;
    cfg.epochs = 3000;
    cfg.learning_rate = 0.01;
    cfg.validation_every = 50;
    const auto model = train_upscaler(beats, {}, cfg);
    CHECK(evaluate_mse(model, beats) <= 1e-4);
}

TEST_CASE("exact cubic corpus is recovered band by band") {
    WaveletConfig w;
    w.level = 2;
    w.boundary = wavelet::Boundary::Periodization;
    const auto teacher = fixture::random_teacher(13, w.level + 1);
    std::vector<Beat> train, val;
    const auto beats = fixture::dipole_beats(40, 13, 4);
    for (std::size_t i = 0; i < beats.size(); ++i)
        (i % 8 == 0 ? val : train).push_back(fixture::apply_teacher(beats[i], teacher, w));
    TrainConfig cfg;
    cfg.epochs = 1000;
    cfg.l1_lambda = 0.0;
    const auto model = train_upscaler(train, val, cfg, w);
    for (const auto& beat : val) {
        std::array<wavelet::WaveletCoeffs, 4> known;
        for (std::size_t i = 0; i < 4; ++i) known[i] = wavelet::dwt_db4(fixture::row_vector(beat, kKnownLeads[i]), 2, w.boundary);
        for (LeadId l : kSynthesizedLeads) {
            for (int b = 0; b <= w.level; ++b) {
                const std::array<std::vector<double>, 4> x{known[0].band(b), known[1].band(b), known[2].band(b), known[3].band(b)};
                const auto want = poly_oracle(teacher.at(l)[static_cast<std::size_t>(b)], x);
                const auto got = predict_band(model.per_lead.at(l)[static_cast<std::size_t>(b)], x);
                CHECK(band_mse(got, want) <= 1e-6);
            }
        }
    }
    for (const auto& [lead, m] : evaluate_mape(model, val)) {
        INFO(lead_name(lead));
        CHECK(m <= 1.0);
    }
    const auto seq = train_upscaler(train, val, cfg, w, Mode::SequenceLength);
    CHECK(seq.band_count() == 1);
    CHECK(evaluate_mse(model, val) < evaluate_mse(seq, val));
}

TEST_CASE("training is reproducible and independent of the job count") {
    const auto beats = fixture::dipole_beats(4, 14, 2);
    TrainConfig cfg;
    cfg.epochs = 10;
    const auto a = train_upscaler(beats, {}, cfg);
    cfg.jobs = 3;
    const auto b = train_upscaler(beats, {}, cfg);
    CHECK(a.to_container().serialize() == b.to_container().serialize());
}

TEST_CASE("upscale: identity model, zero beat, known-lead passthrough") {
    std::mt19937_64 rng(15);
    auto model = zero_model(100);
    for (auto& r : model.per_lead[LeadId::III]) r.coeffs[1][0] = 1.0;
    const Beat b4 = random_beat4(rng);
    const Beat out = upscale(model, b4);
    REQUIRE(out.lead_count() == 12);
    CHECK(out.leads == std::vector<LeadId>(kAllLeads.begin(), kAllLeads.end()));
    CHECK(out.r_index == 49);
    const Eigen::VectorXd ii = out.row(LeadId::II), iii = out.row(LeadId::III);
    CHECK((ii - iii).cwiseAbs().maxCoeff() <= 1e-9);
    for (LeadId l : kKnownLeads) {
        const Eigen::VectorXd a = out.row(l), b = b4.row(l);
        CHECK((a.array() == b.array()).all());
    }
    Beat zero = b4;
    zero.samples.setZero();
    const Beat z = upscale(zero_model(100), zero);
    CHECK(z.samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("property: known leads are bit-identical for a trained model") {
    const auto beats = fixture::dipole_beats(3, 16, 3);
    TrainConfig cfg;
    cfg.epochs = 5;
    const auto model = train_upscaler(beats, {}, cfg);
    std::mt19937_64 rng(17);
    for (int t = 0; t < 20; ++t) {
        const Beat b4 = random_beat4(rng);
        const Beat out = upscale(model, b4);
        for (LeadId l : kKnownLeads) {
            const Eigen::VectorXd a = out.row(l), b = b4.row(l);
            CHECK((a.array() == b.array()).all());
        }
    }
}

TEST_CASE("errors") {
    std::mt19937_64 rng(18);
    const auto beats = fixture::dipole_beats(1, 19, 2);
    CHECK_THROWS_AS(train_upscaler(std::vector<Beat>{}, {}, TrainConfig{}), DataError);
    const std::vector<Beat> four{to_known_leads(beats[0])};
    CHECK_THROWS_AS(train_upscaler(four, {}, TrainConfig{}), InvalidArgument);
    WaveletConfig deep;
    deep.level = 5;
    CHECK_THROWS_AS(train_upscaler(beats, {}, TrainConfig{}, deep), InvalidArgument);
    const auto model = zero_model(100);
    CHECK_THROWS_AS(upscale(model, beats[0]), InvalidArgument);
    CHECK_THROWS_AS(upscale(model, random_beat4(rng, 80)), InvalidArgument);
    auto missing = model;
    missing.per_lead.erase(LeadId::V1);
    CHECK_THROWS_AS(missing.validate(), InvalidArgument);
    auto nan = model;
    nan.per_lead[LeadId::V1][0].bias = std::nan("");
    CHECK_THROWS_AS(nan.validate(), InvalidArgument);
}

TEST_CASE("model file round trip") {
    const auto beats = fixture::dipole_beats(3, 20, 2);
    TrainConfig cfg;
    cfg.epochs = 10;
    const auto model = train_upscaler(beats, beats, cfg);
    const auto path = std::filesystem::temp_directory_path() / "ecgcss_test_upscaler.bin";
    model.save(path);
    const auto back = UpscalerModel::load(path);
    std::filesystem::remove(path);
    CHECK(back.to_container().serialize() == model.to_container().serialize());
    for (LeadId l : kSynthesizedLeads)
        for (int b = 0; b < model.band_count(); ++b) {
            const auto& r1 = model.per_lead.at(l)[static_cast<std::size_t>(b)];
            const auto& r2 = back.per_lead.at(l)[static_cast<std::size_t>(b)];
            CHECK(r1.bias == r2.bias);
            CHECK(r1.coeffs == r2.coeffs);
        }
    CHECK(back.beat_len == 100);
    CHECK(back.wavelet.level == 3);
}

} // TEST_SUITE
