#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "ecgcss/classifier.hpp"
#include "ecgcss/error.hpp"
#include "oracles.hpp"

using namespace ecgcss;
using namespace ecgcss::svm;

namespace {

std::span<const double> row_span(const Eigen::RowVectorXd& r) {
    return {r.data(), static_cast<std::size_t>(r.size())};
}

/// Six tight clusters on the corners of a wide simplex-like layout.
struct Blobs {
    Eigen::MatrixXd x;
    std::vector<ClassLabel> y;
    Eigen::MatrixXd centres;
};

Blobs six_blobs(std::uint64_t seed, int per_class, double spread) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, spread);
    Blobs b;
    b.centres.resize(kNumClasses, 3);
    for (int k = 0; k < kNumClasses; ++k) {
        const double a = 2.0 * 3.14159265358979 * k / kNumClasses;
        b.centres.row(k) << 3.0 * std::cos(a), 3.0 * std::sin(a), (k % 2 ? 1.5 : -1.5);
    }
    b.x.resize(kNumClasses * per_class, 3);
    for (int k = 0; k < kNumClasses; ++k)
        for (int i = 0; i < per_class; ++i) {
            const int r = k * per_class + i;
            for (int d = 0; d < 3; ++d) b.x(r, d) = b.centres(k, d) + g(rng);
            b.y.push_back(kAllLabels[static_cast<std::size_t>(k)]);
        }
    return b;
}

/// Two overlapping classes with label noise; cross-validation prefers a moderate C.
void noisy_pair(std::uint64_t seed, Eigen::MatrixXd& x, std::vector<ClassLabel>& y) {
    const int n = 150;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    x.resize(n, 2);
    y.assign(n, ClassLabel::N);
    for (int i = 0; i < n; ++i) {
        const bool first = i < n * 2 / 3;
        x(i, 0) = g(rng) + (first ? 0.0 : 2.5);
        x(i, 1) = g(rng);
        bool lab = first;
        if (u(rng) < 0.1) lab = !lab;
        y[static_cast<std::size_t>(i)] = lab ? ClassLabel::N : ClassLabel::H;
    }
}

BinarySvm constant_machine(ClassLabel pos, ClassLabel neg, double bias, int dim) {
    BinarySvm m;
    m.positive = pos;
    m.negative = neg;
    m.support_vectors.resize(0, dim);
    m.coef.resize(0);
    m.bias = bias;
    return m;
}

} // namespace

TEST_SUITE("classifier") {

TEST_CASE("rbf kernel examples") {
    const std::vector<double> a{0.0, 0.0}, b{1.0, 1.0}, c{0.3, -2.0};
    CHECK(rbf_kernel(a, a, 0.5) == 1.0);
    CHECK(rbf_kernel(c, c, 7.0) == 1.0);
    CHECK(rbf_kernel(a, b, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(rbf_kernel(a, b, 0.5) == doctest::Approx(0.36788).epsilon(1e-5));
    CHECK(std::abs(rbf_kernel(b, c, 0.7) - rbf_kernel(c, b, 0.7)) <= 1e-15);
    CHECK_THROWS_AS(rbf_kernel(a, b, 0.0), InvalidArgument);
    CHECK_THROWS_AS(rbf_kernel(a, b, -1.0), InvalidArgument);
    const std::vector<double> three{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(rbf_kernel(a, three, 1.0), InvalidArgument);
}

TEST_CASE("gram matrix is symmetric positive semidefinite") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd x = oracle::randn(25, 5, rng);
        const Eigen::MatrixXd k = rbf_gram(x, x, 0.3 + 0.2 * trial);
        CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK(k.diagonal().minCoeff() == 1.0);
        const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff();
        CHECK(lmin >= -1e-8);
        for (int i = 0; i < 25; i += 6)
            for (int j = 0; j < 25; j += 7) {
                const Eigen::RowVectorXd xi = x.row(i), xj = x.row(j);
                CHECK(k(i, j) == doctest::Approx(rbf_kernel(row_span(xi), row_span(xj), 0.3 + 0.2 * trial)).epsilon(1e-12));
            }
    }
}

TEST_CASE("SMO matches a projected-gradient QP solver") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> size(4, 12);
    std::uniform_real_distribution<double> cdist(0.1, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = size(rng);
        const Eigen::MatrixXd x = oracle::randn(n, 3, rng);
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = (i % 2) ? 1 : -1;
        const double c = cdist(rng);
        const Eigen::MatrixXd k = rbf_gram(x, x, 0.5);
        SmoConfig cfg;
        cfg.tolerance = 1e-6;
        const SmoResult r = solve_smo(x, y, c, 0.5, cfg);
        const double qp = oracle::svm_dual_qp(k, y, c);
        CHECK(dual_objective(k, y, r.alpha) == doctest::Approx(qp).epsilon(1e-3));
        CHECK(r.objective == doctest::Approx(dual_objective(k, y, r.alpha)).epsilon(1e-9));
        const SmoResult rk = solve_smo_kernel(k, y, c, cfg);
        CHECK(rk.objective == doctest::Approx(r.objective).epsilon(1e-6));
    }
}

TEST_CASE("KKT conditions hold at the SMO solution") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 40;
        Eigen::MatrixXd x = oracle::randn(n, 2, rng);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            y[static_cast<std::size_t>(i)] = i < n / 2 ? 1 : -1;
            x(i, 0) += i < n / 2 ? 1.0 : -1.0;
        }
        const double c = 0.5 + trial;
        const SmoResult r = solve_smo(x, y, c, 0.8);
        const Eigen::MatrixXd k = rbf_gram(x, x, 0.8);
        Eigen::VectorXd yv(n);
        for (int i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];
        const Eigen::VectorXd coef = r.alpha.cwiseProduct(yv);
        CHECK(r.alpha.minCoeff() >= 0.0);
        CHECK(r.alpha.maxCoeff() <= c + 1e-12);
        CHECK(std::abs(coef.sum()) <= 1e-3);
        const Eigen::VectorXd f = k * coef + Eigen::VectorXd::Constant(n, r.bias);
        for (int i = 0; i < n; ++i) {
            const double a = r.alpha(i);
            const double m = yv(i) * f(i);
            if (a > 1e-6 && a < c - 1e-6) CHECK(std::abs(m - 1.0) <= 1e-2);
            if (a <= 1e-9) CHECK(m >= 1.0 - 1e-2);
            if (a >= c - 1e-9) CHECK(m <= 1.0 + 1e-2);
        }
    }
}

TEST_CASE("two-point SVM with a large C") {
    Eigen::MatrixXd x(2, 1);
    x << 1.0, -1.0;
    const std::vector<int> y{1, -1};
    const SmoResult r = solve_smo(x, y, 1e6, 0.5);
    // alpha = 1 / (1 - K(x1, x2)) puts both points on the margin.
    const double k12 = std::exp(-0.5 * 4.0);
    CHECK(r.alpha(0) == doctest::Approx(1.0 / (1.0 - k12)).epsilon(1e-6));
    CHECK(r.alpha(1) == doctest::Approx(r.alpha(0)).epsilon(1e-9));
    CHECK(std::abs(r.bias) <= 1e-9);
}

TEST_CASE("six separated blobs are classified perfectly") {
    const Blobs b = six_blobs(5, 12, 0.15);
    const OvoSvmModel m = train_ovo(b.x, b.y, 0.5, 10.0);
    CHECK(m.machines.size() == 15);
    CHECK(m.warnings.empty());
    CHECK(m.dim == 3);
    for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
        const Eigen::RowVectorXd r = b.x.row(i);
        CHECK(classify(m, row_span(r)) == b.y[static_cast<std::size_t>(i)]);
    }
    for (int k = 0; k < kNumClasses; ++k) {
        const Eigen::RowVectorXd c = b.centres.row(k);
        const VoteResult v = classify_votes(m, row_span(c));
        CHECK(v.winner == kAllLabels[static_cast<std::size_t>(k)]);
        CHECK(v.votes[static_cast<std::size_t>(k)] == 5);
        int total = 0;
        for (int n : v.votes) total += n;
        CHECK(total == 15);
    }
    const OvoSvmModel m2 = train_ovo(b.x, b.y, 0.5, 10.0, {}, 3);
    for (std::size_t k = 0; k < m.machines.size(); ++k) {
        CHECK(m2.machines[k].bias == m.machines[k].bias);
        CHECK(m2.machines[k].coef == m.machines[k].coef);
    }
}

TEST_CASE("saturated biases decide the vote") {
    for (ClassLabel target : kAllLabels) {
        OvoSvmModel m;
        m.dim = 2;
        for (std::size_t i = 0; i < kAllLabels.size(); ++i)
            for (std::size_t j = i + 1; j < kAllLabels.size(); ++j) {
                const double bias = kAllLabels[j] == target ? -100.0 : 100.0;
                m.machines.push_back(constant_machine(kAllLabels[i], kAllLabels[j], bias, 2));
            }
        const std::vector<double> z{0.4, -1.0};
        const VoteResult v = classify_votes(m, z);
        CHECK(v.winner == target);
        CHECK(v.votes[static_cast<std::size_t>(label_index(target))] == 5);
        CHECK(v.margin[static_cast<std::size_t>(label_index(target))] == doctest::Approx(500.0));
    }
}

TEST_CASE("vote result does not depend on machine storage order") {
    const Blobs b = six_blobs(9, 8, 0.8);
    OvoSvmModel m = train_ovo(b.x, b.y, 0.4, 1.0);
    std::mt19937_64 rng(3);
    std::mt19937_64 pts(8);
    std::vector<Eigen::RowVectorXd> probes;
    for (int i = 0; i < 30; ++i) probes.push_back(oracle::randn(1, 3, pts, 2.5));
    std::vector<VoteResult> before;
    for (const auto& p : probes) before.push_back(classify_votes(m, row_span(p)));
    for (int shuffle = 0; shuffle < 3; ++shuffle) {
        OvoSvmModel s = m;
        std::shuffle(s.machines.begin(), s.machines.end(), rng);
        // Swapping a machine's roles negates its decision.
        for (auto& mach : s.machines)
            if (shuffle == 2) {
                std::swap(mach.positive, mach.negative);
                mach.coef = -mach.coef;
                mach.bias = -mach.bias;
            }
        for (std::size_t i = 0; i < probes.size(); ++i) {
            const VoteResult v = classify_votes(s, row_span(probes[i]));
            CHECK(v.winner == before[i].winner);
            CHECK(v.votes == before[i].votes);
        }
    }
}

TEST_CASE("missing classes produce warnings, single class is rejected") {
    const Blobs b = six_blobs(2, 6, 0.1);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < b.x.rows(); ++i)
        if (b.y[static_cast<std::size_t>(i)] == ClassLabel::N || b.y[static_cast<std::size_t>(i)] == ClassLabel::D ||
            b.y[static_cast<std::size_t>(i)] == ClassLabel::M)
            keep.push_back(i);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(keep.size()), 3);
    std::vector<ClassLabel> y;
    for (std::size_t r = 0; r < keep.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = b.x.row(keep[r]);
        y.push_back(b.y[static_cast<std::size_t>(keep[r])]);
    }
    const OvoSvmModel m = train_ovo(x, y, 0.5, 1.0);
    CHECK(m.machines.size() == 3);
    CHECK(m.warnings.size() == 12);
    const Eigen::RowVectorXd c = b.centres.row(label_index(ClassLabel::M));
    CHECK(classify(m, row_span(c)) == ClassLabel::M);

    const std::vector<ClassLabel> one(static_cast<std::size_t>(x.rows()), ClassLabel::A);
    CHECK_THROWS_AS(train_ovo(x, one, 0.5, 1.0), DataError);
    CHECK_THROWS_AS(train_ovo(x, y, 0.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(train_ovo(x, y, 0.5, -1.0), InvalidArgument);
    const std::vector<ClassLabel> short_labels(y.begin(), y.end() - 1);
    CHECK_THROWS_AS(train_ovo(x, short_labels, 0.5, 1.0), InvalidArgument);
    const std::vector<double> wrong_dim{1.0, 2.0};
    CHECK_THROWS_AS(classify(m, wrong_dim), InvalidArgument);
}

TEST_CASE("grid search prefers moderate regularization on noisy overlapping classes") {
    Eigen::MatrixXd x;
    std::vector<ClassLabel> y;
    noisy_pair(1, x, y);
    const GridSearchResult r = grid_search_c(x, y, 0.5);
    CHECK(r.best_c == 0.5);
    REQUIRE(r.accuracy.size() == kDefaultCGrid.size());
    for (std::size_t g = 0; g < kDefaultCGrid.size(); ++g) CHECK(r.accuracy[g].first == kDefaultCGrid[g]);
    // Both extremes lose to the interior choice.
    CHECK(r.accuracy.front().second < r.accuracy[2].second);
    CHECK(r.accuracy.back().second < r.accuracy[2].second);

    const GridSearchResult again = grid_search_c(x, y, 0.5, kDefaultCGrid, 5, 1, {}, 3);
    CHECK(again.best_c == r.best_c);
    for (std::size_t g = 0; g < r.accuracy.size(); ++g) CHECK(again.accuracy[g].second == r.accuracy[g].second);

    int interior = 0;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        noisy_pair(seed, x, y);
        const double c = grid_search_c(x, y, 0.5).best_c;
        if (c != kDefaultCGrid.front() && c != kDefaultCGrid.back()) ++interior;
    }
    CHECK(interior == 8);
}

TEST_CASE("grid search edge cases") {
    const Blobs b = six_blobs(11, 6, 0.1);
    const std::vector<double> single{3.0};
    const GridSearchResult one = grid_search_c(b.x, b.y, 0.5, single);
    CHECK(one.best_c == 3.0);
    CHECK(one.accuracy.size() == 1);

    const std::vector<double> tied{10.0, 1.0, 100.0};
    const GridSearchResult t = grid_search_c(b.x, b.y, 0.5, tied);
    CHECK(t.accuracy[0].second == 1.0);
    CHECK(t.accuracy[1].second == 1.0);
    CHECK(t.best_c == 1.0);

    const std::vector<double> empty;
    CHECK_THROWS_AS(grid_search_c(b.x, b.y, 0.5, empty), InvalidArgument);
    CHECK_THROWS_AS(grid_search_c(b.x, b.y, 0.5, kDefaultCGrid, 1), InvalidArgument);
    CHECK_THROWS_AS(grid_search_c(b.x, b.y, 0.5, kDefaultCGrid, 7), DataError);
}

TEST_CASE("record label from beat labels") {
    using L = ClassLabel;
    CHECK(label_record(std::vector<L>{L::N, L::N, L::H}) == L::N);
    CHECK(label_record(std::vector<L>{L::H, L::H, L::N, L::N, L::H}) == L::H);
    CHECK(label_record(std::vector<L>{L::H, L::L}) == L::H);
    CHECK(label_record(std::vector<L>{L::N, L::M}) == L::M);
    CHECK(label_record(std::vector<L>{L::A}) == L::A);
    CHECK(label_record(std::vector<L>{L::L, L::A, L::A, L::L, L::N}) == L::A);
    CHECK(label_record(std::vector<L>{L::N, L::H, L::D, L::A, L::M, L::L}) == L::N);
    CHECK_THROWS_AS(label_record(std::vector<L>{}), InvalidArgument);
}

TEST_CASE("default gamma is the reciprocal of dim times variance") {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd x = oracle::randn(40, 7, rng, 3.0);
    double mean = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) mean += x.data()[i];
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) var += (x.data()[i] - mean) * (x.data()[i] - mean);
    var /= static_cast<double>(x.size());
    CHECK(default_gamma(x) == doctest::Approx(1.0 / (7.0 * var)).epsilon(1e-12));
    CHECK(default_gamma(Eigen::MatrixXd::Constant(3, 4, 2.0)) == doctest::Approx(0.25));
    CHECK_THROWS_AS(default_gamma(Eigen::MatrixXd(0, 3)), DataError);
}

TEST_CASE("model save and load round trip") {
    const Blobs b = six_blobs(13, 6, 0.5);
    const OvoSvmModel m = train_ovo(b.x, b.y, 0.45, 2.0);
    const auto path = std::filesystem::temp_directory_path() / "ecgcss_svm_roundtrip.model";
    m.save(path);
    const OvoSvmModel l = OvoSvmModel::load(path);
    std::filesystem::remove(path);
    CHECK(l.gamma == m.gamma);
    CHECK(l.c == m.c);
    CHECK(l.dim == m.dim);
    REQUIRE(l.machines.size() == m.machines.size());
    for (std::size_t k = 0; k < m.machines.size(); ++k) {
        CHECK(l.machines[k].positive == m.machines[k].positive);
        CHECK(l.machines[k].negative == m.machines[k].negative);
        CHECK(l.machines[k].bias == m.machines[k].bias);
        CHECK(l.machines[k].coef == m.machines[k].coef);
        CHECK(l.machines[k].support_vectors == m.machines[k].support_vectors);
    }
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        const Eigen::RowVectorXd p = oracle::randn(1, 3, rng, 2.0);
        CHECK(classify_votes(l, row_span(p)).votes == classify_votes(m, row_span(p)).votes);
    }
}

}
