#include "ecgcss/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <thread>

#include "ecgcss/error.hpp"

namespace ecgcss::svm {

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
    if (x.size() != y.size()) throw InvalidArgument("rbf_kernel: dimension mismatch");
    if (!(gamma > 0.0)) throw InvalidArgument("rbf_kernel: gamma must be positive");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
    if (a.cols() != b.cols()) throw InvalidArgument("rbf_gram: dimension mismatch");
    if (!(gamma > 0.0)) throw InvalidArgument("rbf_gram: gamma must be positive");
    Eigen::MatrixXd k(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            k(i, j) = std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
    return k;
}

namespace {

constexpr double kTau = 1e-12;

/// Lazily filled kernel rows.
class KernelRows {
public:
    KernelRows(std::function<void(Eigen::Index, Eigen::VectorXd&)> fill, Eigen::Index n,
               Eigen::VectorXd diag)
        : fill_(std::move(fill)), rows_(static_cast<std::size_t>(n)), diag_(std::move(diag)) {}

    const Eigen::VectorXd& row(Eigen::Index i) {
        auto& r = rows_[static_cast<std::size_t>(i)];
        if (!r) {
            r.emplace();
            fill_(i, *r);
        }
        return *r;
    }
    double diag(Eigen::Index i) const { return diag_(i); }

private:
    std::function<void(Eigen::Index, Eigen::VectorXd&)> fill_;
    std::vector<std::optional<Eigen::VectorXd>> rows_;
    Eigen::VectorXd diag_;
};

SmoResult smo(KernelRows& kr, std::span<const int> y, double c, const SmoConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (n < 2) throw DataError("SMO: need at least two samples");
    if (!(c > 0.0)) throw InvalidArgument("SMO: C must be positive");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v != 1 && v != -1) throw InvalidArgument("SMO: labels must be +1 or -1");
        has_pos = has_pos || v == 1;
        has_neg = has_neg || v == -1;
    }
    if (!has_pos || !has_neg) throw DataError("SMO: both classes must be present");

    auto yy = [&](Eigen::Index i) { return static_cast<double>(y[static_cast<std::size_t>(i)]); };
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);  // Q alpha - e
    auto up = [&](Eigen::Index t) { return (yy(t) > 0 && alpha(t) < c) || (yy(t) < 0 && alpha(t) > 0); };
    auto low = [&](Eigen::Index t) { return (yy(t) > 0 && alpha(t) > 0) || (yy(t) < 0 && alpha(t) < c); };

    long long iter = 0;
    for (;; ++iter) {
        if (iter >= cfg.max_iterations)
            throw TrainingError("SMO did not converge within " + std::to_string(cfg.max_iterations) + " iterations");
        double gmax = -std::numeric_limits<double>::infinity();
        Eigen::Index i = -1;
        for (Eigen::Index t = 0; t < n; ++t)
            if (up(t) && -yy(t) * grad(t) >= gmax) {
                if (-yy(t) * grad(t) > gmax || i < 0) i = t;
                gmax = -yy(t) * grad(t);
            }
        if (i < 0) break;
        const Eigen::VectorXd& ki = kr.row(i);
        double gmin = std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index j = -1;
        for (Eigen::Index t = 0; t < n; ++t) {
            if (!low(t)) continue;
            const double v = -yy(t) * grad(t);
            gmin = std::min(gmin, v);
            const double b = gmax - v;
            if (b > 0.0) {
                double a = kr.diag(i) + kr.diag(t) - 2.0 * ki(t);
                if (a <= 0.0) a = kTau;
                const double obj = -(b * b) / a;
                if (obj < best) {
                    best = obj;
                    j = t;
                }
            }
        }
        if (gmax - gmin < cfg.tolerance || j < 0) break;

        const Eigen::VectorXd& kj = kr.row(j);
        const double yi = yy(i), yj = yy(j);
        const double qij = yi * yj * ki(j);
        const double ai_old = alpha(i), aj_old = alpha(j);
        double& ai = alpha(i);
        double& aj = alpha(j);
        if (yi != yj) {
            double quad = kr.diag(i) + kr.diag(j) + 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad(i) - grad(j)) / quad;
            const double diff = ai - aj;
            ai += delta;
            aj += delta;
            if (diff > 0) {
                if (aj < 0) {
                    aj = 0;
                    ai = diff;
                }
            } else if (ai < 0) {
                ai = 0;
                aj = -diff;
            }
            if (diff > 0) {
                if (ai > c) {
                    ai = c;
                    aj = c - diff;
                }
            } else if (aj > c) {
                aj = c;
                ai = c + diff;
            }
        } else {
            double quad = kr.diag(i) + kr.diag(j) - 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad(i) - grad(j)) / quad;
            const double sum = ai + aj;
            ai -= delta;
            aj += delta;
            if (sum > c) {
                if (ai > c) {
                    ai = c;
                    aj = sum - c;
                }
            } else if (aj < 0) {
                aj = 0;
                ai = sum;
            }
            if (sum > c) {
                if (aj > c) {
                    aj = c;
                    ai = sum - c;
                }
            } else if (ai < 0) {
                ai = 0;
                aj = sum;
            }
        }
        const double dai = ai - ai_old, daj = aj - aj_old;
        for (Eigen::Index t = 0; t < n; ++t)
            grad(t) += yy(t) * (yi * ki(t) * dai + yj * kj(t) * daj);
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    int n_free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = yy(t) * grad(t);
        if (alpha(t) >= c) {
            if (yy(t) < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (alpha(t) <= 0) {
            if (yy(t) > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;

    SmoResult r;
    r.alpha = alpha;
    r.bias = -rho;
    r.iterations = iter;
    // Q alpha = grad + 1.
    r.objective = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) r.objective += alpha(t) - 0.5 * alpha(t) * (grad(t) + 1.0);
    return r;
}

} // namespace

SmoResult solve_smo(const Eigen::MatrixXd& x, std::span<const int> y, double c, double gamma,
                    const SmoConfig& cfg) {
    if (x.rows() != static_cast<Eigen::Index>(y.size())) throw InvalidArgument("solve_smo: row/label count mismatch");
    if (!(gamma > 0.0)) throw InvalidArgument("solve_smo: gamma must be positive");
    const Eigen::VectorXd sq = x.rowwise().squaredNorm();
    KernelRows kr(
        [&](Eigen::Index i, Eigen::VectorXd& out) {
            out = ((x * x.row(i).transpose()) * 2.0 - sq).array() - sq(i);
            out = (out.array().min(0.0) * gamma).exp().matrix();
        },
        x.rows(), Eigen::VectorXd::Ones(x.rows()));
    return smo(kr, y, c, cfg);
}

SmoResult solve_smo_kernel(const Eigen::MatrixXd& k, std::span<const int> y, double c, const SmoConfig& cfg) {
    if (k.rows() != k.cols() || k.rows() != static_cast<Eigen::Index>(y.size()))
        throw InvalidArgument("solve_smo_kernel: kernel must be square and match the labels");
    KernelRows kr([&](Eigen::Index i, Eigen::VectorXd& out) { out = k.col(i); }, k.rows(), k.diagonal());
    return smo(kr, y, c, cfg);
}

double dual_objective(const Eigen::MatrixXd& k, std::span<const int> y, const Eigen::VectorXd& alpha) {
    Eigen::VectorXd ay(alpha.size());
    for (Eigen::Index i = 0; i < alpha.size(); ++i) ay(i) = alpha(i) * y[static_cast<std::size_t>(i)];
    return alpha.sum() - 0.5 * ay.dot(k * ay);
}

double BinarySvm::decision(std::span<const double> x) const {
    if (static_cast<Eigen::Index>(x.size()) != support_vectors.cols())
        throw InvalidArgument("BinarySvm: latent dimension mismatch");
    const Eigen::Map<const Eigen::RowVectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    double f = bias;
    for (Eigen::Index k = 0; k < support_vectors.rows(); ++k)
        f += coef(k) * std::exp(-gamma * (support_vectors.row(k) - xv).squaredNorm());
    return f;
}

// ---------------------------------------------------------------------------

namespace {

BinarySvm train_pair(const Eigen::MatrixXd& x, std::span<const ClassLabel> labels, ClassLabel pos,
                     ClassLabel neg, double gamma, double c, const SmoConfig& cfg) {
    std::vector<Eigen::Index> rows;
    std::vector<int> y;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == pos || labels[i] == neg) {
            rows.push_back(static_cast<Eigen::Index>(i));
            y.push_back(labels[i] == pos ? 1 : -1);
        }
    }
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
    SmoResult res = solve_smo(sub, y, c, gamma, cfg);
    BinarySvm m;
    m.positive = pos;
    m.negative = neg;
    m.gamma = gamma;
    m.c = c;
    m.bias = res.bias;
    std::vector<Eigen::Index> sv;
    for (Eigen::Index i = 0; i < res.alpha.size(); ++i)
        if (res.alpha(i) > 0.0) sv.push_back(i);
    m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    m.coef.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t k = 0; k < sv.size(); ++k) {
        m.support_vectors.row(static_cast<Eigen::Index>(k)) = sub.row(sv[k]);
        m.coef(static_cast<Eigen::Index>(k)) = res.alpha(sv[k]) * y[static_cast<std::size_t>(sv[k])];
    }
    return m;
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

} // namespace

OvoSvmModel train_ovo(const Eigen::MatrixXd& latents, std::span<const ClassLabel> labels, double gamma,
                      double c, const SmoConfig& cfg, int jobs) {
    if (latents.rows() != static_cast<Eigen::Index>(labels.size()))
        throw InvalidArgument("train_ovo: latent/label count mismatch");
    if (!(gamma > 0.0) || !(c > 0.0)) throw InvalidArgument("train_ovo: gamma and C must be positive");
    std::array<int, kNumClasses> counts{};
    for (ClassLabel l : labels) ++counts[static_cast<std::size_t>(label_index(l))];
    const auto present = std::count_if(counts.begin(), counts.end(), [](int v) { return v > 0; });
    if (present < 2) throw DataError("train_ovo: need samples from at least two classes");

    OvoSvmModel model;
    model.gamma = gamma;
    model.c = c;
    model.dim = static_cast<int>(latents.cols());
    std::vector<std::pair<ClassLabel, ClassLabel>> pairs;
    for (std::size_t i = 0; i < kAllLabels.size(); ++i)
        for (std::size_t j = i + 1; j < kAllLabels.size(); ++j) {
            if (counts[i] == 0 || counts[j] == 0) {
                model.warnings.push_back(std::string("skipped pair ") + label_char(kAllLabels[i]) + "/" +
                                         label_char(kAllLabels[j]) + ": a class has no samples");
                continue;
            }
            pairs.emplace_back(kAllLabels[i], kAllLabels[j]);
        }
    model.machines.resize(pairs.size());
    parallel_for(pairs.size(), jobs, [&](std::size_t p) {
        model.machines[p] = train_pair(latents, labels, pairs[p].first, pairs[p].second, gamma, c, cfg);
    });
    return model;
}

VoteResult classify_votes(const OvoSvmModel& model, std::span<const double> latent) {
    if (static_cast<int>(latent.size()) != model.dim) throw InvalidArgument("classify: latent dimension mismatch");
    if (model.machines.empty()) throw InvalidArgument("classify: model has no machines");
    // Decision values in canonical pair order so the result does not depend on storage order.
    std::array<std::array<std::optional<double>, kNumClasses>, kNumClasses> f{};
    for (const auto& m : model.machines) {
        const int a = label_index(m.positive), b = label_index(m.negative);
        const double v = m.decision(latent);
        if (a < b) f[a][b] = v;
        else f[b][a] = -v;
    }
    VoteResult r;
    for (int a = 0; a < kNumClasses; ++a)
        for (int b = a + 1; b < kNumClasses; ++b) {
            if (!f[a][b]) continue;
            const double v = *f[a][b];
            const int w = v > 0.0 ? a : b;
            ++r.votes[w];
            r.margin[w] += std::abs(v);
        }
    int best = 0;
    for (int k = 1; k < kNumClasses; ++k)
        if (r.votes[k] > r.votes[best] || (r.votes[k] == r.votes[best] && r.margin[k] > r.margin[best])) best = k;
    r.winner = kAllLabels[static_cast<std::size_t>(best)];
    return r;
}

ClassLabel classify(const OvoSvmModel& model, std::span<const double> latent) {
    return classify_votes(model, latent).winner;
}

double default_gamma(const Eigen::MatrixXd& latents) {
    if (latents.size() == 0) throw DataError("default_gamma: empty latent matrix");
    const double mean = latents.mean();
    const double var = (latents.array() - mean).square().mean();
    const double d = static_cast<double>(latents.cols());
    return var > 0.0 ? 1.0 / (d * var) : 1.0 / d;
}

GridSearchResult grid_search_c(const Eigen::MatrixXd& latents, std::span<const ClassLabel> labels, double gamma,
                               const std::vector<double>& grid, int folds, std::uint64_t seed,
                               const SmoConfig& cfg, int jobs) {
    if (grid.empty()) throw InvalidArgument("grid_search_c: empty grid");
    if (folds < 2) throw InvalidArgument("grid_search_c: need at least 2 folds");
    if (latents.rows() != static_cast<Eigen::Index>(labels.size()))
        throw InvalidArgument("grid_search_c: latent/label count mismatch");
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(label_index(labels[i]))].push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<int> fold_of(labels.size(), 0);
    for (auto& idx : by_class) {
        if (idx.empty()) continue;
        if (static_cast<int>(idx.size()) < folds)
            throw DataError("grid_search_c: a class has fewer samples than folds");
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < idx.size(); ++k) fold_of[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    }

    GridSearchResult result;
    result.accuracy.resize(grid.size());
    parallel_for(grid.size(), jobs, [&](std::size_t g) {
        long long correct = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<Eigen::Index> tr, te;
            for (std::size_t i = 0; i < labels.size(); ++i)
                (fold_of[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
            Eigen::MatrixXd xtr(static_cast<Eigen::Index>(tr.size()), latents.cols());
            std::vector<ClassLabel> ytr;
            for (std::size_t r = 0; r < tr.size(); ++r) {
                xtr.row(static_cast<Eigen::Index>(r)) = latents.row(tr[r]);
                ytr.push_back(labels[static_cast<std::size_t>(tr[r])]);
            }
            OvoSvmModel m = train_ovo(xtr, ytr, gamma, grid[g], cfg, 1);
            for (Eigen::Index i : te) {
                Eigen::RowVectorXd row = latents.row(i);
                if (classify(m, std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))) ==
                    labels[static_cast<std::size_t>(i)])
                    ++correct;
            }
        }
        result.accuracy[g] = {grid[g], static_cast<double>(correct) / static_cast<double>(labels.size())};
    });
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        const auto& [c, acc] = result.accuracy[g];
        const auto& [bc, bacc] = result.accuracy[best];
        if (acc > bacc || (acc == bacc && c < bc)) best = g;
    }
    result.best_c = result.accuracy[best].first;
    return result;
}

ClassLabel label_record(std::span<const ClassLabel> beat_labels) {
    if (beat_labels.empty()) throw InvalidArgument("label_record: no beat labels");
    std::array<int, kNumClasses> counts{};
    for (ClassLabel l : beat_labels) ++counts[static_cast<std::size_t>(label_index(l))];
    const int top = *std::max_element(counts.begin(), counts.end());
    std::vector<int> tied;
    for (int k = 0; k < kNumClasses; ++k)
        if (counts[k] == top) tied.push_back(k);
    if (tied.size() == 1) return kAllLabels[static_cast<std::size_t>(tied.front())];
    if (static_cast<int>(tied.size()) == kNumClasses) return ClassLabel::N;
    for (int k : tied)
        if (kAllLabels[static_cast<std::size_t>(k)] != ClassLabel::N) return kAllLabels[static_cast<std::size_t>(k)];
    return ClassLabel::N;
}

// ---------------------------------------------------------------------------

ModelContainer OvoSvmModel::to_container() const {
    ModelContainer out{std::string(kSvmKind)};
    out.set_meta("gamma", format_double(gamma));
    out.set_meta("C", format_double(c));
    out.set_meta("dim", std::to_string(dim));
    out.set_meta("class_order", "N,H,D,A,M,L");
    out.set_meta("machines", std::to_string(machines.size()));
    for (std::size_t k = 0; k < machines.size(); ++k) {
        const auto& m = machines[k];
        const std::string p = "m" + std::to_string(k);
        out.set_meta(p + ".pair", std::string{label_char(m.positive), label_char(m.negative)});
        out.set_meta(p + ".bias", format_double(m.bias));
        out.add_matrix(p + ".sv", m.support_vectors);
        out.add_vector(p + ".coef", std::vector<double>(m.coef.data(), m.coef.data() + m.coef.size()));
    }
    return out;
}

OvoSvmModel OvoSvmModel::from_container(const ModelContainer& c) {
    if (c.kind() != kSvmKind) throw DataError("not an OvO SVM model");
    OvoSvmModel model;
    model.gamma = c.meta_double("gamma");
    model.c = c.meta_double("C");
    model.dim = static_cast<int>(c.meta_int("dim"));
    const auto n = c.meta_int("machines");
    if (n < 1 || n > 15) throw DataError("OvO SVM model: invalid machine count");
    for (long long k = 0; k < n; ++k) {
        const std::string p = "m" + std::to_string(k);
        const std::string& pair = c.meta(p + ".pair");
        if (pair.size() != 2) throw DataError("OvO SVM model: bad class pair '" + pair + "'");
        const auto a = parse_label(pair.substr(0, 1));
        const auto b = parse_label(pair.substr(1, 1));
        if (!a.has_value() || !b.has_value() || a.value() == b.value())
            throw DataError("OvO SVM model: bad class pair '" + pair + "'");
        BinarySvm m;
        m.positive = a.value();
        m.negative = b.value();
        m.bias = c.meta_double(p + ".bias");
        m.gamma = model.gamma;
        m.c = model.c;
        m.support_vectors = c.matrix(p + ".sv");
        const auto coef = c.vector(p + ".coef");
        m.coef = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
        if (m.coef.size() != m.support_vectors.rows() || m.support_vectors.cols() != model.dim)
            throw DataError("OvO SVM model: support vector tensors do not match");
        model.machines.push_back(std::move(m));
    }
    return model;
}

void OvoSvmModel::save(const std::filesystem::path& path) const { to_container().save(path); }

OvoSvmModel OvoSvmModel::load(const std::filesystem::path& path) {
    return from_container(ModelContainer::load(path, kSvmKind));
}

} // namespace ecgcss::svm
