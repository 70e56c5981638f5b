#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecgcss/ecg_model.hpp"
#include "ecgcss/model_io.hpp"

namespace ecgcss::svm {

/// exp(-gamma * ||x - y||^2).
double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);
Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma);

struct SmoConfig {
    double tolerance = 1e-3;
    long long max_iterations = 1'000'000;
};

/// Soft-margin dual solution for labels y in {-1, +1}:
///   max  sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij,  0 <= alpha <= C,  y^T alpha = 0.
struct SmoResult {
    Eigen::VectorXd alpha;
    double bias = 0.0;  // f(x) = sum alpha_i y_i K(x_i, x) + bias
    long long iterations = 0;
    double objective = 0.0;
};

/// Second-order working-set SMO over a kernel whose rows are produced on demand.
SmoResult solve_smo(const Eigen::MatrixXd& x, std::span<const int> y, double c, double gamma,
                    const SmoConfig& cfg = {});
/// Same solver on a precomputed kernel matrix.
SmoResult solve_smo_kernel(const Eigen::MatrixXd& k, std::span<const int> y, double c,
                           const SmoConfig& cfg = {});

double dual_objective(const Eigen::MatrixXd& k, std::span<const int> y, const Eigen::VectorXd& alpha);

struct BinarySvm {
    ClassLabel positive = ClassLabel::N;  // y = +1
    ClassLabel negative = ClassLabel::H;  // y = -1
    Eigen::MatrixXd support_vectors;      // rows
    Eigen::VectorXd coef;                 // alpha_k * y_k
    double bias = 0.0;
    double gamma = 1.0;
    double c = 1.0;

    double decision(std::span<const double> x) const;
};

struct OvoSvmModel {
    std::vector<BinarySvm> machines;
    double gamma = 1.0;
    double c = 1.0;
    int dim = 0;
    std::vector<std::string> warnings;  // pairs skipped for lack of samples

    ModelContainer to_container() const;
    static OvoSvmModel from_container(const ModelContainer& c);
    void save(const std::filesystem::path& path) const;
    static OvoSvmModel load(const std::filesystem::path& path);
};

inline constexpr std::string_view kSvmKind = "ecgcss.ovo_svm";

/// Trains one machine per unordered class pair present in `labels`, pairs in
/// kAllLabels order with the earlier class as +1. Throws DataError with fewer
/// than two classes.
OvoSvmModel train_ovo(const Eigen::MatrixXd& latents, std::span<const ClassLabel> labels,
                      double gamma, double c, const SmoConfig& cfg = {}, int jobs = 1);

struct VoteResult {
    std::array<int, kNumClasses> votes{};
    std::array<double, kNumClasses> margin{};  // summed |f| of the votes each class received
    ClassLabel winner = ClassLabel::N;
};

/// Majority vote; ties go to the larger summed margin, then to enumeration order.
VoteResult classify_votes(const OvoSvmModel& model, std::span<const double> latent);
ClassLabel classify(const OvoSvmModel& model, std::span<const double> latent);

/// 1 / (dim * var) over every entry of the latent matrix.
double default_gamma(const Eigen::MatrixXd& latents);

inline const std::vector<double> kDefaultCGrid = {0.01, 0.1, 0.5, 1.0, 10.0, 100.0};

struct GridSearchResult {
    double best_c = 0.0;
    std::vector<std::pair<double, double>> accuracy;  // (C, cross-validated accuracy) in grid order
};

/// Stratified k-fold accuracy per C; ties resolve to the smallest C.
GridSearchResult grid_search_c(const Eigen::MatrixXd& latents, std::span<const ClassLabel> labels,
                               double gamma, const std::vector<double>& grid = kDefaultCGrid,
                               int folds = 5, std::uint64_t seed = 1, const SmoConfig& cfg = {},
                               int jobs = 1);

/// Record verdict from beat labels: majority; a tie involving any non-N class
/// goes to the first such class in enumeration order; a tie across all six
/// classes gives N.
ClassLabel label_record(std::span<const ClassLabel> beat_labels);

} // namespace ecgcss::svm
