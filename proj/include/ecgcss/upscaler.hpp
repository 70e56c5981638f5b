#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecgcss/ecg_model.hpp"
#include "ecgcss/model_io.hpp"
#include "ecgcss/wavelet.hpp"

namespace ecgcss::upscaler {

/// L = a + sum_i (b_i1 X_i + b_i2 X_i^2 + b_i3 X_i^3) over the known leads
/// X_i in kKnownLeads order.
struct BandRegressor {
    double bias = 0.0;
    std::array<std::array<double, 3>, 4> coeffs{};  // coeffs[i][p - 1]

    bool finite() const;
    double l1_norm() const;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double l1_lambda = 1e-4;
    int epochs = 200;
    int validation_every = 5;
    int patience = 0;  // validations without improvement before stopping; 0 disables
    int batch_size = 64;
    // Learning rate decays geometrically to learning_rate * final_lr_fraction.
    double final_lr_fraction = 0.01;
    std::uint64_t seed = 1;
    int jobs = 1;

    void validate() const;
};

struct WaveletConfig {
    int level = 3;
    wavelet::Boundary boundary = wavelet::Boundary::Symmetric;
};

enum class Mode {
    Decomposition,  // one regressor per wavelet band
    SequenceLength  // comparison baseline: one regressor over the raw samples
};

struct EpochLoss {
    int epoch = 0;
    double train_mse = 0.0;
    std::optional<double> val_mse;
};

struct UpscalerModel {
    Mode mode = Mode::Decomposition;
    WaveletConfig wavelet;
    int beat_len = 0;
    // Bands ordered A_L, D_1, ..., D_L; a single band in SequenceLength mode.
    std::map<LeadId, std::vector<BandRegressor>> per_lead;
    TrainConfig train;
    std::vector<EpochLoss> history;  // averaged over all regressors
    double final_val_mse = 0.0;

    int band_count() const { return mode == Mode::Decomposition ? wavelet.level + 1 : 1; }
    /// Throws InvalidArgument unless exactly the 8 synthesized leads are present
    /// with band_count() finite regressors each.
    void validate() const;

    ModelContainer to_container() const;
    static UpscalerModel from_container(const ModelContainer& c);
    void save(const std::filesystem::path& path) const;
    static UpscalerModel load(const std::filesystem::path& path);
};

inline constexpr std::string_view kUpscalerKind = "ecgcss.upscaler";

/// Elementwise cubic model over four equal-length known-lead bands
/// (kKnownLeads order).
std::vector<double> predict_band(const BandRegressor& reg,
                                 std::span<const std::vector<double>> known_bands);

// ---------------------------------------------------------------------------
// Polynomial regression with Adam + L1, shared by every band regressor.

/// Raw-space polynomial: y = bias + sum_i sum_p coeffs(i, p-1) x_i^p.
struct PolyFit {
    double bias = 0.0;
    Eigen::MatrixXd coeffs;  // inputs x degree

    Eigen::VectorXd predict(const Eigen::MatrixXd& inputs) const;
};

/// Training objective on whitened polynomial features: powers of the
/// standardized inputs, centred and decorrelated by the symmetric inverse
/// square root of their covariance.
///   J(theta) = mean_j (t_j - a - F_j w)^2 + lambda * sum |w|
/// with theta = (a, w) and t the standardized target. Exposed for gradient checking.
class StandardizedObjective {
public:
    StandardizedObjective(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& target, int degree,
                          double l1_lambda);

    int parameter_count() const { return static_cast<int>(features_.cols()) + 1; }
    double value(const Eigen::VectorXd& theta) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;
    /// Gradient over a subset of rows (the minibatch form used by Adam).
    Eigen::VectorXd gradient(const Eigen::VectorXd& theta, std::span<const int> rows) const;
    /// Converts whitened-space parameters to a raw-space polynomial.
    PolyFit fold(const Eigen::VectorXd& theta) const;

    const Eigen::MatrixXd& features() const { return features_; }
    const Eigen::VectorXd& standardized_target() const { return target_std_; }

private:
    int degree_;
    double l1_;
    Eigen::MatrixXd features_;  // rows x (inputs * degree)
    Eigen::VectorXd target_std_;
    Eigen::VectorXd input_mean_, input_sd_;
    Eigen::VectorXd feature_mean_;
    Eigen::MatrixXd whiten_;
    double target_mean_ = 0.0, target_sd_ = 1.0;
};

struct FitReport {
    double initial_val_mse = 0.0;
    double best_val_mse = 0.0;
    int best_epoch = 0;
    std::vector<EpochLoss> epochs;
    // (epoch, validation objective) every time the kept snapshot improved,
    // starting at epoch 0. The objective is the standardized MSE plus the L1 term.
    std::vector<std::pair<int, double>> snapshots;
};

/// Fits a raw-space polynomial by Adam on the standardized objective from a
/// uniform [0, 1) initialization. Every `validation_every` epochs the
/// objective on the validation rows (or the training rows when none are
/// given) selects the best snapshot.
PolyFit fit_polynomial(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& target,
                       const Eigen::MatrixXd& val_inputs, const Eigen::VectorXd& val_target,
                       int degree, const TrainConfig& cfg, std::mt19937_64& rng,
                       FitReport* report = nullptr);

// ---------------------------------------------------------------------------

/// Trains every (synthesized lead, band) regressor independently from 12-lead beats.
UpscalerModel train_upscaler(std::span<const Beat> train, std::span<const Beat> val,
                             const TrainConfig& cfg, WaveletConfig wavelet = {},
                             Mode mode = Mode::Decomposition);

/// Reconstructs the 8 missing leads of a 4-lead beat; the known leads are
/// copied through unchanged. Output rows follow kAllLeads.
Beat upscale(const UpscalerModel& model, const Beat& beat4);

/// Mean absolute percentage error with per-sample denominators clamped below
/// at `floor`: 100/n * sum |y - yhat| / max(|y|, floor).
double mape(std::span<const double> actual, std::span<const double> predicted, double floor = 0.05);

/// Per-lead pooled MAPE of upscale(to_known_leads(b)) against each 12-lead beat.
std::map<LeadId, double> evaluate_mape(const UpscalerModel& model, std::span<const Beat> beats,
                                       double floor = 0.05);
/// Mean squared error over all synthesized samples.
double evaluate_mse(const UpscalerModel& model, std::span<const Beat> beats);

} // namespace ecgcss::upscaler
