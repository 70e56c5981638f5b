#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgcss/ecg_model.hpp"
#include "ecgcss/model_io.hpp"
#include "ecgcss/nn_layers.hpp"

namespace ecgcss::taes {

/// Architecture and training settings. schedule[0] is the number of input
/// scalars per beat (n_leads * seq_len); schedule[1..] are the output channel
/// counts of the convolutional encoder stages.
struct TaesConfig {
    std::string preset = "table3";
    int d_model = 64;
    int n_heads = 3;
    int n_layers = 4;
    std::vector<int> schedule{360, 252, 128, 72, 56, 32};
    int kernel = 3;
    int pool = 2;
    int n_leads = 12;
    int beat_len = 100;
    int epochs_per_layer = 24;
    int batch_size = 32;
    double learning_rate = 0.01;
    double transformer_lr = 1e-3;  // the transformer block with its temporary head
    double l1_lambda = 1e-6;
    int validation_every = 10;
    int fine_tune_epochs = 0;  // optional whole-stack pass after greedy training
    double fine_tune_lr = 1e-3;
    bool allow_expanding_schedule = false;
    std::uint64_t seed = 1;

    int d_ff() const { return 2 * d_model; }
    int seq_len() const { return schedule.front() / n_leads; }
    int stage_count() const { return static_cast<int>(schedule.size()) - 1; }
    /// Sequence length entering each conv stage and after the last: size stage_count()+1.
    std::vector<int> stage_lengths() const;
    int latent_dim() const;
    void validate() const;

    static TaesConfig table3();
    /// 100 samples x 12 leads fed without resampling.
    static TaesConfig beat1200();
    /// Expanding 32..512 filter schedule over the 1200-scalar input.
    static TaesConfig worked_example();
    /// Tiny single-lead network used for gradient checks.
    static TaesConfig miniature();
    static TaesConfig from_preset(std::string_view name);
};

struct LatentVector {
    std::vector<double> values;
    std::string source;
};

struct LayerLoss {
    std::string stage;  // "transformer", "conv1".."convN", "finetune"
    int epoch = 0;
    double train_mse = 0.0;
    std::optional<double> val_mse;
};

class TaesModel {
public:
    explicit TaesModel(TaesConfig cfg);

    const TaesConfig& config() const noexcept { return cfg_; }

    /// Beat -> seq_len x n_leads token matrix (linear interpolation in time).
    nn::Matrix tokens(const Beat& beat) const;
    /// Tokens -> transformer output (seq_len x d_model).
    nn::Matrix transform(const nn::Matrix& tokens) const;
    /// Tokens -> final encoder activations (last stage length x last channels).
    nn::Matrix encode_tokens(const nn::Matrix& tokens) const;
    /// Tokens -> reconstructed tokens through the full encoder/decoder stack.
    nn::Matrix reconstruct_tokens(const nn::Matrix& tokens) const;

    /// Mean squared reconstruction error of the full stack on one token matrix.
    double full_loss(const nn::Matrix& tokens) const;
    /// Same loss; adds d(loss)/d(param) * scale into every parameter gradient.
    double full_loss_and_grad(const nn::Matrix& tokens, double scale = 1.0);

    std::vector<nn::Param*> parameters();
    std::size_t parameter_count();

    std::vector<LayerLoss> history;

    ModelContainer to_container() const;
    static TaesModel from_container(const ModelContainer& c);
    void save(const std::filesystem::path& path) const;
    static TaesModel load(const std::filesystem::path& path);

    // Layer access for tests and training.
    nn::Linear& embedding() { return embed_; }
    nn::Param& positional() { return pos_; }
    std::vector<nn::TransformerLayer>& layers() { return layers_; }
    std::vector<nn::EncoderStage>& encoders() { return enc_; }
    std::vector<nn::DecoderStage>& decoders() { return dec_; }
    nn::Linear& head() { return head_; }

private:
    friend TaesModel train_taes(std::span<const Beat>, std::span<const Beat>, const TaesConfig&);

    struct TransformerCache {
        nn::Linear::Cache embed;
        std::vector<nn::TransformerLayer::Cache> layers;
    };
    nn::Matrix transform_cached(const nn::Matrix& tokens, TransformerCache* cache) const;
    void transform_backward(const nn::Matrix& d_out, const TransformerCache& cache);
    std::vector<nn::Param*> transformer_params();

    TaesConfig cfg_;
    nn::Linear embed_;
    nn::Param pos_;
    std::vector<nn::TransformerLayer> layers_;
    std::vector<nn::EncoderStage> enc_;
    std::vector<nn::DecoderStage> dec_;
    nn::Linear head_;
};

inline constexpr std::string_view kTaesKind = "ecgcss.taes";

/// Resamples the rows (time axis) of x to `out_len` by linear interpolation.
nn::Matrix interpolate_rows(const nn::Matrix& x, int out_len);

LatentVector encode(const TaesModel& model, const Beat& beat);
/// Fans out over up to `jobs` threads; results are in input order.
std::vector<LatentVector> encode_batch(const TaesModel& model, std::span<const Beat> beats, int jobs = 1);
/// Output has the same lead rows and length as the input.
Beat reconstruct(const TaesModel& model, const Beat& beat);

/// Transformer block first through the linear head, then each conv stage
/// greedily against reconstruction of its own input, earlier stages frozen.
TaesModel train_taes(std::span<const Beat> train, std::span<const Beat> val, const TaesConfig& cfg);

} // namespace ecgcss::taes
