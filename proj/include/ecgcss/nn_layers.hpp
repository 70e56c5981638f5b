#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ecgcss::nn {

using Matrix = Eigen::MatrixXd;

/// Trainable tensor with its gradient accumulator and Adam moments.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix m, v;

    Param() = default;
    Param(std::string n, Matrix init);
    void zero_grad() { grad.setZero(); }
};

/// Adam with a global L1 sub-gradient folded into every step.
struct Adam {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double l1 = 0.0;
    long long t = 0;

    void step(const std::vector<Param*>& params);
    static void reset(const std::vector<Param*>& params);
};

/// Row-wise softmax, shifted by the row maximum.
Matrix softmax_rows(const Matrix& s);

/// softmax(Q K^T / sqrt(d_k)) V. `weights`, when given, receives the attention map.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights = nullptr);

double l1_of(const std::vector<Param*>& params);
/// Glorot-uniform fill.
Matrix glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

// Each layer's forward takes an optional cache; passing nullptr keeps the call
// const and reentrant. backward() accumulates parameter gradients and returns
// the gradient with respect to the layer input.

class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in, int out, std::mt19937_64& rng);

    struct Cache {
        Matrix x;
    };
    Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
    Matrix backward(const Matrix& dy, const Cache& cache);
    std::vector<Param*> params() { return {&w_, &b_}; }
    Param& weight() { return w_; }
    Param& bias() { return b_; }
    const Param& weight() const { return w_; }
    const Param& bias() const { return b_; }

private:
    Param w_;  // in x out
    Param b_;  // 1 x out
};

class LayerNorm {
public:
    static constexpr double kEps = 1e-5;

    LayerNorm() = default;
    LayerNorm(std::string name, int dim);

    struct Cache {
        Matrix xhat;
        Eigen::VectorXd inv_std;
    };
    Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
    Matrix backward(const Matrix& dy, const Cache& cache);
    std::vector<Param*> params() { return {&gain_, &bias_}; }
    Param& gain() { return gain_; }
    Param& bias() { return bias_; }

private:
    Param gain_, bias_;  // 1 x dim
};

/// Heads of width floor(d_model / n_heads); W_O maps n_heads * d_k back to d_model.
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(std::string name, int d_model, int n_heads, std::mt19937_64& rng);

    struct Cache {
        Matrix x, q, k, v, concat;
        std::vector<Matrix> weights;
    };
    Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
    Matrix backward(const Matrix& dy, const Cache& cache);
    std::vector<Param*> params() { return {&wq_, &wk_, &wv_, &wo_}; }
    int heads() const { return heads_; }
    int head_dim() const { return dk_; }
    Param& wq() { return wq_; }
    Param& wk() { return wk_; }
    Param& wv() { return wv_; }
    Param& wo() { return wo_; }

private:
    int heads_ = 1, dk_ = 1;
    Param wq_, wk_, wv_, wo_;
};

class FeedForward {
public:
    FeedForward() = default;
    FeedForward(std::string name, int d_model, int d_ff, std::mt19937_64& rng);

    struct Cache {
        Linear::Cache c1, c2;
        Matrix pre;
    };
    Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
    Matrix backward(const Matrix& dy, const Cache& cache);
    std::vector<Param*> params();
    Linear& first() { return l1_; }
    Linear& second() { return l2_; }

private:
    Linear l1_, l2_;
};

/// Y = LN1(X + MHA(X)); Z = LN2(Y + FFN(Y)).
class TransformerLayer {
public:
    TransformerLayer() = default;
    TransformerLayer(std::string name, int d_model, int n_heads, int d_ff, std::mt19937_64& rng);

    struct Cache {
        MultiHeadAttention::Cache att;
        LayerNorm::Cache ln1, ln2;
        FeedForward::Cache ffn;
    };
    Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
    Matrix backward(const Matrix& dy, const Cache& cache);
    std::vector<Param*> params();

    MultiHeadAttention& attention() { return att_; }
    FeedForward& ffn() { return ffn_; }
    LayerNorm& norm1() { return ln1_; }
    LayerNorm& norm2() { return ln2_; }
    const LayerNorm& norm1() const { return ln1_; }

private:
    MultiHeadAttention att_;
    LayerNorm ln1_, ln2_;
    FeedForward ffn_;
};

/// Stride-1 convolution with zero "same" padding. The kernel is stored as a
/// (k * c_in) x c_out matrix; row t * c_in + c holds tap t of input channel c.
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(std::string name, int c_in, int c_out, int kernel, std::mt19937_64& rng);

    struct Cache {
        Matrix cols;
        Eigen::Index len = 0;
    };
    Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
    Matrix backward(const Matrix& dy, const Cache& cache);
    std::vector<Param*> params() { return {&w_, &b_}; }
    int kernel() const { return kernel_; }
    int in_channels() const { return c_in_; }
    int out_channels() const { return static_cast<int>(w_.value.cols()); }
    double tap(int t, int c, int f) const { return w_.value(t * c_in_ + c, f); }
    Param& weight() { return w_; }
    Param& bias() { return b_; }

private:
    int c_in_ = 1, kernel_ = 3;
    Param w_, b_;
};

/// Non-overlapping max pooling along time; output length ceil(n / p).
Matrix maxpool(const Matrix& x, int p, std::vector<Eigen::Index>* argmax = nullptr);
Matrix maxpool_backward(const Matrix& dy, const std::vector<Eigen::Index>& argmax, Eigen::Index in_rows,
                        int p);

/// Nearest-neighbour upsampling by p, cropped to `out_len` rows.
Matrix upsample(const Matrix& x, int p, Eigen::Index out_len);
Matrix upsample_backward(const Matrix& dy, int p, Eigen::Index in_rows);

/// conv -> ReLU -> maxpool.
class EncoderStage {
public:
    EncoderStage() = default;
    EncoderStage(std::string name, int c_in, int c_out, int kernel, int pool, std::mt19937_64& rng);

    struct Cache {
        Conv1d::Cache conv;
        Matrix pre;
        std::vector<Eigen::Index> argmax;
    };
    Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
    Matrix backward(const Matrix& dy, const Cache& cache);
    std::vector<Param*> params() { return conv_.params(); }
    Conv1d& conv() { return conv_; }
    const Conv1d& conv() const { return conv_; }
    int pool() const { return pool_; }

private:
    Conv1d conv_;
    int pool_ = 2;
};

/// upsample -> conv, linear output.
class DecoderStage {
public:
    DecoderStage() = default;
    DecoderStage(std::string name, int c_in, int c_out, int kernel, int pool, std::mt19937_64& rng);

    struct Cache {
        Conv1d::Cache conv;
        Eigen::Index in_rows = 0;
    };
    Matrix forward(const Matrix& x, Eigen::Index out_len, Cache* cache = nullptr) const;
    Matrix backward(const Matrix& dy, const Cache& cache);
    std::vector<Param*> params() { return conv_.params(); }
    Conv1d& conv() { return conv_; }

private:
    Conv1d conv_;
    int pool_ = 2;
};

} // namespace ecgcss::nn
