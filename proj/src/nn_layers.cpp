#include "ecgcss/nn_layers.hpp"

#include <cmath>

#include "ecgcss/error.hpp"

namespace ecgcss::nn {

Param::Param(std::string n, Matrix init)
    : name(std::move(n)), value(std::move(init)) {
    grad = Matrix::Zero(value.rows(), value.cols());
    m = grad;
    v = grad;
}

void Adam::step(const std::vector<Param*>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (Param* p : params) {
        Matrix g = p->grad;
        if (l1 > 0.0) g += l1 * p->value.unaryExpr([](double w) { return w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0); });
        p->m = beta1 * p->m + (1.0 - beta1) * g;
        p->v = beta2 * p->v + (1.0 - beta2) * g.cwiseProduct(g);
        p->value.array() -= lr * (p->m.array() / bc1) / ((p->v.array() / bc2).sqrt() + epsilon);
    }
}

void Adam::reset(const std::vector<Param*>& params) {
    for (Param* p : params) {
        p->m.setZero();
        p->v.setZero();
        p->grad.setZero();
    }
}

Matrix softmax_rows(const Matrix& s) {
    Matrix out(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double mx = s.row(r).maxCoeff();
        Eigen::RowVectorXd e = (s.row(r).array() - mx).exp().matrix();
        out.row(r) = e / e.sum();
    }
    return out;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights) {
    if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() < 1)
        throw ShapeError("attention: Q, K, V shapes do not conform");
    Matrix a = softmax_rows((q * k.transpose()) / std::sqrt(static_cast<double>(q.cols())));
    Matrix out = a * v;
    if (weights) *weights = std::move(a);
    return out;
}

double l1_of(const std::vector<Param*>& params) {
    double s = 0.0;
    for (const Param* p : params) s += p->value.lpNorm<1>();
    return s;
}

Matrix glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
}

// ---------------------------------------------------------------------------

Linear::Linear(std::string name, int in, int out, std::mt19937_64& rng)
    : w_(name + ".w", glorot(in, out, rng)), b_(name + ".b", Matrix::Zero(1, out)) {}

Matrix Linear::forward(const Matrix& x, Cache* cache) const {
    if (x.cols() != w_.value.rows()) throw ShapeError("Linear: input width mismatch");
    Matrix y = x * w_.value;
    y.rowwise() += b_.value.row(0);
    if (cache) cache->x = x;
    return y;
}

Matrix Linear::backward(const Matrix& dy, const Cache& cache) {
    w_.grad.noalias() += cache.x.transpose() * dy;
    b_.grad += dy.colwise().sum();
    return dy * w_.value.transpose();
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(std::string name, int dim)
    : gain_(name + ".gain", Matrix::Ones(1, dim)), bias_(name + ".bias", Matrix::Zero(1, dim)) {}

Matrix LayerNorm::forward(const Matrix& x, Cache* cache) const {
    if (x.cols() != gain_.value.cols()) throw ShapeError("LayerNorm: width mismatch");
    const auto d = static_cast<double>(x.cols());
    Matrix xhat(x.rows(), x.cols());
    Eigen::VectorXd inv(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().sum() / d;
        inv(r) = 1.0 / std::sqrt(var + kEps);
        xhat.row(r) = (x.row(r).array() - mu) * inv(r);
    }
    Matrix y = xhat.array().rowwise() * gain_.value.row(0).array();
    y.rowwise() += bias_.value.row(0);
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv);
    }
    return y;
}

Matrix LayerNorm::backward(const Matrix& dy, const Cache& cache) {
    gain_.grad += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    bias_.grad += dy.colwise().sum();
    Matrix dxhat = dy.array().rowwise() * gain_.value.row(0).array();
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double mean_d = dxhat.row(r).mean();
        const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / static_cast<double>(dy.cols());
        dx.row(r) = cache.inv_std(r) *
                    (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
    }
    return dx;
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::string name, int d_model, int n_heads,
                                       std::mt19937_64& rng)
    : heads_(n_heads), dk_(d_model / n_heads) {
    if (n_heads < 1 || dk_ < 1) throw InvalidArgument("MultiHeadAttention: need 1 <= heads <= d_model");
    const int inner = heads_ * dk_;
    wq_ = Param(name + ".wq", glorot(d_model, inner, rng));
    wk_ = Param(name + ".wk", glorot(d_model, inner, rng));
    wv_ = Param(name + ".wv", glorot(d_model, inner, rng));
    wo_ = Param(name + ".wo", glorot(inner, d_model, rng));
}

Matrix MultiHeadAttention::forward(const Matrix& x, Cache* cache) const {
    if (x.cols() != wq_.value.rows()) throw ShapeError("MultiHeadAttention: width mismatch");
    Matrix q = x * wq_.value, k = x * wk_.value, v = x * wv_.value;
    Matrix concat(x.rows(), heads_ * dk_);
    std::vector<Matrix> weights(cache ? heads_ : 0);
    for (int h = 0; h < heads_; ++h) {
        concat.middleCols(h * dk_, dk_) =
            attention(q.middleCols(h * dk_, dk_), k.middleCols(h * dk_, dk_),
                      v.middleCols(h * dk_, dk_), cache ? &weights[h] : nullptr);
    }
    Matrix y = concat * wo_.value;
    if (cache) {
        cache->x = x;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->concat = std::move(concat);
        cache->weights = std::move(weights);
    }
    return y;
}

Matrix MultiHeadAttention::backward(const Matrix& dy, const Cache& c) {
    wo_.grad.noalias() += c.concat.transpose() * dy;
    Matrix dconcat = dy * wo_.value.transpose();
    Matrix dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk_));
    for (int h = 0; h < heads_; ++h) {
        const Matrix& a = c.weights[h];
        const auto dout = dconcat.middleCols(h * dk_, dk_);
        Matrix da = dout * c.v.middleCols(h * dk_, dk_).transpose();
        dv.middleCols(h * dk_, dk_) = a.transpose() * dout;
        Eigen::VectorXd rowdot = (da.array() * a.array()).rowwise().sum();
        Matrix ds = (a.array() * (da.array().colwise() - rowdot.array())).matrix() * scale;
        dq.middleCols(h * dk_, dk_) = ds * c.k.middleCols(h * dk_, dk_);
        dk.middleCols(h * dk_, dk_) = ds.transpose() * c.q.middleCols(h * dk_, dk_);
    }
    wq_.grad.noalias() += c.x.transpose() * dq;
    wk_.grad.noalias() += c.x.transpose() * dk;
    wv_.grad.noalias() += c.x.transpose() * dv;
    return dq * wq_.value.transpose() + dk * wk_.value.transpose() + dv * wv_.value.transpose();
}

// ---------------------------------------------------------------------------

FeedForward::FeedForward(std::string name, int d_model, int d_ff, std::mt19937_64& rng)
    : l1_(name + ".ff1", d_model, d_ff, rng), l2_(name + ".ff2", d_ff, d_model, rng) {}

Matrix FeedForward::forward(const Matrix& x, Cache* cache) const {
    Matrix pre = l1_.forward(x, cache ? &cache->c1 : nullptr);
    Matrix h = pre.cwiseMax(0.0);
    Matrix y = l2_.forward(h, cache ? &cache->c2 : nullptr);
    if (cache) cache->pre = std::move(pre);
    return y;
}

Matrix FeedForward::backward(const Matrix& dy, const Cache& cache) {
    Matrix dh = l2_.backward(dy, cache.c2);
    dh = (cache.pre.array() > 0.0).select(dh, 0.0);
    return l1_.backward(dh, cache.c1);
}

std::vector<Param*> FeedForward::params() {
    auto p = l1_.params();
    auto q = l2_.params();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

// ---------------------------------------------------------------------------

TransformerLayer::TransformerLayer(std::string name, int d_model, int n_heads, int d_ff,
                                   std::mt19937_64& rng)
    : att_(name + ".att", d_model, n_heads, rng),
      ln1_(name + ".ln1", d_model),
      ln2_(name + ".ln2", d_model),
      ffn_(name, d_model, d_ff, rng) {}

Matrix TransformerLayer::forward(const Matrix& x, Cache* cache) const {
    Matrix y = ln1_.forward(x + att_.forward(x, cache ? &cache->att : nullptr),
                            cache ? &cache->ln1 : nullptr);
    return ln2_.forward(y + ffn_.forward(y, cache ? &cache->ffn : nullptr),
                        cache ? &cache->ln2 : nullptr);
}

Matrix TransformerLayer::backward(const Matrix& dz, const Cache& cache) {
    Matrix dsum2 = ln2_.backward(dz, cache.ln2);
    Matrix dy = dsum2 + ffn_.backward(dsum2, cache.ffn);
    Matrix dsum1 = ln1_.backward(dy, cache.ln1);
    return dsum1 + att_.backward(dsum1, cache.att);
}

std::vector<Param*> TransformerLayer::params() {
    std::vector<Param*> p = att_.params();
    for (auto* q : ln1_.params()) p.push_back(q);
    for (auto* q : ffn_.params()) p.push_back(q);
    for (auto* q : ln2_.params()) p.push_back(q);
    return p;
}

// ---------------------------------------------------------------------------

Conv1d::Conv1d(std::string name, int c_in, int c_out, int kernel, std::mt19937_64& rng)
    : c_in_(c_in), kernel_(kernel) {
    if (c_in < 1 || c_out < 1 || kernel < 1) throw InvalidArgument("Conv1d: channels and kernel must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(kernel * c_in + c_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(kernel * c_in, c_out);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    w_ = Param(name + ".w", std::move(w));
    b_ = Param(name + ".b", Matrix::Zero(1, c_out));
}

Matrix Conv1d::forward(const Matrix& x, Cache* cache) const {
    if (x.cols() != c_in_) throw ShapeError("Conv1d: channel mismatch");
    if (x.rows() < 1) throw ShapeError("Conv1d: empty input");
    const Eigen::Index n = x.rows();
    const int pad = (kernel_ - 1) / 2;
    Matrix cols = Matrix::Zero(n, static_cast<Eigen::Index>(kernel_) * c_in_);
    for (int t = 0; t < kernel_; ++t) {
        const Eigen::Index shift = t - pad;
        const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
        const Eigen::Index hi = std::min<Eigen::Index>(n, n - shift);
        if (hi > lo) cols.block(lo, t * c_in_, hi - lo, c_in_) = x.middleRows(lo + shift, hi - lo);
    }
    Matrix y = cols * w_.value;
    y.rowwise() += b_.value.row(0);
    if (cache) {
        cache->cols = std::move(cols);
        cache->len = n;
    }
    return y;
}

Matrix Conv1d::backward(const Matrix& dy, const Cache& cache) {
    w_.grad.noalias() += cache.cols.transpose() * dy;
    b_.grad += dy.colwise().sum();
    Matrix dcols = dy * w_.value.transpose();
    const Eigen::Index n = cache.len;
    const int pad = (kernel_ - 1) / 2;
    Matrix dx = Matrix::Zero(n, c_in_);
    for (int t = 0; t < kernel_; ++t) {
        const Eigen::Index shift = t - pad;
        const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
        const Eigen::Index hi = std::min<Eigen::Index>(n, n - shift);
        if (hi > lo) dx.middleRows(lo + shift, hi - lo) += dcols.block(lo, t * c_in_, hi - lo, c_in_);
    }
    return dx;
}

// ---------------------------------------------------------------------------

Matrix maxpool(const Matrix& x, int p, std::vector<Eigen::Index>* argmax) {
    if (p < 1) throw InvalidArgument("maxpool: pool size must be positive");
    const Eigen::Index out_len = (x.rows() + p - 1) / p;
    Matrix y(out_len, x.cols());
    if (argmax) argmax->assign(static_cast<std::size_t>(out_len * x.cols()), 0);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (Eigen::Index i = 0; i < out_len; ++i) {
            Eigen::Index best = i * p;
            for (Eigen::Index r = i * p + 1; r < std::min<Eigen::Index>(x.rows(), (i + 1) * p); ++r)
                if (x(r, c) > x(best, c)) best = r;
            y(i, c) = x(best, c);
            if (argmax) (*argmax)[static_cast<std::size_t>(c * out_len + i)] = best;
        }
    return y;
}

Matrix maxpool_backward(const Matrix& dy, const std::vector<Eigen::Index>& argmax,
                        Eigen::Index in_rows, int /*p*/) {
    Matrix dx = Matrix::Zero(in_rows, dy.cols());
    for (Eigen::Index c = 0; c < dy.cols(); ++c)
        for (Eigen::Index i = 0; i < dy.rows(); ++i)
            dx(argmax[static_cast<std::size_t>(c * dy.rows() + i)], c) += dy(i, c);
    return dx;
}

Matrix upsample(const Matrix& x, int p, Eigen::Index out_len) {
    if (out_len > x.rows() * p) throw ShapeError("upsample: requested length exceeds p * input");
    Matrix y(out_len, x.cols());
    for (Eigen::Index i = 0; i < out_len; ++i) y.row(i) = x.row(i / p);
    return y;
}

Matrix upsample_backward(const Matrix& dy, int p, Eigen::Index in_rows) {
    Matrix dx = Matrix::Zero(in_rows, dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) dx.row(i / p) += dy.row(i);
    return dx;
}

// ---------------------------------------------------------------------------

EncoderStage::EncoderStage(std::string name, int c_in, int c_out, int kernel, int pool,
                           std::mt19937_64& rng)
    : conv_(name + ".conv", c_in, c_out, kernel, rng), pool_(pool) {}

Matrix EncoderStage::forward(const Matrix& x, Cache* cache) const {
    Matrix pre = conv_.forward(x, cache ? &cache->conv : nullptr);
    Matrix y = maxpool(pre.cwiseMax(0.0), pool_, cache ? &cache->argmax : nullptr);
    if (cache) cache->pre = std::move(pre);
    return y;
}

Matrix EncoderStage::backward(const Matrix& dy, const Cache& cache) {
    Matrix dact = maxpool_backward(dy, cache.argmax, cache.pre.rows(), pool_);
    dact = (cache.pre.array() > 0.0).select(dact, 0.0);
    return conv_.backward(dact, cache.conv);
}

DecoderStage::DecoderStage(std::string name, int c_in, int c_out, int kernel, int pool,
                           std::mt19937_64& rng)
    : conv_(name + ".conv", c_in, c_out, kernel, rng), pool_(pool) {}

Matrix DecoderStage::forward(const Matrix& x, Eigen::Index out_len, Cache* cache) const {
    Matrix up = upsample(x, pool_, out_len);
    if (cache) cache->in_rows = x.rows();
    return conv_.forward(up, cache ? &cache->conv : nullptr);
}

Matrix DecoderStage::backward(const Matrix& dy, const Cache& cache) {
    return upsample_backward(conv_.backward(dy, cache.conv), pool_, cache.in_rows);
}

} // namespace ecgcss::nn
