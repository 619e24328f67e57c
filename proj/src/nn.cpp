#include "clsa/nn.hpp"

#include <cmath>

namespace clsa::nn {
namespace {

Parameter make_param(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                     bool trainable = true) {
  Parameter p;
  p.name = name;
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  p.trainable = trainable;
  return p;
}

Matrix dsigmoid(const Matrix& s) { return (s.array() * (1.0 - s.array())).matrix(); }

}  // namespace

Matrix sigmoid(const Matrix& a) {
  return a.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }

Matrix relu_mask(const Matrix& a) {
  return a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Matrix elu(const Matrix& a) {
  return a.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

Matrix elu_grad(const Matrix& a) {
  return a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - mx).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

void glorot_uniform(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * uniform01(rng) - 1.0) * limit;
}

void orthogonal(Matrix& w, Rng& rng) {
  const auto n = std::max(w.rows(), w.cols());
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = standard_normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // Sign fix makes the draw uniform over the orthogonal group.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  w = q.topLeftCorner(w.rows(), w.cols());
}

Dense::Dense(const std::string& name, int in, int out)
    : weight(make_param(name + "/weight", out, in)), bias(make_param(name + "/bias", out, 1)) {}

void Dense::init(Rng& rng) {
  glorot_uniform(weight.value, rng);
  bias.value.setZero();
}

Matrix Dense::forward(const Matrix& x) const {
  Matrix y = weight.value * x;
  y.colwise() += bias.value.col(0);
  return y;
}

Matrix Dense::backward(const Matrix& x, const Matrix& dy) {
  weight.grad.noalias() += dy * x.transpose();
  bias.grad.col(0) += dy.rowwise().sum();
  return weight.value.transpose() * dy;
}

BatchNorm::BatchNorm(const std::string& name, int dim)
    : gamma(make_param(name + "/gamma", dim, 1)),
      beta(make_param(name + "/beta", dim, 1)),
      running_mean(make_param(name + "/running_mean", dim, 1, false)),
      running_var(make_param(name + "/running_var", dim, 1, false)) {
  gamma.value.setOnes();
  running_var.value.setOnes();
}

Matrix BatchNorm::forward(const Matrix& x, bool training, Cache& cache) const {
  const auto batch = static_cast<double>(x.cols());
  Vector mean, var;
  if (training) {
    mean = x.rowwise().mean();
    const Matrix centered = x.colwise() - mean;
    var = centered.array().square().rowwise().sum().matrix() / batch;
  } else {
    mean = running_mean.value.col(0);
    var = running_var.value.col(0);
  }
  cache.mean = mean;
  cache.var = var;
  cache.batch_stats = training;
  cache.inv_std = (var.array() + epsilon).rsqrt().matrix();
  cache.xhat = (x.colwise() - mean).array().colwise() * cache.inv_std.array();
  Matrix y = cache.xhat.array().colwise() * gamma.value.col(0).array();
  y.colwise() += beta.value.col(0);
  return y;
}

void BatchNorm::update_running(const Cache& cache) {
  running_mean.value.col(0) = momentum * running_mean.value.col(0) + (1.0 - momentum) * cache.mean;
  running_var.value.col(0) = momentum * running_var.value.col(0) + (1.0 - momentum) * cache.var;
}

Matrix BatchNorm::backward(const Cache& cache, const Matrix& dy) {
  gamma.grad.col(0) += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
  beta.grad.col(0) += dy.rowwise().sum();
  const Matrix dxhat = dy.array().colwise() * gamma.value.col(0).array();
  if (!cache.batch_stats) return dxhat.array().colwise() * cache.inv_std.array();
  const auto batch = static_cast<double>(dy.cols());
  const Vector sum_d = dxhat.rowwise().sum();
  const Vector sum_dx = (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix();
  Matrix dx = batch * dxhat;
  dx.colwise() -= sum_d;
  dx -= (cache.xhat.array().colwise() * sum_dx.array()).matrix();
  return (dx.array().colwise() * (cache.inv_std.array() / batch)).matrix();
}

LstmEncoder::LstmEncoder(const std::string& name, int input_dim, int hidden_dim)
    : W(make_param(name + "/W", 4 * hidden_dim, input_dim)),
      U(make_param(name + "/U", 4 * hidden_dim, hidden_dim)),
      b(make_param(name + "/b", 4 * hidden_dim, 1)),
      hidden_(hidden_dim) {}

void LstmEncoder::init(Rng& rng) {
  glorot_uniform(W.value, rng);
  const int h = hidden_;
  for (int blk = 0; blk < 4; ++blk) {
    Matrix q(h, h);
    orthogonal(q, rng);
    U.value.block(blk * h, 0, h, h) = q;
  }
  b.value.setZero();
  b.value.block(h, 0, h, 1).setOnes();
}

void LstmEncoder::forward(const std::vector<Matrix>& xs, Trace& tr) const {
  const int h = hidden_;
  const auto steps = xs.size();
  const auto batch = steps ? xs.front().cols() : 0;
  tr = Trace{};
  for (auto* v : {&tr.x, &tr.i, &tr.f, &tr.g, &tr.o, &tr.c, &tr.h, &tr.g_pre}) v->reserve(steps);
  Matrix h_prev = Matrix::Zero(h, batch);
  Matrix c_prev = Matrix::Zero(h, batch);
  for (std::size_t k = 0; k < steps; ++k) {
    Matrix a = W.value * xs[k];
    a.noalias() += U.value * h_prev;
    a.colwise() += b.value.col(0);
    Matrix i = sigmoid(a.middleRows(0, h));
    Matrix f = sigmoid(a.middleRows(h, h));
    Matrix g_pre = a.middleRows(2 * h, h);
    Matrix g = relu(g_pre);
    Matrix o = sigmoid(a.middleRows(3 * h, h));
    Matrix c = (f.array() * c_prev.array() + i.array() * g.array()).matrix();
    Matrix hk = (o.array() * c.array().max(0.0)).matrix();
    tr.x.push_back(xs[k]);
    tr.i.push_back(std::move(i));
    tr.f.push_back(std::move(f));
    tr.g.push_back(std::move(g));
    tr.o.push_back(std::move(o));
    tr.g_pre.push_back(std::move(g_pre));
    tr.c.push_back(c);
    tr.h.push_back(hk);
    h_prev = std::move(hk);
    c_prev = std::move(c);
  }
}

void LstmEncoder::backward(const Trace& tr, const std::vector<Matrix>& dh_ext) {
  const int h = hidden_;
  const int steps = tr.steps();
  if (steps == 0) return;
  const auto batch = tr.h.front().cols();
  Matrix dh_next = Matrix::Zero(h, batch);
  Matrix dc_next = Matrix::Zero(h, batch);
  Matrix da(4 * h, batch);
  const Matrix zeros = Matrix::Zero(h, batch);
  for (int k = steps - 1; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    Matrix dh = dh_next;
    if (ku < dh_ext.size() && dh_ext[ku].size() > 0) dh += dh_ext[ku];
    const auto& c = tr.c[ku];
    const Matrix& c_prev = k > 0 ? tr.c[ku - 1] : zeros;
    const Matrix& h_prev = k > 0 ? tr.h[ku - 1] : zeros;
    const auto& i = tr.i[ku];
    const auto& f = tr.f[ku];
    const auto& g = tr.g[ku];
    const auto& o = tr.o[ku];

    const Matrix d_o = (dh.array() * c.array().max(0.0)).matrix();
    const Matrix dc = dc_next + (dh.array() * o.array() * relu_mask(c).array()).matrix();
    da.middleRows(0, h) = (dc.array() * g.array() * i.array() * (1.0 - i.array())).matrix();
    da.middleRows(h, h) = (dc.array() * c_prev.array() * f.array() * (1.0 - f.array())).matrix();
    da.middleRows(2 * h, h) = (dc.array() * i.array() * relu_mask(tr.g_pre[ku]).array()).matrix();
    da.middleRows(3 * h, h) = (d_o.array() * o.array() * (1.0 - o.array())).matrix();
    dc_next = (dc.array() * f.array()).matrix();

    W.grad.noalias() += da * tr.x[ku].transpose();
    U.grad.noalias() += da * h_prev.transpose();
    b.grad.col(0) += da.rowwise().sum();
    dh_next.noalias() = U.value.transpose() * da;
  }
}

TimeLstm2::TimeLstm2(const std::string& name, int input_dim, int hidden_dim)
    : Wx(make_param(name + "/Wx", 6 * hidden_dim, input_dim)),
      Uh(make_param(name + "/Uh", 4 * hidden_dim, hidden_dim)),
      b(make_param(name + "/b", 6 * hidden_dim, 1)),
      w_t1(make_param(name + "/w_t1", hidden_dim, 1)),
      w_t2(make_param(name + "/w_t2", hidden_dim, 1)),
      w_to(make_param(name + "/w_to", hidden_dim, 1)),
      hidden_(hidden_dim) {}

void TimeLstm2::init(Rng& rng) {
  glorot_uniform(Wx.value, rng);
  const int h = hidden_;
  for (int blk = 0; blk < 4; ++blk) {
    Matrix q(h, h);
    orthogonal(q, rng);
    Uh.value.block(blk * h, 0, h, h) = q;
  }
  b.value.setZero();
  b.value.block(h, 0, h, 1).setOnes();
  for (Eigen::Index r = 0; r < h; ++r) {
    w_t1.value(r, 0) = -uniform01(rng);
    w_t2.value(r, 0) = 2.0 * uniform01(rng) - 1.0;
    w_to.value(r, 0) = 0.2 * uniform01(rng) - 0.1;
  }
}

void TimeLstm2::forward(const std::vector<Matrix>& xs, const std::vector<RowVector>& dts,
                        Trace& tr) const {
  const int h = hidden_;
  const auto steps = xs.size();
  const auto batch = steps ? xs.front().cols() : 0;
  tr = Trace{};
  Matrix h_prev = Matrix::Zero(h, batch);
  Matrix c_prev = Matrix::Zero(h, batch);
  for (std::size_t k = 0; k < steps; ++k) {
    const RowVector& dt = dts[k];
    Matrix ax = Wx.value * xs[k];
    ax.colwise() += b.value.col(0);
    ax.topRows(4 * h).noalias() += Uh.value * h_prev;
    Matrix i = sigmoid(ax.middleRows(0, h));
    Matrix f = sigmoid(ax.middleRows(h, h));
    Matrix g = ax.middleRows(2 * h, h).array().tanh().matrix();
    Matrix o_pre = ax.middleRows(3 * h, h) + w_to.value.col(0) * dt;
    Matrix o = sigmoid(o_pre);
    Matrix s1 = sigmoid(w_t1.value.col(0) * dt);
    Matrix s2 = sigmoid(w_t2.value.col(0) * dt);
    Matrix t1 = sigmoid(ax.middleRows(4 * h, h) + s1);
    Matrix t2 = sigmoid(ax.middleRows(5 * h, h) + s2);
    const Eigen::ArrayXXd carried = f.array() * c_prev.array();
    Matrix c_out = (carried + i.array() * t1.array() * g.array()).matrix();
    Matrix c = (carried + i.array() * t2.array() * g.array()).matrix();
    Matrix hk = (o.array() * c_out.array().tanh()).matrix();
    tr.x.push_back(xs[k]);
    tr.dt.push_back(dt);
    tr.i.push_back(std::move(i));
    tr.f.push_back(std::move(f));
    tr.g.push_back(std::move(g));
    tr.o.push_back(std::move(o));
    tr.s1.push_back(std::move(s1));
    tr.s2.push_back(std::move(s2));
    tr.t1.push_back(std::move(t1));
    tr.t2.push_back(std::move(t2));
    tr.c_out.push_back(std::move(c_out));
    tr.c.push_back(c);
    tr.h.push_back(hk);
    h_prev = std::move(hk);
    c_prev = std::move(c);
  }
}

std::vector<Matrix> TimeLstm2::backward(const Trace& tr, const std::vector<Matrix>& dh_ext) {
  const int h = hidden_;
  const int steps = tr.steps();
  std::vector<Matrix> dx(static_cast<std::size_t>(steps));
  if (steps == 0) return dx;
  const auto batch = tr.h.front().cols();
  Matrix dh_next = Matrix::Zero(h, batch);
  Matrix dc_next = Matrix::Zero(h, batch);
  Matrix dax(6 * h, batch);
  const Matrix zeros = Matrix::Zero(h, batch);
  for (int k = steps - 1; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    Matrix dh = dh_next;
    if (ku < dh_ext.size() && dh_ext[ku].size() > 0) dh += dh_ext[ku];
    const Matrix& c_prev = k > 0 ? tr.c[ku - 1] : zeros;
    const Matrix& h_prev = k > 0 ? tr.h[ku - 1] : zeros;
    const auto i = tr.i[ku].array();
    const auto f = tr.f[ku].array();
    const auto g = tr.g[ku].array();
    const auto o = tr.o[ku].array();
    const auto t1 = tr.t1[ku].array();
    const auto t2 = tr.t2[ku].array();
    const Eigen::ArrayXXd tc = tr.c_out[ku].array().tanh();

    const Eigen::ArrayXXd d_o = dh.array() * tc;
    const Eigen::ArrayXXd dc_out = dh.array() * o * (1.0 - tc.square());
    const Eigen::ArrayXXd dc = dc_next.array();
    const Eigen::ArrayXXd d_carried = dc_out + dc;
    const Eigen::ArrayXXd di = (dc_out * t1 + dc * t2) * g;
    const Eigen::ArrayXXd dg = (dc_out * t1 + dc * t2) * i;
    const Eigen::ArrayXXd dt1 = dc_out * i * g;
    const Eigen::ArrayXXd dt2 = dc * i * g;

    dax.middleRows(0, h) = (di * i * (1.0 - i)).matrix();
    dax.middleRows(h, h) = (d_carried * c_prev.array() * f * (1.0 - f)).matrix();
    dax.middleRows(2 * h, h) = (dg * (1.0 - g.square())).matrix();
    dax.middleRows(3 * h, h) = (d_o * o * (1.0 - o)).matrix();
    dax.middleRows(4 * h, h) = (dt1 * t1 * (1.0 - t1)).matrix();
    dax.middleRows(5 * h, h) = (dt2 * t2 * (1.0 - t2)).matrix();
    dc_next = (d_carried * f).matrix();

    const RowVector& dt = tr.dt[ku];
    const Matrix ds1 = dax.middleRows(4 * h, h).cwiseProduct(dsigmoid(tr.s1[ku]));
    const Matrix ds2 = dax.middleRows(5 * h, h).cwiseProduct(dsigmoid(tr.s2[ku]));
    w_t1.grad.col(0) += ds1 * dt.transpose();
    w_t2.grad.col(0) += ds2 * dt.transpose();
    w_to.grad.col(0) += dax.middleRows(3 * h, h) * dt.transpose();

    Wx.grad.noalias() += dax * tr.x[ku].transpose();
    b.grad.col(0) += dax.rowwise().sum();
    Uh.grad.noalias() += dax.topRows(4 * h) * h_prev.transpose();
    dx[ku] = Wx.value.transpose() * dax;
    dh_next.noalias() = Uh.value.transpose() * dax.topRows(4 * h);
  }
  return dx;
}

void TimeLstm2::clamp_time_weight() { w_t1.value = w_t1.value.cwiseMin(0.0); }

}  // namespace clsa::nn
