#include "clsa/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace clsa::model {

using nn::Dense;

void ModelConfig::validate() const {
  if (feature_dim <= 0 || n_obs <= 0 || encoder_dim <= 0 || decoder_dim <= 0 || mlp_dim <= 0 ||
      t_total <= 0 || t_study <= 0)
    throw InputError("model dimensions must be positive");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw InputError("mask_rate must lie in (0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"feature_dim", feature_dim},
          {"n_obs", n_obs},
          {"encoder_dim", encoder_dim},
          {"decoder_dim", decoder_dim},
          {"mlp_dim", mlp_dim},
          {"t_total", t_total},
          {"t_study", t_study},
          {"mask_rate", mask_rate},
          {"contrastive_form",
           contrastive_form == ContrastiveForm::kPrinted ? "printed" : "standard"},
          {"contrastive_input",
           contrastive_input == ContrastiveInput::kProjection ? "projection" : "hidden"},
          {"layout_hash", layout_hash}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim");
  c.n_obs = j.at("n_obs");
  c.encoder_dim = j.at("encoder_dim");
  c.decoder_dim = j.at("decoder_dim");
  c.mlp_dim = j.at("mlp_dim");
  c.t_total = j.at("t_total");
  c.t_study = j.at("t_study");
  c.mask_rate = j.at("mask_rate");
  c.contrastive_form = j.value("contrastive_form", std::string("printed")) == "standard"
                           ? ContrastiveForm::kStandard
                           : ContrastiveForm::kPrinted;
  c.contrastive_input = j.value("contrastive_input", std::string("projection")) == "hidden"
                            ? ContrastiveInput::kHidden
                            : ContrastiveInput::kProjection;
  c.layout_hash = j.value("layout_hash", std::uint64_t{0});
  return c;
}

void LossWeights::validate() const {
  if (cl < 0.0 || rn < 0.0 || sa < 0.0) throw InputError("loss weights must be non-negative");
  if (std::abs(cl + rn + sa - 1.0) > 1e-9) throw InputError("loss weights must sum to 1");
}

ContentWindow augment_mask(const ContentWindow& window, double mask_rate, std::uint64_t seed) {
  ContentWindow out = window;
  Rng rng(seed);
  for (int r = 0; r < window.n_obs(); ++r) {
    if (!window.pad_mask[static_cast<std::size_t>(r)]) continue;
    if (uniform01(rng) < mask_rate) out.x.row(r).setZero();
  }
  return out;
}

ContentWindow augment_shuffle(const ContentWindow& window, std::uint64_t seed) {
  ContentWindow out = window;
  const int first = window.first_real_index();
  const int real = window.n_obs() - first;
  if (real < 2) return out;
  std::vector<int> perm(static_cast<std::size_t>(real));
  for (int i = 0; i < real; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  for (int i = 0; i < real; ++i)
    out.x.row(first + i) = window.x.row(first + perm[static_cast<std::size_t>(i)]);
  return out;
}

ContrastiveGrad contrastive_loss_grad(const Matrix& anchors, const Matrix& positives,
                                      ContrastiveForm form) {
  const auto m = anchors.rows();
  if (m < 2) throw InputError("contrastive loss needs a batch of at least 2");
  if (positives.rows() != m || positives.cols() != anchors.cols())
    throw InputError("anchor/positive shape mismatch");
  const Matrix sim = anchors * positives.transpose();
  Matrix dsim = Matrix::Zero(m, m);
  ContrastiveGrad out;
  for (Eigen::Index r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != r || form == ContrastiveForm::kStandard) mx = std::max(mx, sim(r, j));
    double denom = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != r || form == ContrastiveForm::kStandard) denom += std::exp(sim(r, j) - mx);
    out.loss += -sim(r, r) + mx + std::log(denom);
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != r || form == ContrastiveForm::kStandard)
        dsim(r, j) += std::exp(sim(r, j) - mx) / denom;
    dsim(r, r) -= 1.0;
  }
  out.d_anchor = dsim * positives;
  out.d_positive = dsim.transpose() * anchors;
  return out;
}

double contrastive_loss(const Matrix& anchors, const Matrix& positives, ContrastiveForm form) {
  return contrastive_loss_grad(anchors, positives, form).loss;
}

double reconstruction_loss(const Matrix& x, const Matrix& x_hat,
                           std::span<const std::uint8_t> pad_mask) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols() ||
      static_cast<std::size_t>(x.rows()) != pad_mask.size())
    throw InputError("reconstruction shape mismatch");
  double loss = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    if (pad_mask[static_cast<std::size_t>(r)]) loss += (x_hat.row(r) - x.row(r)).squaredNorm();
  return loss;
}

CifResult cif(std::span<const double> p, int tau, int t_study, int t_last) {
  const int n = static_cast<int>(p.size());
  double num = 0.0;
  for (int d = std::max(tau + 1, 1); d <= std::min(tau + t_study, n); ++d)
    num += p[static_cast<std::size_t>(d - 1)];
  double seen = 0.0;
  for (int d = 1; d <= std::min(t_last, n); ++d) seen += p[static_cast<std::size_t>(d - 1)];
  CifResult r;
  double denom = 1.0 - seen;
  if (denom <= kCifEpsilon) {
    denom = kCifEpsilon;
    r.flagged = true;
  }
  r.value = std::clamp(num / denom, 0.0, 1.0);
  return r;
}

GridPosition grid_position(const ContentWindow& window, int t_study, int t_total) {
  int anchor = window.first_day();
  // Study window must end on or before grid day t_total.
  anchor = std::max(anchor, window.tau + t_study - t_total + 1);
  return {window.tau - anchor + 1, window.t_last - anchor + 1};
}

double survival_loss(std::span<const double> cif_values, std::span<const int> labels) {
  if (cif_values.size() != labels.size()) throw InputError("cif/label length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < cif_values.size(); ++i) {
    const double f = std::clamp(cif_values[i], kLogEpsilon, 1.0 - kLogEpsilon);
    loss -= labels[i] == 1 ? std::log(f) : std::log1p(-f);
  }
  return loss;
}

double total_loss(double l_cl, double l_rn, double l_sa, const LossWeights& w) {
  w.validate();
  return w.cl * l_cl + w.rn * l_rn + w.sa * l_sa;
}

std::vector<double> time_deltas(const ContentWindow& window) {
  const auto n = window.t.size();
  std::vector<double> dt(n, 0.0);
  for (std::size_t k = 0; k + 1 < n; ++k) dt[k] = window.t[k + 1] - window.t[k];
  return dt;
}

// ---- ClsaModel -------------------------------------------------------------

struct ClsaModel::HeadCache {
  Matrix input;
  std::array<Matrix, 3> dense_out;
  std::array<nn::BatchNorm::Cache, 3> bn;
  std::array<Matrix, 3> bn_out;
  std::array<Matrix, 5> tail_in;
  std::array<Matrix, 4> tail_pre;
  Matrix p;
};

ClsaModel::ClsaModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int f = config_.feature_dim;
  const int e = config_.encoder_dim;
  const int m = config_.mlp_dim;
  const int t = config_.t_total;
  encoder_ = nn::LstmEncoder("encoder/lstm", f, e);
  projection_ = {Dense("encoder/proj0", e, f), Dense("encoder/proj1", f, 3 * f),
                 Dense("encoder/proj2", 3 * f, 5 * f)};
  decoder_ = nn::TimeLstm2("decoder/tlstm", e, config_.decoder_dim);
  decoder_out_ = Dense("decoder/out", config_.decoder_dim, f);
  head_dense_ = {Dense("head/dense0", e, m), Dense("head/dense1", m, m),
                 Dense("head/dense2", m, m)};
  head_bn_ = {nn::BatchNorm("head/bn0", m), nn::BatchNorm("head/bn1", m),
              nn::BatchNorm("head/bn2", m)};
  head_tail_ = {Dense("head/tail0", m, 5 * t), Dense("head/tail1", 5 * t, 3 * t),
                Dense("head/tail2", 3 * t, 2 * t), Dense("head/tail3", 2 * t, t),
                Dense("head/tail4", t, t)};

  Rng rng(seed);
  encoder_.init(rng);
  for (auto& d : projection_) d.init(rng);
  decoder_.init(rng);
  decoder_out_.init(rng);
  for (auto& d : head_dense_) d.init(rng);
  for (auto& d : head_tail_) d.init(rng);
}

nn::ParameterList ClsaModel::parameters() {
  nn::ParameterList out;
  encoder_.collect(out);
  for (auto& d : projection_) d.collect(out);
  decoder_.collect(out);
  decoder_out_.collect(out);
  for (int i = 0; i < 3; ++i) {
    head_dense_[static_cast<std::size_t>(i)].collect(out);
    head_bn_[static_cast<std::size_t>(i)].collect(out);
  }
  for (auto& d : head_tail_) d.collect(out);
  return out;
}

nn::ParameterList ClsaModel::trainable_parameters() {
  nn::ParameterList out;
  for (auto* p : parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

void ClsaModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

Matrix ClsaModel::project(const Matrix& h_last, std::array<Matrix, 3>* pre) const {
  Matrix a0 = projection_[0].forward(h_last);
  Matrix a1 = projection_[1].forward(nn::relu(a0));
  Matrix z = projection_[2].forward(nn::relu(a1));
  if (pre) *pre = {std::move(a0), std::move(a1), z};
  return z;
}

Matrix ClsaModel::project_backward(const Matrix& h_last, const std::array<Matrix, 3>& pre,
                                   const Matrix& dz) {
  Matrix d = projection_[2].backward(nn::relu(pre[1]), dz);
  d = d.cwiseProduct(nn::relu_mask(pre[1]));
  d = projection_[1].backward(nn::relu(pre[0]), d);
  d = d.cwiseProduct(nn::relu_mask(pre[0]));
  return projection_[0].backward(h_last, d);
}

Matrix ClsaModel::head_forward(const Matrix& h_last, bool training, HeadCache& c) const {
  c.input = h_last;
  Matrix a = h_last;
  for (std::size_t l = 0; l < 3; ++l) {
    c.dense_out[l] = head_dense_[l].forward(a);
    c.bn_out[l] = head_bn_[l].forward(c.dense_out[l], training, c.bn[l]);
    a = nn::elu(c.bn_out[l]);
  }
  for (std::size_t l = 0; l < 4; ++l) {
    c.tail_in[l] = a;
    c.tail_pre[l] = head_tail_[l].forward(a);
    a = nn::relu(c.tail_pre[l]);
  }
  c.tail_in[4] = a;
  c.p = nn::softmax_columns(head_tail_[4].forward(a));
  return c.p;
}

Matrix ClsaModel::head_backward(const HeadCache& c, const Matrix& dp) {
  // Softmax Jacobian applied column by column.
  const RowVector inner = (dp.array() * c.p.array()).colwise().sum();
  Matrix d = (c.p.array() * (dp.rowwise() - inner).array()).matrix();
  d = head_tail_[4].backward(c.tail_in[4], d);
  for (int l = 3; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    d = d.cwiseProduct(nn::relu_mask(c.tail_pre[lu]));
    d = head_tail_[lu].backward(c.tail_in[lu], d);
  }
  for (int l = 2; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    d = d.cwiseProduct(nn::elu_grad(c.bn_out[lu]));
    d = head_bn_[lu].backward(c.bn[lu], d);
    const Matrix& in = l == 0 ? c.input : nn::elu(c.bn_out[lu - 1]);
    d = head_dense_[lu].backward(in, d);
  }
  return d;
}

namespace {

std::vector<Matrix> step_inputs(std::span<const ContentWindow* const> batch, int n_obs,
                                int dim) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  std::vector<Matrix> xs(static_cast<std::size_t>(n_obs), Matrix(dim, b));
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& w = *batch[static_cast<std::size_t>(j)];
    if (w.x.rows() != n_obs || w.x.cols() != dim)
      throw InputError("window shape does not match the model");
    for (int k = 0; k < n_obs; ++k) xs[static_cast<std::size_t>(k)].col(j) = w.x.row(k).transpose();
  }
  return xs;
}

std::vector<Matrix> step_inputs(const std::vector<ContentWindow>& batch, int n_obs, int dim) {
  std::vector<const ContentWindow*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& w : batch) ptrs.push_back(&w);
  return step_inputs(ptrs, n_obs, dim);
}

std::vector<RowVector> step_deltas(std::span<const ContentWindow* const> batch, int n_obs) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  std::vector<RowVector> dts(static_cast<std::size_t>(n_obs), RowVector::Zero(b));
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto d = time_deltas(*batch[static_cast<std::size_t>(j)]);
    for (int k = 0; k < n_obs; ++k) {
      if (d[static_cast<std::size_t>(k)] < 0) throw InputError("negative time delta");
      dts[static_cast<std::size_t>(k)](j) = d[static_cast<std::size_t>(k)];
    }
  }
  return dts;
}

}  // namespace

LatentSequence ClsaModel::encode(const ContentWindow& window) const {
  const ContentWindow* ptr = &window;
  const auto xs = step_inputs(std::span<const ContentWindow* const>(&ptr, 1), config_.n_obs,
                              config_.feature_dim);
  nn::LstmEncoder::Trace tr;
  encoder_.forward(xs, tr);
  LatentSequence out;
  out.h.resize(config_.n_obs, config_.encoder_dim);
  for (int k = 0; k < config_.n_obs; ++k) out.h.row(k) = tr.h[static_cast<std::size_t>(k)].col(0).transpose();
  out.z = project(tr.h.back(), nullptr).col(0);
  return out;
}

Matrix ClsaModel::decode(const Matrix& latents, std::span<const double> deltas) const {
  const auto n = latents.rows();
  if (latents.cols() != config_.encoder_dim) throw InputError("latent width mismatch");
  if (static_cast<Eigen::Index>(deltas.size()) != n) throw InputError("delta length mismatch");
  std::vector<Matrix> xs;
  std::vector<RowVector> dts;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (deltas[static_cast<std::size_t>(k)] < 0) throw InputError("negative time delta");
    xs.emplace_back(latents.row(k).transpose());
    dts.push_back(RowVector::Constant(1, deltas[static_cast<std::size_t>(k)]));
  }
  nn::TimeLstm2::Trace tr;
  decoder_.forward(xs, dts, tr);
  Matrix out(n, config_.feature_dim);
  for (Eigen::Index k = 0; k < n; ++k)
    out.row(k) = decoder_out_.forward(tr.h[static_cast<std::size_t>(k)]).col(0).transpose();
  return out;
}

SurvivalDistribution ClsaModel::survival_head(const Vector& h_last) const {
  HeadCache cache;
  const Matrix p = head_forward(h_last, false, cache);
  return {p.col(0)};
}

BatchLosses ClsaModel::forward_backward(std::span<const ContentWindow* const> batch,
                                        const LossWeights& weights, std::uint64_t augment_seed,
                                        bool training, bool compute_grads) {
  weights.validate();
  const int n = config_.n_obs;
  const int dim = config_.feature_dim;
  const auto bsz = batch.size();
  const double inv_b = 1.0 / static_cast<double>(bsz);
  BatchLosses out;
  if (bsz == 0) return out;

  const bool use_cl = weights.cl > 0.0 && bsz >= 2;
  const bool use_rn = weights.rn > 0.0;
  const bool use_sa = weights.sa > 0.0;
  const bool need_masked = use_cl || use_rn;

  const auto xs = step_inputs(batch, n, dim);
  nn::LstmEncoder::Trace tr_anchor, tr_masked, tr_shuffled;
  encoder_.forward(xs, tr_anchor);

  std::vector<ContentWindow> masked, shuffled;
  if (need_masked) {
    masked.reserve(bsz);
    for (std::size_t j = 0; j < bsz; ++j)
      masked.push_back(augment_mask(*batch[j], config_.mask_rate,
                                    derive_seed(augment_seed, "mask", j)));
    encoder_.forward(step_inputs(masked, n, dim), tr_masked);
  }
  if (use_cl) {
    shuffled.reserve(bsz);
    for (std::size_t j = 0; j < bsz; ++j)
      shuffled.push_back(augment_shuffle(*batch[j], derive_seed(augment_seed, "shuffle", j)));
    encoder_.forward(step_inputs(shuffled, n, dim), tr_shuffled);
  }

  const auto steps = static_cast<std::size_t>(n);
  std::vector<Matrix> dh_anchor(steps), dh_masked(steps), dh_shuffled(steps);

  // Contrastive block.
  if (use_cl) {
    const bool projected = config_.contrastive_input == ContrastiveInput::kProjection;
    std::array<Matrix, 3> pre_a, pre_m, pre_s;
    const Matrix& ha = tr_anchor.h.back();
    const Matrix& hm = tr_masked.h.back();
    const Matrix& hs = tr_shuffled.h.back();
    const Matrix za = projected ? project(ha, &pre_a) : ha;
    const Matrix zm = projected ? project(hm, &pre_m) : hm;
    const Matrix zs = projected ? project(hs, &pre_s) : hs;
    const auto g_ma = contrastive_loss_grad(za.transpose(), zm.transpose(),
                                            config_.contrastive_form);
    const auto g_sh = contrastive_loss_grad(za.transpose(), zs.transpose(),
                                            config_.contrastive_form);
    out.cl = (g_ma.loss + g_sh.loss) * inv_b;
    if (compute_grads) {
      const double s = weights.cl * inv_b;
      const Matrix dza = s * (g_ma.d_anchor + g_sh.d_anchor).transpose();
      const Matrix dzm = s * g_ma.d_positive.transpose();
      const Matrix dzs = s * g_sh.d_positive.transpose();
      dh_anchor.back() = projected ? project_backward(ha, pre_a, dza) : dza;
      dh_masked.back() = projected ? project_backward(hm, pre_m, dzm) : dzm;
      dh_shuffled.back() = projected ? project_backward(hs, pre_s, dzs) : dzs;
    }
  }

  // Reconstruction block: decode the masked latents back to the original rows.
  if (use_rn) {
    nn::TimeLstm2::Trace tr_dec;
    decoder_.forward(tr_masked.h, step_deltas(batch, n), tr_dec);
    std::vector<Matrix> dh_dec(steps);
    double loss = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      const Matrix xbar = decoder_out_.forward(tr_dec.h[k]);
      Matrix diff = xbar - xs[k];
      for (std::size_t j = 0; j < bsz; ++j)
        if (!batch[j]->pad_mask[k]) diff.col(static_cast<Eigen::Index>(j)).setZero();
      loss += diff.squaredNorm();
      if (compute_grads)
        dh_dec[k] = decoder_out_.backward(tr_dec.h[k], (2.0 * weights.rn * inv_b) * diff);
    }
    out.rn = loss * inv_b;
    if (compute_grads) {
      const auto dx = decoder_.backward(tr_dec, dh_dec);
      for (std::size_t k = 0; k < steps; ++k) {
        if (dh_masked[k].size() == 0)
          dh_masked[k] = dx[k];
        else
          dh_masked[k] += dx[k];
      }
    }
  }

  // Survival block.
  if (use_sa) {
    HeadCache cache;
    const Matrix p = head_forward(tr_anchor.h.back(), training, cache);
    if (training)
      for (std::size_t l = 0; l < 3; ++l) head_bn_[l].update_running(cache.bn[l]);
    const auto t_total = static_cast<int>(p.rows());
    Matrix dp = Matrix::Zero(p.rows(), p.cols());
    double loss = 0.0;
    for (std::size_t j = 0; j < bsz; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      const auto pos = grid_position(*batch[j], config_.t_study, t_total);
      const Vector pj = p.col(col);
      const auto res = cif(std::span<const double>(pj.data(), static_cast<std::size_t>(pj.size())),
                           pos.tau, config_.t_study, pos.t_last);
      out.flagged += res.flagged ? 1 : 0;
      const int y = batch[j]->y;
      const double f = std::clamp(res.value, kLogEpsilon, 1.0 - kLogEpsilon);
      loss -= y == 1 ? std::log(f) : std::log1p(-f);
      if (!compute_grads || f != res.value) continue;
      const double dl_df = (y == 1 ? -1.0 / f : 1.0 / (1.0 - f)) * weights.sa * inv_b;
      double num = 0.0, seen = 0.0;
      for (int d = pos.tau + 1; d <= pos.tau + config_.t_study; ++d) num += pj(d - 1);
      for (int d = 1; d <= pos.t_last; ++d) seen += pj(d - 1);
      const double denom = 1.0 - seen;
      for (int d = pos.tau + 1; d <= pos.tau + config_.t_study; ++d) dp(d - 1, col) += dl_df / denom;
      if (!res.flagged)
        for (int d = 1; d <= pos.t_last; ++d) dp(d - 1, col) += dl_df * num / (denom * denom);
    }
    out.sa = loss * inv_b;
    if (compute_grads) {
      Matrix dh = head_backward(cache, dp);
      if (dh_anchor.back().size() == 0)
        dh_anchor.back() = std::move(dh);
      else
        dh_anchor.back() += dh;
    }
  }

  out.total = weights.cl * out.cl + weights.rn * out.rn + weights.sa * out.sa;

  if (compute_grads) {
    encoder_.backward(tr_anchor, dh_anchor);
    if (need_masked) encoder_.backward(tr_masked, dh_masked);
    if (use_cl) encoder_.backward(tr_shuffled, dh_shuffled);
  }
  return out;
}

std::vector<Prediction> ClsaModel::predict(std::span<const ContentWindow* const> batch) const {
  std::vector<Prediction> out;
  if (batch.empty()) return out;
  const auto xs = step_inputs(batch, config_.n_obs, config_.feature_dim);
  nn::LstmEncoder::Trace tr;
  encoder_.forward(xs, tr);
  HeadCache cache;
  const Matrix p = head_forward(tr.h.back(), false, cache);
  const Matrix z = project(tr.h.back(), nullptr);
  const auto t_total = static_cast<int>(p.rows());
  out.reserve(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    Prediction pr;
    pr.p = p.col(col);
    pr.z = z.col(col);
    const auto pos = grid_position(*batch[j], config_.t_study, t_total);
    const auto res = cif(std::span<const double>(pr.p.data(), static_cast<std::size_t>(pr.p.size())),
                         pos.tau, config_.t_study, pos.t_last);
    pr.cif = res.value;
    pr.flagged = res.flagged;
    out.push_back(std::move(pr));
  }
  return out;
}

}  // namespace clsa::model
