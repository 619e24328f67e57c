#pragma once

#include "clsa/common.hpp"
#include "clsa/nn.hpp"
#include "clsa/windows.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <span>
#include <vector>

namespace clsa::model {

using windows::ContentWindow;

// Contrastive objective: the printed form leaves the positive pair out of
// the denominator; the standard form (InfoNCE, temperature 1) keeps it.
enum class ContrastiveForm { kPrinted, kStandard };
// Which embedding the contrastive objective compares.
enum class ContrastiveInput { kProjection, kHidden };

struct ModelConfig {
  int feature_dim = 28;
  int n_obs = 20;
  int encoder_dim = 512;
  int decoder_dim = 512;
  int mlp_dim = 128;
  int t_total = 2;
  int t_study = 1;
  double mask_rate = 0.3;
  ContrastiveForm contrastive_form = ContrastiveForm::kPrinted;
  ContrastiveInput contrastive_input = ContrastiveInput::kProjection;
  std::uint64_t layout_hash = 0;

  int projection_dim() const { return 5 * feature_dim; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct LossWeights {
  double cl = 0.3;
  double rn = 0.2;
  double sa = 0.5;

  // Non-negative and summing to one within 1e-9.
  void validate() const;
};

inline constexpr double kCifEpsilon = 1e-6;
inline constexpr double kLogEpsilon = 1e-7;

// ---- Augmentations -------------------------------------------------------

// Zeroes each real row independently with probability `mask_rate`.
ContentWindow augment_mask(const ContentWindow& window, double mask_rate, std::uint64_t seed);
// Uniform random permutation of the real rows; padding, t and labels stay.
ContentWindow augment_shuffle(const ContentWindow& window, std::uint64_t seed);

// ---- Losses --------------------------------------------------------------

struct ContrastiveGrad {
  double loss = 0.0;
  Matrix d_anchor;    // same shape as anchors
  Matrix d_positive;  // same shape as positives
};

// Rows are samples: row m of `positives` is the augmented mate of anchor m.
// Similarities are raw dot products. Summed over the batch.
double contrastive_loss(const Matrix& anchors, const Matrix& positives,
                        ContrastiveForm form = ContrastiveForm::kPrinted);
ContrastiveGrad contrastive_loss_grad(const Matrix& anchors, const Matrix& positives,
                                      ContrastiveForm form = ContrastiveForm::kPrinted);

// Sum of squared errors over real rows.
double reconstruction_loss(const Matrix& x, const Matrix& x_hat,
                           std::span<const std::uint8_t> pad_mask);

struct CifResult {
  double value = 0.0;
  bool flagged = false;  // denominator fell to the epsilon floor
};

// `p` covers grid days 1..p.size(). `tau` and `t_last` are grid days; the
// study window is (tau, tau + t_study].
CifResult cif(std::span<const double> p, int tau, int t_study, int t_last);

// Window days mapped to 1-based grid days: day d -> d - first_day + 1.
// When a window is longer than the grid allows the anchor moves forward so
// the study window still ends inside the grid.
struct GridPosition {
  int tau = 0;
  int t_last = 0;
};
GridPosition grid_position(const ContentWindow& window, int t_study, int t_total);

// Two-term negative log-likelihood with F clamped to [1e-7, 1 - 1e-7].
double survival_loss(std::span<const double> cif_values, std::span<const int> labels);

double total_loss(double l_cl, double l_rn, double l_sa, const LossWeights& w);

// Gap to the next request, 0 at the last step.
std::vector<double> time_deltas(const ContentWindow& window);

// ---- Network -------------------------------------------------------------

struct LatentSequence {
  Matrix h;  // n_obs x encoder_dim
  Vector z;  // projection of the last hidden state
};

struct SurvivalDistribution {
  Vector p;  // t_total probabilities over grid days 1..t_total
};

struct BatchLosses {
  double cl = 0.0;
  double rn = 0.0;
  double sa = 0.0;
  double total = 0.0;
  std::size_t flagged = 0;
};

struct Prediction {
  double cif = 0.0;
  bool flagged = false;
  Vector p;
  Vector z;
};

class ClsaModel {
 public:
  ClsaModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  // Every tensor including batch-norm running statistics.
  nn::ParameterList parameters();
  nn::ParameterList trainable_parameters();
  void zero_grad();

  LatentSequence encode(const ContentWindow& window) const;
  // `latents` is n x encoder_dim; returns the n x feature_dim reconstruction.
  Matrix decode(const Matrix& latents, std::span<const double> deltas) const;
  // Inference-mode head (running batch-norm statistics).
  SurvivalDistribution survival_head(const Vector& h_last) const;

  // Batch-mean losses for one mini-batch. Parts with zero weight are skipped
  // and reported as 0. Gradients accumulate into the parameters when
  // `compute_grads` is set. `training` selects batch statistics for
  // batch-norm and updates its running averages.
  BatchLosses forward_backward(std::span<const ContentWindow* const> batch,
                               const LossWeights& weights, std::uint64_t augment_seed,
                               bool training, bool compute_grads);

  std::vector<Prediction> predict(std::span<const ContentWindow* const> batch) const;

  void clamp_constraints() { decoder_.clamp_time_weight(); }

  nn::LstmEncoder& encoder() { return encoder_; }
  nn::TimeLstm2& decoder() { return decoder_; }
  nn::Dense& head_output() { return head_tail_[4]; }

 private:
  struct HeadCache;
  Matrix project(const Matrix& h_last, std::array<Matrix, 3>* pre) const;
  Matrix project_backward(const Matrix& h_last, const std::array<Matrix, 3>& pre,
                          const Matrix& dz);
  Matrix head_forward(const Matrix& h_last, bool training, HeadCache& cache) const;
  Matrix head_backward(const HeadCache& cache, const Matrix& dp);

  ModelConfig config_;
  nn::LstmEncoder encoder_;
  std::array<nn::Dense, 3> projection_;
  nn::TimeLstm2 decoder_;
  nn::Dense decoder_out_;
  std::array<nn::Dense, 3> head_dense_;
  std::array<nn::BatchNorm, 3> head_bn_;
  std::array<nn::Dense, 5> head_tail_;
};

}  // namespace clsa::model
