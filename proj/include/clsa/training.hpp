#pragma once

#include "clsa/common.hpp"
#include "clsa/evaluation.hpp"
#include "clsa/model.hpp"
#include "clsa/windows.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace clsa::training {

struct OptimizerSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-7;  // decoupled, applied inside the update
  double l2 = 1e-3;            // squared-norm penalty added to the loss
  double clip_norm = 5.0;      // global gradient norm; <= 0 disables
};

struct TrainConfig {
  int model_id = 2;
  int batch_size = 256;
  int encoder_dim = 512;
  int decoder_dim = 512;
  int mlp_dim = 128;
  double learning_rate = 1e-3;
  int epochs = 50;
  int patience = 10;              // 0 disables early stopping
  double validation_fraction = 0.1;
  std::uint64_t seed = 1;
  double mask_rate = 0.3;
  model::LossWeights weights;
  int n_obs = 20;
  OptimizerSettings optimizer;
  model::ContrastiveForm contrastive_form = model::ContrastiveForm::kPrinted;
  model::ContrastiveInput contrastive_input = model::ContrastiveInput::kProjection;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep the values already in `base`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

// Architecture variants 1..5; other fields at their defaults.
TrainConfig variant_config(int model_id);
// Loss-weight ablations "L1".."L7".
model::LossWeights ablation_config(const std::string& id);

// Adam with decoupled weight decay.
class Adam {
 public:
  explicit Adam(OptimizerSettings settings) : s_(settings) {}
  void step(const nn::ParameterList& params, double learning_rate);
  long steps() const { return t_; }

 private:
  OptimizerSettings s_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Penalized tensors: weight matrices only (no biases, no batch-norm affine).
bool is_penalized(const nn::Parameter& p);
// Adds l2 * sum(theta^2) gradients; returns the penalty value.
double add_l2_penalty(const nn::ParameterList& params, double l2);
// Scales gradients so their global norm is at most `max_norm`; returns the pre-clip norm.
double clip_gradients(const nn::ParameterList& params, double max_norm);

struct EpochLosses {
  double cl = 0.0, rn = 0.0, sa = 0.0, total = 0.0;
  double val_total = 0.0;
  std::size_t flagged = 0;
};

struct FoldResult {
  int fold = 0;
  std::vector<EpochLosses> history;
  int best_epoch = 0;
  std::size_t train_windows = 0;
  std::size_t validation_windows = 0;
  std::size_t test_windows = 0;
  evaluation::MetricsReport metrics;
  std::vector<double> test_cif;
  std::vector<int> test_index;  // dataset indices of the test windows
};

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  int n_obs = 0;
  std::vector<FoldResult> folds;
  evaluation::Summary accuracy;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainedFold {
  model::ClsaModel model;
  FoldResult result;
};

// Builds a model config matching `dataset` and `config`.
model::ModelConfig model_config(const windows::PreparedDataset& dataset, const TrainConfig& config);

// Mini-batch boundaries over n items; a trailing singleton joins the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t n, std::size_t batch);

// Trains on every fold except `fold_id` (oversampled), tests on `fold_id`
// with natural class balance. `fold_id` = 0 trains on the whole dataset.
TrainedFold train_fold(const windows::PreparedDataset& dataset, int fold_id,
                       const TrainConfig& config,
                       const std::function<void(int epoch, const EpochLosses&)>& on_epoch = {});

// Folds are evaluated one after another; `on_fold` receives each trained model.
RunRecord cross_validate(const windows::PreparedDataset& dataset, const TrainConfig& config,
                         const std::function<void(const TrainedFold&)>& on_fold = {});

// Predicted CIF per window, in input order.
std::vector<double> predict_cif(const model::ClsaModel& net,
                                std::span<const windows::ContentWindow* const> windows,
                                std::size_t batch_size = 512);

}  // namespace clsa::training
