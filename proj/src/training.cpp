#include "clsa/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace clsa::training {

namespace {

std::string form_name(model::ContrastiveForm f) {
  return f == model::ContrastiveForm::kPrinted ? "printed" : "standard";
}

std::string input_name(model::ContrastiveInput i) {
  return i == model::ContrastiveInput::kProjection ? "projection" : "hidden";
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size <= 0 || encoder_dim <= 0 || decoder_dim <= 0 || mlp_dim <= 0 || n_obs <= 0)
    throw InputError("batch size and dimensions must be positive");
  if (epochs <= 0) throw InputError("epochs must be positive");
  if (patience < 0) throw InputError("patience must be non-negative");
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw InputError("validation fraction must lie in [0, 1)");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw InputError("mask rate must lie in (0, 1)");
  weights.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"model_id", model_id},
          {"batch_size", batch_size},
          {"encoder_dim", encoder_dim},
          {"decoder_dim", decoder_dim},
          {"mlp_dim", mlp_dim},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"patience", patience},
          {"validation_fraction", validation_fraction},
          {"seed", seed},
          {"mask_rate", mask_rate},
          {"weights", {{"cl", weights.cl}, {"rn", weights.rn}, {"sa", weights.sa}}},
          {"n_obs", n_obs},
          {"optimizer",
           {{"beta1", optimizer.beta1},
            {"beta2", optimizer.beta2},
            {"epsilon", optimizer.epsilon},
            {"weight_decay", optimizer.weight_decay},
            {"l2", optimizer.l2},
            {"clip_norm", optimizer.clip_norm}}},
          {"contrastive_form", form_name(contrastive_form)},
          {"contrastive_input", input_name(contrastive_input)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("model_id", c.model_id);
  get("batch_size", c.batch_size);
  get("encoder_dim", c.encoder_dim);
  get("decoder_dim", c.decoder_dim);
  get("mlp_dim", c.mlp_dim);
  get("learning_rate", c.learning_rate);
  get("epochs", c.epochs);
  get("patience", c.patience);
  get("validation_fraction", c.validation_fraction);
  get("seed", c.seed);
  get("mask_rate", c.mask_rate);
  get("n_obs", c.n_obs);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.cl = w.value("cl", c.weights.cl);
    c.weights.rn = w.value("rn", c.weights.rn);
    c.weights.sa = w.value("sa", c.weights.sa);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
    c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
    c.optimizer.l2 = o.value("l2", c.optimizer.l2);
    c.optimizer.clip_norm = o.value("clip_norm", c.optimizer.clip_norm);
  }
  if (j.contains("contrastive_form")) {
    const auto f = j.at("contrastive_form").get<std::string>();
    if (f != "printed" && f != "standard") throw InputError("unknown contrastive_form " + f);
    c.contrastive_form =
        f == "printed" ? model::ContrastiveForm::kPrinted : model::ContrastiveForm::kStandard;
  }
  if (j.contains("contrastive_input")) {
    const auto i = j.at("contrastive_input").get<std::string>();
    if (i != "projection" && i != "hidden") throw InputError("unknown contrastive_input " + i);
    c.contrastive_input =
        i == "projection" ? model::ContrastiveInput::kProjection : model::ContrastiveInput::kHidden;
  }
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

std::string TrainConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

TrainConfig variant_config(int model_id) {
  struct Row {
    int batch, de, dd, dm;
    double lr;
  };
  static constexpr Row kRows[] = {{512, 512, 512, 128, 1e-3},
                                  {256, 512, 512, 128, 1e-3},
                                  {256, 256, 256, 128, 1e-3},
                                  {256, 512, 512, 32, 1e-3},
                                  {256, 512, 512, 128, 1e-4}};
  if (model_id < 1 || model_id > 5)
    throw InputError("unknown model id " + std::to_string(model_id) + " (expected 1..5)");
  const Row& r = kRows[model_id - 1];
  TrainConfig c;
  c.model_id = model_id;
  c.batch_size = r.batch;
  c.encoder_dim = r.de;
  c.decoder_dim = r.dd;
  c.mlp_dim = r.dm;
  c.learning_rate = r.lr;
  return c;
}

model::LossWeights ablation_config(const std::string& id) {
  if (id == "L1") return {1.0, 0.0, 0.0};
  if (id == "L2") return {0.0, 1.0, 0.0};
  if (id == "L3") return {0.0, 0.0, 1.0};
  if (id == "L4") return {0.5, 0.5, 0.0};
  if (id == "L5") return {0.0, 0.5, 0.5};
  if (id == "L6") return {0.5, 0.0, 0.5};
  if (id == "L7") return {0.3, 0.2, 0.5};
  throw InputError("unknown ablation id " + id + " (expected L1..L7)");
}

void Adam::step(const nn::ParameterList& params, double lr) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw ConsistencyError("optimizer parameter count changed");
  ++t_;
  const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    m_[k] = s_.beta1 * m_[k] + (1.0 - s_.beta1) * p.grad;
    v_[k] = s_.beta2 * v_[k] + (1.0 - s_.beta2) * p.grad.cwiseAbs2();
    const auto step = (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + s_.epsilon);
    p.value.array() -= lr * (step + s_.weight_decay * p.value.array());
  }
}

bool is_penalized(const nn::Parameter& p) {
  return !(ends_with(p.name, "/b") || ends_with(p.name, "/bias") || ends_with(p.name, "/gamma") ||
           ends_with(p.name, "/beta"));
}

double add_l2_penalty(const nn::ParameterList& params, double l2) {
  if (l2 <= 0.0) return 0.0;
  double penalty = 0.0;
  for (auto* p : params) {
    if (!is_penalized(*p)) continue;
    penalty += l2 * p->value.squaredNorm();
    p->grad += 2.0 * l2 * p->value;
  }
  return penalty;
}

double clip_gradients(const nn::ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json jf = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& e : f.history)
      hist.push_back({{"cl", e.cl},
                      {"rn", e.rn},
                      {"sa", e.sa},
                      {"total", e.total},
                      {"val_total", e.val_total},
                      {"flagged", e.flagged}});
    jf.push_back({{"fold", f.fold},
                  {"epochs_run", f.history.size()},
                  {"best_epoch", f.best_epoch},
                  {"train_windows", f.train_windows},
                  {"validation_windows", f.validation_windows},
                  {"test_windows", f.test_windows},
                  {"metrics", f.metrics.to_json()},
                  {"history", hist}});
  }
  return {{"config_hash", config_hash},
          {"seed", seed},
          {"n_obs", n_obs},
          {"folds", jf},
          {"accuracy_mean", accuracy.mean},
          {"accuracy_std", accuracy.stddev},
          {"wall_seconds", wall_seconds}};
}

model::ModelConfig model_config(const windows::PreparedDataset& dataset, const TrainConfig& c) {
  if (dataset.n_obs != c.n_obs)
    throw ConsistencyError("dataset N_o " + std::to_string(dataset.n_obs) +
                           " does not match config n_obs " + std::to_string(c.n_obs));
  model::ModelConfig m;
  m.feature_dim = static_cast<int>(dataset.layout.total_dim());
  if (!dataset.windows.empty() && dataset.windows.front().x.cols() != m.feature_dim)
    throw ConsistencyError("window width does not match the feature layout");
  m.n_obs = dataset.n_obs;
  m.encoder_dim = c.encoder_dim;
  m.decoder_dim = c.decoder_dim;
  m.mlp_dim = c.mlp_dim;
  m.t_total = dataset.t_total;
  m.t_study = dataset.t_study;
  m.mask_rate = c.mask_rate;
  m.contrastive_form = c.contrastive_form;
  m.contrastive_input = c.contrastive_input;
  m.layout_hash = dataset.layout.hash();
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) out.emplace_back(s, std::min(n, s + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = n;
    out.pop_back();
  }
  return out;
}

std::vector<double> predict_cif(const model::ClsaModel& net,
                                std::span<const windows::ContentWindow* const> windows,
                                std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(windows.size());
  for (std::size_t s = 0; s < windows.size(); s += batch_size) {
    const auto preds = net.predict(windows.subspan(s, std::min(batch_size, windows.size() - s)));
    for (const auto& p : preds) out.push_back(p.cif);
  }
  return out;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<Matrix> snapshot(const nn::ParameterList& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

void restore(const nn::ParameterList& params, const std::vector<Matrix>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = values[k];
}

double validation_loss(model::ClsaModel& net, const std::vector<const windows::ContentWindow*>& val,
                       const TrainConfig& c, std::uint64_t seed) {
  double total = 0.0;
  std::size_t n = 0;
  std::size_t b = 0;
  for (const auto& [lo, hi] : batch_bounds(val.size(), static_cast<std::size_t>(c.batch_size))) {
    const std::span<const windows::ContentWindow* const> batch(val.data() + lo, hi - lo);
    const auto l = net.forward_backward(batch, c.weights, derive_seed(seed, "validation", b++),
                                        false, false);
    total += l.total * static_cast<double>(hi - lo);
    n += hi - lo;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

TrainedFold train_fold(const windows::PreparedDataset& dataset, int fold_id,
                       const TrainConfig& config,
                       const std::function<void(int, const EpochLosses&)>& on_epoch) {
  config.validate();
  if (fold_id != 0 && dataset.folds.size() != dataset.windows.size())
    throw InputError("dataset has no fold assignment");
  const auto fold_u = static_cast<std::uint64_t>(fold_id);

  std::vector<std::size_t> pool, test;
  for (std::size_t i = 0; i < dataset.windows.size(); ++i)
    (fold_id != 0 && dataset.folds[i] == fold_id ? test : pool).push_back(i);
  if (pool.empty()) throw InputError("no training windows for fold " + std::to_string(fold_id));

  Rng split_rng(derive_seed(config.seed, "fold", fold_u));
  shuffle(pool, split_rng);
  std::size_t n_val = 0;
  if (config.patience > 0 && config.validation_fraction > 0.0) {
    n_val = static_cast<std::size_t>(std::llround(config.validation_fraction *
                                                  static_cast<double>(pool.size())));
    if (n_val < 2 || pool.size() - n_val < 2) n_val = 0;
  }
  std::vector<std::size_t> val_idx(pool.begin(), pool.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(pool.begin() + static_cast<long>(n_val), pool.end());
  std::sort(train_idx.begin(), train_idx.end());
  train_idx = windows::oversample_indices(dataset.windows, train_idx,
                                          derive_seed(config.seed, "prep", fold_u));

  std::vector<const windows::ContentWindow*> val;
  for (auto i : val_idx) val.push_back(&dataset.windows[i]);

  TrainedFold out{model::ClsaModel(model_config(dataset, config),
                                   derive_seed(config.seed, "train", fold_u)),
                  {}};
  auto& net = out.model;
  auto& res = out.result;
  res.fold = fold_id;
  res.train_windows = train_idx.size();
  res.validation_windows = val.size();
  res.test_windows = test.size();

  const auto params = net.trainable_parameters();
  Adam adam(config.optimizer);
  Rng order_rng(derive_seed(config.seed, "train", 1000 + fold_u));
  const std::uint64_t aug_root = derive_seed(config.seed, "augment", fold_u);

  double best = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_values;
  int since_best = 0;
  std::vector<const windows::ContentWindow*> batch_ptrs;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(train_idx, order_rng);
    EpochLosses el;
    std::size_t seen = 0;
    std::size_t b = 0;
    for (const auto& [lo, hi] :
         batch_bounds(train_idx.size(), static_cast<std::size_t>(config.batch_size))) {
      batch_ptrs.clear();
      for (std::size_t k = lo; k < hi; ++k) batch_ptrs.push_back(&dataset.windows[train_idx[k]]);
      net.zero_grad();
      const auto seed = derive_seed(aug_root, "batch",
                                    (static_cast<std::uint64_t>(epoch) << 32) | b);
      const auto l = net.forward_backward(batch_ptrs, config.weights, seed, true, true);
      if (!std::isfinite(l.total))
        throw NumericalError("non-finite loss at fold " + std::to_string(fold_id) + " epoch " +
                             std::to_string(epoch) + " batch " + std::to_string(b) +
                             " (cl=" + std::to_string(l.cl) + " rn=" + std::to_string(l.rn) +
                             " sa=" + std::to_string(l.sa) + ")");
      add_l2_penalty(params, config.optimizer.l2);
      clip_gradients(params, config.optimizer.clip_norm);
      adam.step(params, config.learning_rate);
      net.clamp_constraints();

      const auto w = static_cast<double>(hi - lo);
      el.cl += l.cl * w;
      el.rn += l.rn * w;
      el.sa += l.sa * w;
      el.total += l.total * w;
      el.flagged += l.flagged;
      seen += hi - lo;
      ++b;
    }
    const auto n = static_cast<double>(seen);
    el.cl /= n;
    el.rn /= n;
    el.sa /= n;
    el.total /= n;
    if (!val.empty()) el.val_total = validation_loss(net, val, config, aug_root);
    res.history.push_back(el);
    if (on_epoch) on_epoch(epoch, el);

    if (val.empty()) {
      res.best_epoch = epoch;
      continue;
    }
    if (el.val_total < best) {
      best = el.val_total;
      best_values = snapshot(net.parameters());
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (!best_values.empty()) restore(net.parameters(), best_values);

  if (!test.empty()) {
    std::vector<const windows::ContentWindow*> tw;
    std::vector<int> truth;
    for (auto i : test) {
      tw.push_back(&dataset.windows[i]);
      truth.push_back(dataset.windows[i].y);
      res.test_index.push_back(static_cast<int>(i));
    }
    res.test_cif = predict_cif(net, tw);
    const auto pred = evaluation::classify(res.test_cif);
    res.metrics = evaluation::metrics(pred, truth);
    res.metrics.fold = fold_id;
    res.metrics.n_obs = dataset.n_obs;
  }
  return out;
}

RunRecord cross_validate(const windows::PreparedDataset& dataset, const TrainConfig& config,
                         const std::function<void(const TrainedFold&)>& on_fold) {
  const auto start = std::chrono::steady_clock::now();
  if (dataset.k < 2 || dataset.folds.size() != dataset.windows.size())
    throw InputError("dataset has no fold assignment");
  RunRecord rec;
  rec.config_hash = config.hash();
  rec.seed = config.seed;
  rec.n_obs = dataset.n_obs;
  std::vector<double> acc;
  for (int f = 1; f <= dataset.k; ++f) {
    auto trained = train_fold(dataset, f, config);
    acc.push_back(trained.result.metrics.accuracy);
    if (on_fold) on_fold(trained);
    rec.folds.push_back(std::move(trained.result));
  }
  rec.accuracy = evaluation::summarize(acc);
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace clsa::training
