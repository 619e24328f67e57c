#pragma once

#include "clsa/model.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace clsa::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // tensor name of the worst entry
  std::size_t checked = 0;
};

struct TinySetup {
  model::ModelConfig config;
  std::vector<windows::ContentWindow> windows;
  std::vector<const windows::ContentWindow*> batch;
};

// D_E = 4, N_o = 3, batch of 3 with one padded window and mixed labels.
inline TinySetup tiny_setup(std::uint64_t seed) {
  TinySetup s;
  s.config.feature_dim = 5;
  s.config.n_obs = 3;
  s.config.encoder_dim = 4;
  s.config.decoder_dim = 4;
  s.config.mlp_dim = 4;
  s.config.t_study = 1;
  Rng rng(seed);
  s.windows.push_back(random_window(rng, 3, 5, 3, 1, 1));
  s.windows.push_back(random_window(rng, 3, 5, 2, 0, 2));
  s.windows.push_back(random_window(rng, 3, 5, 3, 0, 3));
  s.config.t_total = windows::compute_t_total(s.windows, s.config.t_study);
  for (const auto& w : s.windows) s.batch.push_back(&w);
  return s;
}

// Moves every trainable tensor off the zero-bias initialization so that no
// ReLU sits exactly on its kink (padded steps see pre-activation = bias).
inline void jitter(model::ClsaModel& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : net.trainable_parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      p->value.data()[i] += 0.1 * standard_normal(rng);
  net.clamp_constraints();
}

// Central differences over every trainable entry. Relative error is
// |a - n| / max(|a| + |n|, floor).
inline GradCheckResult gradient_check(model::ClsaModel& net,
                                      std::span<const windows::ContentWindow* const> batch,
                                      const model::LossWeights& weights, double step = 1e-5,
                                      double floor = 1e-6) {
  const std::uint64_t aug = 1234;
  net.zero_grad();
  net.forward_backward(batch, weights, aug, true, true);
  GradCheckResult r;
  for (auto* p : net.trainable_parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + step;
      const double up = net.forward_backward(batch, weights, aug, true, false).total;
      p->value.data()[i] = orig - step;
      const double down = net.forward_backward(batch, weights, aug, true, false).total;
      p->value.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad.data()[i];
      const double rel =
          std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = p->name;
      }
    }
  }
  return r;
}

}  // namespace clsa::testing
