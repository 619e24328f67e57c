#include "clsa/model.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace clsa;
using namespace clsa::model;
using clsa::testing::random_window;

namespace {

// Brute-force double loop over (m, j) with no shared code with the library.
double contrastive_reference(const Matrix& a, const Matrix& p, bool include_positive) {
  double total = 0.0;
  for (Eigen::Index m = 0; m < a.rows(); ++m) {
    double denom = 0.0;
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
      if (j == m && !include_positive) continue;
      double s = 0.0;
      for (Eigen::Index d = 0; d < a.cols(); ++d) s += a(m, d) * p(j, d);
      denom += std::exp(s);
    }
    double pos = 0.0;
    for (Eigen::Index d = 0; d < a.cols(); ++d) pos += a(m, d) * p(m, d);
    total += -std::log(std::exp(pos) / denom);
  }
  return total;
}

ModelConfig small_config() {
  ModelConfig c;
  c.feature_dim = 6;
  c.n_obs = 5;
  c.encoder_dim = 8;
  c.decoder_dim = 7;
  c.mlp_dim = 6;
  c.t_total = 9;
  c.t_study = 1;
  return c;
}

}  // namespace

TEST_CASE("contrastive loss hand values") {
  Matrix a(2, 2);
  a << 1, 0, 0, 1;
  CHECK(contrastive_loss(a, a) == doctest::Approx(-2.0));

  Matrix v(2, 3);
  v << 0.3, -1.0, 2.0, 0.3, -1.0, 2.0;
  CHECK(contrastive_loss(v, v) == doctest::Approx(0.0).epsilon(1e-12));

  Rng rng(3);
  Matrix r(4, 3);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = standard_normal(rng);
  const Matrix zero = 0.0 * r;
  CHECK(contrastive_loss(zero, zero) == doctest::Approx(4.0 * std::log(3.0)));
}

TEST_CASE("contrastive loss matches the brute-force loop") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 + static_cast<int>(uniform_index(rng, 6));
    Matrix a(m, 4), p(m, 4);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = standard_normal(rng);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = standard_normal(rng);
    CHECK(std::abs(contrastive_loss(a, p) - contrastive_reference(a, p, false)) < 1e-10);
    CHECK(std::abs(contrastive_loss(a, p, ContrastiveForm::kStandard) -
                   contrastive_reference(a, p, true)) < 1e-10);
  }
}

TEST_CASE("contrastive loss rejects a batch of one") {
  Matrix a = Matrix::Ones(1, 3);
  CHECK_THROWS_AS(contrastive_loss(a, a), InputError);
}

TEST_CASE("reconstruction loss") {
  Matrix x(1, 2), xh(1, 2);
  x << 1, 0;
  xh << 0, 0;
  std::vector<std::uint8_t> mask{1};
  CHECK(reconstruction_loss(x, xh, mask) == doctest::Approx(1.0));
  CHECK(reconstruction_loss(x, x, mask) == 0.0);
  std::vector<std::uint8_t> none{0};
  CHECK(reconstruction_loss(x, xh, none) == 0.0);

  Matrix x2 = Matrix::Zero(2, 2), y2 = Matrix::Zero(2, 2);
  x2(1, 0) = 1.0;
  std::vector<std::uint8_t> m2{0, 1};
  const double base = reconstruction_loss(x2, y2, m2);
  y2(0, 1) = 42.0;
  CHECK(reconstruction_loss(x2, y2, m2) == base);
}

TEST_CASE("cif hand values and edge cases") {
  // Study window covers days 2 and 3, last observation on day 1.
  auto r = cif(std::vector<double>{0.1, 0.2, 0.3, 0.4}, 1, 2, 1);
  CHECK(r.value == doctest::Approx(0.5 / 0.9));
  CHECK_FALSE(r.flagged);

  CHECK(cif(std::vector<double>{0.0, 0.5, 0.5}, 1, 2, 0).value == doctest::Approx(1.0));
  CHECK(cif(std::vector<double>{0.5, 0.0, 0.5}, 1, 1, 1).value == 0.0);

  auto flagged = cif(std::vector<double>{1.0, 0.0}, 1, 1, 1);
  CHECK(flagged.flagged);
  CHECK(flagged.value >= 0.0);
  CHECK(flagged.value <= 1.0);
}

TEST_CASE("cif stays in range and grows with the study window") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 3 + static_cast<int>(uniform_index(rng, 10));
    std::vector<double> p(static_cast<std::size_t>(n));
    double s = 0.0;
    for (auto& v : p) s += (v = uniform01(rng));
    for (auto& v : p) v /= s;
    const int t_last = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n - 1)));
    const int tau = t_last;
    double prev = -1.0;
    for (int ts = 1; tau + ts <= n; ++ts) {
      const auto r = cif(p, tau, ts, t_last);
      CHECK(r.value >= 0.0);
      CHECK(r.value <= 1.0);
      CHECK(r.value >= prev);
      prev = r.value;
    }
  }
}

TEST_CASE("survival loss and total loss") {
  const std::vector<double> f{0.0, 1.0, 0.5};
  const std::vector<int> y{0, 1, 1};
  CHECK(survival_loss(std::span(f).subspan(0, 1), std::span(y).subspan(0, 1)) ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(survival_loss(std::span(f).subspan(1, 1), std::span(y).subspan(1, 1)) ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(survival_loss(std::span(f).subspan(2, 1), std::span(y).subspan(2, 1)) ==
        doctest::Approx(std::log(2.0)));

  CHECK(total_loss(1, 1, 1, {0.3, 0.2, 0.5}) == doctest::Approx(1.0));
  CHECK(total_loss(2, 3, 4, {1, 0, 0}) == 2.0);
  CHECK(total_loss(2, 3, 4, {0, 0, 1}) == 4.0);
  CHECK_THROWS_AS(total_loss(1, 1, 1, {0.3, 0.3, 0.5}), InputError);
}

TEST_CASE("augment_mask") {
  Rng rng(7);
  auto w = random_window(rng, 10, 4, 10, 1);
  const auto a = augment_mask(w, 0.3, 99);
  const auto b = augment_mask(w, 0.3, 99);
  CHECK(a.x == b.x);
  CHECK(a.t == w.t);
  CHECK(a.pad_mask == w.pad_mask);

  double total = 0.0;
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    const auto m = augment_mask(w, 0.3, derive_seed(1, "mc", static_cast<std::uint64_t>(s)));
    for (int r = 0; r < 10; ++r) total += m.x.row(r).isZero() ? 1.0 : 0.0;
  }
  CHECK(std::abs(total / trials - 3.0) < 0.1);

  auto low = augment_mask(w, 1e-9, 5);
  CHECK(low.x == w.x);
}

TEST_CASE("augment_shuffle") {
  Rng rng(8);
  auto one = random_window(rng, 4, 3, 1, 0);
  CHECK(augment_shuffle(one, 1).x == one.x);

  auto w = random_window(rng, 6, 3, 4, 1);
  const auto s = augment_shuffle(w, 21);
  CHECK(s.x == augment_shuffle(w, 21).x);
  CHECK(s.t == w.t);
  CHECK(s.pad_mask == w.pad_mask);
  CHECK(s.y == w.y);
  CHECK(s.x.topRows(2).isZero());
  auto rows = [](const Matrix& m) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      out.emplace_back();
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.back().push_back(m(r, c));
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  CHECK(rows(s.x) == rows(w.x));
}

TEST_CASE("encoder zero fixed point and causality") {
  auto cfg = small_config();
  ClsaModel net(cfg, 1);
  Rng rng(2);
  auto w = random_window(rng, cfg.n_obs, cfg.feature_dim, cfg.n_obs, 1);

  const auto full = net.encode(w);
  auto cut = w;
  cut.x.bottomRows(2).setZero();
  const auto partial = net.encode(cut);
  for (int k = 0; k < cfg.n_obs - 2; ++k) CHECK(full.h.row(k).isApprox(partial.h.row(k), 0.0));

  auto swapped = w;
  swapped.x.row(0).swap(swapped.x.row(1));
  CHECK_FALSE(net.encode(swapped).h.bottomRows(1).isApprox(full.h.bottomRows(1), 1e-12));
  CHECK(full.z.size() == cfg.projection_dim());

  ClsaModel zero(cfg, 1);
  zero.encoder().W.value.setZero();
  zero.encoder().U.value.setZero();
  zero.encoder().b.value.setZero();
  auto blank = w;
  blank.x.setZero();
  CHECK(zero.encode(blank).h.isZero());
}

TEST_CASE("decoder consumes gaps only") {
  auto cfg = small_config();
  ClsaModel net(cfg, 4);
  Rng rng(9);
  Matrix latents(cfg.n_obs, cfg.encoder_dim);
  for (Eigen::Index i = 0; i < latents.size(); ++i) latents.data()[i] = standard_normal(rng);
  const std::vector<double> dt{1, 2, 0, 3, 0};
  const Matrix a = net.decode(latents, dt);
  auto dt2 = dt;
  dt2[0] = 5;
  const Matrix b = net.decode(latents, dt2);
  CHECK_FALSE(a.row(0).isApprox(b.row(0), 1e-12));
  CHECK(a.row(0).isApprox(net.decode(latents, dt).row(0), 0.0));
  const std::vector<double> bad{1, -1, 0, 0, 0};
  CHECK_THROWS_AS(net.decode(latents, bad), InputError);

  ClsaModel z(cfg, 4);
  for (auto* p : z.parameters()) p->value.setZero();
  CHECK(z.decode(Matrix::Zero(cfg.n_obs, cfg.encoder_dim), dt).isZero());
}

TEST_CASE("time deltas end at zero") {
  windows::ContentWindow w;
  w.t = {3, 3, 5, 9};
  const auto d = time_deltas(w);
  CHECK(d == std::vector<double>{0, 2, 4, 0});
}

TEST_CASE("survival head is a probability vector") {
  auto cfg = small_config();
  ClsaModel net(cfg, 6);
  Rng rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    Vector h(cfg.encoder_dim);
    for (auto& v : h) v = 3.0 * standard_normal(rng);
    const auto p = net.survival_head(h).p;
    CHECK(p.size() == cfg.t_total);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) < 1e-6);
  }
  net.head_output().weight.value.setZero();
  net.head_output().bias.value.setZero();
  const auto u = net.survival_head(Vector::Ones(cfg.encoder_dim)).p;
  for (auto v : u) CHECK(v == doctest::Approx(1.0 / cfg.t_total));
}

TEST_CASE("grid position anchors at the first real day") {
  windows::ContentWindow w;
  w.t = {6, 6, 7, 8};
  w.pad_mask = {1, 1, 1, 1};
  w.tau = 8;
  w.t_last = 8;
  auto g = grid_position(w, 1, 4);
  CHECK(g.tau == 3);
  CHECK(g.t_last == 3);
  // Too long for the grid: anchor shifts so the study day is the last grid day.
  g = grid_position(w, 1, 3);
  CHECK(g.tau == 2);
}

TEST_CASE("gradients match central differences") {
  const std::vector<std::pair<const char*, LossWeights>> cases{
      {"cl", {1.0, 0.0, 0.0}},
      {"rn", {0.0, 1.0, 0.0}},
      {"sa", {0.0, 0.0, 1.0}},
      {"total", {0.3, 0.2, 0.5}}};
  for (const auto& [name, weights] : cases) {
    for (auto form : {ContrastiveForm::kPrinted, ContrastiveForm::kStandard}) {
      for (auto input : {ContrastiveInput::kProjection, ContrastiveInput::kHidden}) {
        auto setup = clsa::testing::tiny_setup(17);
        setup.config.contrastive_form = form;
        setup.config.contrastive_input = input;
        ClsaModel net(setup.config, 3);
        clsa::testing::jitter(net, 5);
        const auto r = clsa::testing::gradient_check(net, setup.batch, weights);
        INFO(std::string(name) << " worst tensor " << r.worst);
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("zero-weight parts are skipped") {
  auto setup = clsa::testing::tiny_setup(2);
  ClsaModel net(setup.config, 1);
  const auto l = net.forward_backward(setup.batch, {0, 0, 1}, 1, true, true);
  CHECK(l.cl == 0.0);
  CHECK(l.rn == 0.0);
  CHECK(l.sa > 0.0);
  for (auto* p : net.trainable_parameters())
    if (p->name.rfind("decoder/", 0) == 0) CHECK(p->grad.isZero());
}

TEST_CASE("config round trip and validation") {
  auto cfg = small_config();
  cfg.contrastive_form = ContrastiveForm::kStandard;
  cfg.contrastive_input = ContrastiveInput::kHidden;
  cfg.layout_hash = 77;
  const auto back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  cfg.mask_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}
