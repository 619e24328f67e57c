#include "clsa/checkpoint.hpp"
#include "clsa/training.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace clsa;
using namespace clsa::training;

namespace {

TrainConfig small(int epochs) {
  TrainConfig c;
  c.batch_size = 8;
  c.encoder_dim = 6;
  c.decoder_dim = 6;
  c.mlp_dim = 6;
  c.n_obs = 4;
  c.epochs = epochs;
  c.patience = 0;
  c.seed = 5;
  return c;
}

double norm(model::ClsaModel& net) {
  double s = 0.0;
  for (auto* p : net.trainable_parameters()) s += p->value.squaredNorm();
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("variant registry") {
  auto c = variant_config(2);
  CHECK(c.batch_size == 256);
  CHECK(c.encoder_dim == 512);
  CHECK(c.decoder_dim == 512);
  CHECK(c.mlp_dim == 128);
  CHECK(c.learning_rate == 1e-3);
  c = variant_config(1);
  CHECK(c.batch_size == 512);
  c = variant_config(3);
  CHECK(c.encoder_dim == 256);
  CHECK(c.decoder_dim == 256);
  c = variant_config(4);
  CHECK(c.mlp_dim == 32);
  c = variant_config(5);
  CHECK(c.batch_size == 256);
  CHECK(c.learning_rate == 1e-4);
  CHECK_THROWS_AS(variant_config(6), InputError);
}

TEST_CASE("ablation registry") {
  auto w = ablation_config("L7");
  CHECK(w.cl == 0.3);
  CHECK(w.rn == 0.2);
  CHECK(w.sa == 0.5);
  w = ablation_config("L1");
  CHECK(w.cl == 1.0);
  w = ablation_config("L3");
  CHECK(w.sa == 1.0);
  for (const char* id : {"L1", "L2", "L3", "L4", "L5", "L6", "L7"})
    CHECK_NOTHROW(ablation_config(id).validate());
  CHECK_THROWS_AS(ablation_config("L8"), InputError);
}

TEST_CASE("config json round trip and overrides") {
  auto c = variant_config(3);
  c.weights = ablation_config("L6");
  c.contrastive_form = model::ContrastiveForm::kStandard;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  const auto partial = TrainConfig::from_json({{"epochs", 3}}, variant_config(1));
  CHECK(partial.epochs == 3);
  CHECK(partial.batch_size == 512);
}

TEST_CASE("batch bounds avoid singletons") {
  auto b = batch_bounds(9, 4);
  REQUIRE(b.size() == 2);
  CHECK(b.back().second == 9);
  b = batch_bounds(8, 4);
  CHECK(b.size() == 2);
  b = batch_bounds(1, 4);
  CHECK(b.size() == 1);
}

TEST_CASE("one epoch on a toy set") {
  const auto ds = clsa::testing::toy_dataset(12, 4, 1);
  const auto t = train_fold(ds, 0, small(1));
  CHECK(t.result.history.size() == 1);
  const auto& e = t.result.history[0];
  CHECK(std::isfinite(e.cl));
  CHECK(std::isfinite(e.rn));
  CHECK(std::isfinite(e.sa));
  CHECK(e.total == doctest::Approx(0.3 * e.cl + 0.2 * e.rn + 0.5 * e.sa));
}

TEST_CASE("training is deterministic") {
  const auto ds = clsa::testing::toy_dataset(30, 4, 2, 5);
  auto a = train_fold(ds, 2, small(3));
  auto b = train_fold(ds, 2, small(3));
  REQUIRE(a.result.history.size() == b.result.history.size());
  for (std::size_t i = 0; i < a.result.history.size(); ++i)
    CHECK(a.result.history[i].total == b.result.history[i].total);
  CHECK(a.result.test_cif == b.result.test_cif);
}

TEST_CASE("survival-only weights skip the decoder") {
  const auto ds = clsa::testing::toy_dataset(12, 4, 3);
  auto c = small(2);
  c.weights = ablation_config("L3");
  const auto t = train_fold(ds, 0, c);
  for (const auto& e : t.result.history) {
    CHECK(e.rn == 0.0);
    CHECK(e.cl == 0.0);
  }
}

TEST_CASE("survival-only gradients ignore augmentation seeds") {
  const auto ds = clsa::testing::toy_dataset(6, 4, 4);
  std::vector<const windows::ContentWindow*> batch;
  for (const auto& w : ds.windows) batch.push_back(&w);
  model::ClsaModel a(model_config(ds, small(1)), 1), b(model_config(ds, small(1)), 1);
  a.zero_grad();
  b.zero_grad();
  a.forward_backward(batch, {0, 0, 1}, 11, true, true);
  b.forward_backward(batch, {0, 0, 1}, 999, true, true);
  const auto pa = a.trainable_parameters(), pb = b.trainable_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->grad == pb[i]->grad);
}

TEST_CASE("stronger weight decay shrinks parameters") {
  const auto ds = clsa::testing::toy_dataset(8, 4, 6);
  std::vector<const windows::ContentWindow*> batch;
  for (const auto& w : ds.windows) batch.push_back(&w);
  auto run = [&](double decay) {
    model::ClsaModel net(model_config(ds, small(1)), 2);
    OptimizerSettings s;
    s.weight_decay = decay;
    Adam adam(s);
    const auto params = net.trainable_parameters();
    for (int step = 0; step < 5; ++step) {
      net.zero_grad();
      net.forward_backward(batch, {0.3, 0.2, 0.5}, static_cast<std::uint64_t>(step), true, true);
      adam.step(params, 1e-3);
      net.clamp_constraints();
    }
    return norm(net);
  };
  CHECK(run(0.2) < run(0.1));
}

TEST_CASE("gradient clipping and penalty") {
  nn::Parameter w{"m/l/weight", Matrix::Constant(2, 2, 1.0), Matrix::Constant(2, 2, 3.0)};
  nn::Parameter b{"m/l/bias", Matrix::Constant(2, 1, 1.0), Matrix::Constant(2, 1, 4.0)};
  nn::ParameterList ps{&w, &b};
  CHECK(add_l2_penalty(ps, 0.5) == doctest::Approx(2.0));
  CHECK(w.grad(0, 0) == doctest::Approx(4.0));
  CHECK(b.grad(0, 0) == 4.0);
  const double before = clip_gradients(ps, 1.0);
  CHECK(before == doctest::Approx(std::sqrt(4 * 16.0 + 2 * 16.0)));
  double sq = w.grad.squaredNorm() + b.grad.squaredNorm();
  CHECK(std::sqrt(sq) == doctest::Approx(1.0));
}

TEST_CASE("w_t1 stays non-positive after updates") {
  const auto ds = clsa::testing::toy_dataset(12, 4, 7);
  auto c = small(3);
  c.learning_rate = 5e-2;
  auto t = train_fold(ds, 0, c);
  CHECK(t.model.decoder().w_t1.value.maxCoeff() <= 0.0);
}

TEST_CASE("early stopping keeps history within the epoch budget") {
  const auto ds = clsa::testing::toy_dataset(60, 4, 8);
  auto c = small(6);
  c.patience = 1;
  const auto t = train_fold(ds, 0, c);
  CHECK(t.result.history.size() <= 6);
  CHECK(t.result.validation_windows == 6);
  CHECK(t.result.best_epoch >= 1);
}

TEST_CASE("cross validation aggregates fold accuracies") {
  const auto ds = clsa::testing::toy_dataset(40, 4, 9, 5);
  int seen = 0;
  const auto rec = cross_validate(ds, small(2), [&](const TrainedFold&) { ++seen; });
  CHECK(seen == 5);
  REQUIRE(rec.folds.size() == 5);
  double mean = 0.0;
  for (const auto& f : rec.folds) mean += f.metrics.accuracy;
  CHECK(rec.accuracy.mean == doctest::Approx(mean / 5.0).epsilon(1e-15));
  std::size_t tested = 0;
  for (const auto& f : rec.folds) tested += f.test_windows;
  CHECK(tested == ds.windows.size());
}

TEST_CASE("all variants train with finite losses") {
  const auto ds = clsa::testing::toy_dataset(16, 4, 10);
  for (int id = 1; id <= 5; ++id) {
    auto c = variant_config(id);
    c.n_obs = 4;
    c.epochs = 2;
    c.patience = 0;
    const auto t = train_fold(ds, 0, c);
    for (const auto& e : t.result.history) CHECK(std::isfinite(e.total));
  }
}

TEST_CASE("learns a separable toy problem") {
  const auto ds = clsa::testing::toy_dataset(200, 4, 11, 5, true);
  auto c = small(25);
  c.encoder_dim = 16;
  c.mlp_dim = 16;
  c.batch_size = 32;
  const auto t = train_fold(ds, 1, c);
  INFO("accuracy " << t.result.metrics.accuracy);
  CHECK(t.result.metrics.accuracy >= 0.9);
}

TEST_CASE("checkpoint round trip and compatibility") {
  const auto ds = clsa::testing::toy_dataset(12, 4, 12);
  auto t = train_fold(ds, 0, small(1));
  const auto path = std::filesystem::temp_directory_path() / "clsa_ckpt_test.bin";
  checkpoint::save(path, t.model);
  auto back = checkpoint::load(path);
  const auto pa = t.model.parameters(), pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  CHECK_NOTHROW(checkpoint::check_compatible(back.config(), ds));
  auto other = ds;
  other.t_total += 1;
  CHECK_THROWS_AS(checkpoint::check_compatible(back.config(), other), ConsistencyError);
  other = ds;
  other.layout = ingest::FeatureLayout::from_vocabulary({"b"});
  CHECK_THROWS_AS(checkpoint::check_compatible(back.config(), other), ConsistencyError);
  CHECK_THROWS_AS(checkpoint::load(path.string() + ".missing"), ConsistencyError);
  std::filesystem::remove(path);
}
