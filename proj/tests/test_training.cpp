#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "compat_reason/training.hpp"
#include "support/model_fixtures.hpp"

using namespace compat_reason;

TEST_CASE("sgd_step examples") {
  ad::Tensor p = ad::Tensor::scalar(1.0);
  const std::vector<ad::Tensor*> ps{&p};
  sgd_step(ps, std::vector<ad::Tensor>{ad::Tensor::scalar(1.0)}, 0.1, 0.0);
  CHECK(p.item() == doctest::Approx(0.9).epsilon(1e-15));
  sgd_step(ps, std::vector<ad::Tensor>{ad::Tensor::scalar(0.0)}, 0.1, 0.0);
  CHECK(p.item() == doctest::Approx(0.9).epsilon(1e-15));
  CHECK_THROWS_AS(sgd_step(ps, std::vector<ad::Tensor>{}, 0.1, 0.0), DimensionError);
}

TEST_CASE("sgd_step matches a scalar recomputation") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = 1 + rng.below(5), c = 1 + rng.below(5);
    ad::Tensor p(r, c), g(r, c);
    for (double& v : p.data()) v = rng.normal();
    for (double& v : g.data()) v = rng.normal();
    const std::vector<double> before(p.data().begin(), p.data().end());
    const double lr = rng.uniform(0.001, 0.5), wd = rng.uniform(0.0, 0.01);
    const std::vector<ad::Tensor*> ps{&p};
    sgd_step(ps, std::vector<ad::Tensor>{g}, lr, wd);
    for (std::size_t i = 0; i < before.size(); ++i) {
      const double expect = before[i] - lr * g.data()[i] - lr * wd * before[i];
      CHECK(p.data()[i] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("step learning-rate schedule") {
  const TrainConfig c;
  CHECK(lr_at(c, 0) == doctest::Approx(0.01));
  CHECK(lr_at(c, 29) == doctest::Approx(0.01));
  CHECK(lr_at(c, 30) == doctest::Approx(0.001));
  CHECK(lr_at(c, 60) == doctest::Approx(0.0001));
  CHECK(lr_at(c, 69) == doctest::Approx(0.0001));
}

TEST_CASE("balanced sampler evens out a 75/15/10 pool") {
  std::vector<Judgment> labels;
  labels.insert(labels.end(), 750, Judgment::normal);
  labels.insert(labels.end(), 150, Judgment::good);
  labels.insert(labels.end(), 100, Judgment::bad);
  BalancedSampler s(labels, 42);
  std::array<double, kNumJudgments> freq{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const std::size_t k = s.next();
    REQUIRE(k < labels.size());
    freq[index_of(labels[k])] += 1.0 / draws;
  }
  for (double f : freq) CHECK(std::abs(f - 1.0 / 3.0) <= 0.02);
  CHECK(s.pool(Judgment::good).size() == 150);
}

TEST_CASE("balanced sampler skips empty classes") {
  const std::vector<Judgment> labels{Judgment::normal, Judgment::normal, Judgment::bad};
  BalancedSampler s(labels, 1);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) bad += labels[s.next()] == Judgment::bad;
  CHECK(std::abs(bad / 10000.0 - 0.5) < 0.03);
  CHECK_THROWS_AS(BalancedSampler(std::vector<Judgment>{}, 1), Error);
}

TEST_CASE("train config parsing and validation") {
  const auto cfg = KeyValueConfig::parse("[train]\nlr0 = 0.05\nepochs = 3\nalpha = 10\nreg = square\nbatch_size = 8\n");
  const TrainConfig c = TrainConfig::from_config(cfg);
  CHECK(c.lr0 == 0.05);
  CHECK(c.epochs == 3);
  CHECK(c.alpha == 10.0);
  CHECK(c.reg == RegularizerKind::square);
  CHECK(c.batch_size == 8);
  CHECK(c.weight_decay == 0.0005);
  CHECK_THROWS_AS(TrainConfig::from_config(KeyValueConfig::parse("[train]\nmomentum = 0.9\n")), ParseError);
  CHECK_THROWS_AS(TrainConfig::from_config(KeyValueConfig::parse("[train]\nalpha = -1\n")), Error);
  CHECK_THROWS_AS(TrainConfig::from_config(KeyValueConfig::parse("[train]\nreg = l2\n")), ParseError);
  TrainConfig bad;
  bad.lr0 = 0.0;
  CHECK_THROWS_AS(validate_train_config(bad), Error);
}

namespace {

std::string checkpoint_bytes(const CompatModel& m) { return serialize_checkpoint(m); }

}  // namespace

TEST_CASE("same seed trains to identical checkpoints") {
  Rng rng(8);
  const ModelConfig mc = fixtures::small_config();
  const auto records = fixtures::random_records(rng, mc.dims, 40);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.alpha = 1.0;
  tc.seed = 12;
  const TrainResult a = train(records, nullptr, mc, tc);
  const TrainResult b = train(records, nullptr, mc, tc);
  CHECK(checkpoint_bytes(a.model) == checkpoint_bytes(b.model));
  CHECK(a.log.size() == 3);
  for (const auto& m : a.log) CHECK(std::isfinite(m.loss));
  CHECK(a.log[0].loss == doctest::Approx(a.log[0].judgment_loss + a.log[0].reason_loss).epsilon(1e-12));
  tc.seed = 13;
  CHECK(checkpoint_bytes(train(records, nullptr, mc, tc).model) != checkpoint_bytes(a.model));
}

TEST_CASE("alpha zero leaves the reason loss out") {
  Rng rng(9);
  const ModelConfig mc = fixtures::small_config();
  const auto records = fixtures::random_records(rng, mc.dims, 30);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 10;
  const TrainResult r = train(records, &records, mc, tc);
  for (const auto& m : r.log) {
    CHECK(m.reason_loss == 0.0);
    CHECK(m.loss == m.judgment_loss);
  }
}

TEST_CASE("divergence aborts with a diagnostic") {
  Rng rng(10);
  const ModelConfig mc = fixtures::small_config();
  auto records = fixtures::random_records(rng, mc.dims, 20);
  for (auto& r : records)
    for (auto& v : r.top.factors[0]) v *= 1e6;
  TrainConfig tc;
  tc.epochs = 50;
  tc.batch_size = 5;
  tc.lr0 = 1e3;
  CHECK_THROWS_WITH_AS(train(records, nullptr, mc, tc), doctest::Contains("diverged"), TrainingDiverged);
}

TEST_CASE("metrics csv") {
  std::vector<EpochMetrics> log(2);
  log[0].epoch = 0;
  log[0].lr = 0.01;
  log[0].loss = 1.5;
  log[1].epoch = 1;
  log[1].reason_acc = 50.0;
  const auto path = std::filesystem::temp_directory_path() / "compat_reason_metrics_test.csv";
  write_metrics_csv(path, log);
  std::ifstream in(path);
  std::string header, l0, l1;
  std::getline(in, header);
  std::getline(in, l0);
  std::getline(in, l1);
  CHECK(header == "epoch,lr,loss,judgment_loss,reason_loss,judgment_acc,reason_acc");
  CHECK(l0 == "0,0.01,1.5,0,0,0.0000,");
  CHECK(l1 == "1,0,0,0,0,0.0000,50.0000");
  std::filesystem::remove(path);
}
