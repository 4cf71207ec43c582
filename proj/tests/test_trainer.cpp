#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dmrac/link.hpp"
#include "dmrac/trainer.hpp"

using namespace dmrac;
using namespace dmrac::trainer;

namespace {

nn::MlpSpec linear_spec() {
  nn::MlpSpec s;
  s.widths = {1, 1};
  return s;
}

// y = 2x on 100 points in [-1, 1]; least squares gives slope 2 and zero residual.
buffer::ReplayBuffer line_buffer() {
  buffer::ReplayBuffer b(200, 0.0);
  for (int i = 0; i < 100; ++i) {
    const double x = -1.0 + 2.0 * i / 99.0;
    b.insert_if_novel(Vector::Constant(1, x), Vector::Constant(1, 2.0 * x), Vector::Constant(1, x), i);
  }
  return b;
}

TrainerConfig plain_config() {
  TrainerConfig c;
  c.train_output_layer = true;
  c.grad_clip.reset();
  c.mirror_output = false;
  c.minibatch = 16;
  return c;
}

link::Frame telemetry(std::uint32_t seq, const Vector& x, const Vector& nu, const Vector& phi) {
  return link::encode(link::Telemetry{seq, seq * 0.02, x, nu, phi});
}

}  // namespace

TEST_CASE("train_round: linear regression reaches the closed-form fit") {
  const nn::MlpSpec spec = linear_spec();
  nn::MlpParams net = nn::init(spec);
  TrainerConfig cfg = plain_config();
  cfg.iterations = 2000;
  cfg.eta = 0.05;
  std::mt19937_64 rng(3);
  const RoundResult r = train_round(spec, net, line_buffer(), cfg, rng);
  CHECK(r.metrics.val_loss < 1e-3);
  CHECK(r.net.layers[0].weights(0, 0) == doctest::Approx(2.0).epsilon(0.02));
  CHECK(std::abs(r.net.layers[0].bias(0)) < 0.02);
}

TEST_CASE("train_round: zero iterations and an already perfect fit") {
  const nn::MlpSpec spec = linear_spec();
  nn::MlpParams net = nn::init(spec);
  TrainerConfig cfg = plain_config();
  cfg.iterations = 0;
  std::mt19937_64 rng(1);
  const buffer::ReplayBuffer buf = line_buffer();
  const RoundResult idle = train_round(spec, net, buf, cfg, rng);
  CHECK(idle.net == net);
  CHECK(idle.metrics.val_loss == doctest::Approx(idle.metrics.pre_val_loss));
  CHECK(idle.metrics.val_loss > 0.0);

  net.layers[0].weights(0, 0) = 2.0;
  net.layers[0].bias(0) = 0.0;
  cfg.iterations = 50;
  const RoundResult fit = train_round(spec, net, buf, cfg, rng);
  CHECK(fit.metrics.val_loss < 1e-20);
  CHECK(fit.net.layers[0].weights(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("train_round: frozen output layer and gradient clipping") {
  const nn::MlpSpec spec = nn::MlpSpec::make_default(1, 1, 4, 2);
  const nn::MlpParams net = nn::init(spec);
  TrainerConfig cfg;
  cfg.minibatch = 16;
  cfg.iterations = 5;
  std::mt19937_64 rng(1);
  const RoundResult r = train_round(spec, net, line_buffer(), cfg, rng);
  CHECK(r.net.layers.back() == net.layers.back());
  CHECK_FALSE(r.net.layers.front() == net.layers.front());

  // With clip c each step moves the parameters by at most eta * c.
  double moved = 0.0;
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    moved += (r.net.layers[l].weights - net.layers[l].weights).squaredNorm() +
             (r.net.layers[l].bias - net.layers[l].bias).squaredNorm();
  CHECK(std::sqrt(moved) <= cfg.iterations * cfg.eta * *cfg.grad_clip + 1e-12);
}

TEST_CASE("train_round: too few entries") {
  buffer::ReplayBuffer b(10, 0.0);
  b.insert_if_novel(Vector::Ones(1), Vector::Ones(1), Vector::Ones(1), 0);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(train_round(linear_spec(), nn::init(linear_spec()), b, plain_config(), rng), Error);
}

TEST_CASE("estimate_output_weights recovers exact weights") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  const int k = 5, m = 3, rows = 40;
  Matrix phi(rows, k), w(k + 1, m);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < k; ++j) phi(i, j) = g(rng);
  for (int i = 0; i <= k; ++i)
    for (int j = 0; j < m; ++j) w(i, j) = g(rng);
  Matrix design(rows, k + 1);
  design << phi, Vector::Ones(rows);
  const Matrix nu = design * w;
  const Matrix est = estimate_output_weights(phi, nu, Matrix::Zero(k + 1, m), 1e-12);
  CHECK((est - w).norm() < 1e-8);

  // A huge ridge returns the prior.
  const Matrix prior = Matrix::Constant(k + 1, m, 0.5);
  CHECK((estimate_output_weights(phi, nu, prior, 1e12) - prior).norm() < 1e-6);
  CHECK_THROWS_AS(estimate_output_weights(phi, nu, Matrix::Zero(k, m), 1.0), Error);
}

TEST_CASE("publish policy") {
  TrainerConfig every;
  every.policy = PublishPolicy::EveryRound;
  std::vector<RoundMetrics> h(1);
  h[0].pre_val_loss = 0.0;
  CHECK(should_publish(h, every));

  TrainerConfig never;
  never.lambda_pub = std::numeric_limits<double>::infinity();
  h[0].pre_val_loss = 1e300;
  CHECK_FALSE(should_publish(h, never));

  TrainerConfig fixed;
  fixed.lambda_pub = 0.1;
  h[0].pre_val_loss = 0.25;
  CHECK(should_publish(h, fixed));
  h[0].pre_val_loss = 0.05;
  CHECK_FALSE(should_publish(h, fixed));

  // Adaptive threshold: first round always, then 2x best validation loss, floor 1e-3.
  TrainerConfig adaptive;
  std::vector<RoundMetrics> a(1);
  a[0].pre_val_loss = 0.0;
  a[0].val_loss = 0.2;
  CHECK(should_publish(a, adaptive));
  a[0].published = true;
  a.push_back(RoundMetrics{});
  a[1].pre_val_loss = 0.39;
  CHECK_FALSE(should_publish(a, adaptive));
  a[1].pre_val_loss = 0.41;
  CHECK(should_publish(a, adaptive));
  a[0].val_loss = 1e-6;
  a[1].pre_val_loss = 5e-4;
  CHECK_FALSE(should_publish(a, adaptive));

  CHECK_THROWS_AS(should_publish({}, adaptive), Error);
}

TEST_CASE("trainer: idle without telemetry, clean shutdown") {
  const nn::MlpSpec spec = nn::MlpSpec::make_default(6, 3, 8, 1);
  Trainer t(spec, nn::init(spec), TrainerConfig{}, link::Dims{6, 3, 8});
  for (int i = 0; i < 100; ++i) CHECK(t.poll(i * 0.1).empty());
  CHECK(t.history().empty());
  t.receive(link::encode(link::Shutdown{1}));
  CHECK(t.shutdown_requested());
  CHECK(t.stats().publishes == 0);
}

TEST_CASE("trainer: repeated identical telemetry is admitted once") {
  const nn::MlpSpec spec = nn::MlpSpec::make_default(6, 3, 8, 1);
  const nn::MlpParams net = nn::init(spec);
  Trainer t(spec, net, TrainerConfig{}, link::Dims{6, 3, 8});
  const Vector x = Vector::Constant(6, 0.1);
  const Vector phi = nn::features(spec, net, x);
  for (std::uint32_t s = 0; s < 500; ++s) {
    t.receive(telemetry(s, x, Vector::Ones(3), phi));
    CHECK(t.poll(s * 0.02).empty());
  }
  CHECK(t.stats().telemetry == 500);
  CHECK(t.stats().admitted == 1);
  CHECK(t.history().empty());
}

TEST_CASE("trainer: bad frames are counted and skipped") {
  const nn::MlpSpec spec = nn::MlpSpec::make_default(6, 3, 8, 1);
  Trainer t(spec, nn::init(spec), TrainerConfig{}, link::Dims{6, 3, 8});
  link::Frame f = telemetry(0, Vector::Zero(6), Vector::Zero(3), Vector::Zero(8));
  f[20] ^= 0x01;
  t.receive(f);
  t.receive(std::vector<std::uint8_t>{1, 2, 3});
  CHECK(t.stats().decode_errors == 2);
  CHECK(t.stats().telemetry == 0);
}

TEST_CASE("trainer: versions strictly increase and training is deterministic") {
  const nn::MlpSpec spec = nn::MlpSpec::make_default(6, 3, 8, 1);
  const nn::MlpParams net = nn::init(spec);
  TrainerConfig cfg;
  cfg.policy = PublishPolicy::EveryRound;
  cfg.minibatch = 16;
  cfg.iterations = 10;

  auto drive = [&] {
    Trainer t(spec, net, cfg, link::Dims{6, 3, 8});
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0.0, 0.3);
    std::vector<link::Timed> published;
    for (std::uint32_t s = 0; s < 400; ++s) {
      Vector x(6);
      for (int i = 0; i < 6; ++i) x(i) = g(rng);
      Vector nu(3);
      nu << std::sin(3 * x(0)), x(1) * x(4), 0.5;
      t.receive(telemetry(s, x, nu, nn::features(spec, t.network(), x)));
      for (auto& f : t.poll(s * 0.02)) published.push_back(std::move(f));
    }
    return std::make_pair(published, t.network());
  };
  const auto [first, net_a] = drive();
  const auto [second, net_b] = drive();
  REQUIRE(first.size() >= 3);
  CHECK(net_a == net_b);
  REQUIRE(first.size() == second.size());
  std::uint32_t last = 0;
  const link::Dims dims{6, 3, 8};
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].frame == second[i].frame);
    const auto decoded = link::decode(first[i].frame, dims);
    const auto& update = std::get<link::FeatureUpdate>(std::get<link::Message>(decoded));
    CHECK(update.version > last);
    last = update.version;
  }
}

TEST_CASE("trainer: metrics csv") {
  std::vector<RoundMetrics> h(1);
  h[0].round = 1;
  h[0].train_loss = 0.5;
  h[0].val_loss = 0.25;
  h[0].buffer_size = 64;
  h[0].published = true;
  h[0].version = 1;
  std::ostringstream out;
  write_metrics_csv(out, h);
  CHECK(out.str() == "round,train_loss,val_loss,buffer_size,published,version\n1,0.5,0.25,64,1,1\n");
}

TEST_CASE("config validation") {
  TrainerConfig c;
  CHECK_NOTHROW(c.validate());
  c.eta = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainerConfig{};
  c.val_split = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainerConfig{};
  c.grad_clip = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}
