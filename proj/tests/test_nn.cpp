#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "reluopt/errors.hpp"
#include "reluopt/nn.hpp"
#include "reluopt/train.hpp"
#include "oracles.hpp"

using namespace reluopt;
using namespace reluopt::nn;

namespace {

ReluNetwork hand_net() {
  ReluNetwork net({1, 2, 1});
  net.layer(1).w(0, 0) = 2.0;
  net.layer(1).w(0, 1) = -3.0;
  net.layer(1).bias = {-1.0, 0.0};
  net.layer(2).w(0, 0) = 1.0;
  net.layer(2).w(1, 0) = 1.0;
  net.layer(2).bias = {0.5};
  return net;
}

ReluNetwork normalised_random(std::vector<std::size_t> sizes, NetworkKind kind, std::uint64_t seed) {
  ReluNetwork net = ReluNetwork::random(std::move(sizes), kind, seed);
  std::mt19937_64 rng(seed + 100);
  std::uniform_real_distribution<double> u(-3.0, 3.0), w(0.5, 4.0);
  for (Range& r : net.input_norm) {
    r.min = u(rng);
    r.max = r.min + w(rng);
  }
  net.output_norm.min = u(rng);
  net.output_norm.max = net.output_norm.min + w(rng);
  for (Dense& d : net.layers()) {
    for (double& b : d.bias) b = 0.3 * u(rng);
  }
  return net;
}

std::vector<double> random_batch(std::mt19937_64& rng, std::size_t count, std::size_t width) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(count * width);
  for (double& x : v) x = u(rng);
  return v;
}

double sum_abs(const std::vector<Dense>& g) {
  double s = 0.0;
  for (const Dense& d : g) {
    for (double v : d.weights) s += std::abs(v);
    for (double v : d.bias) s += std::abs(v);
  }
  return s;
}

}  // namespace

TEST_CASE("network construction checks shapes") {
  CHECK_THROWS_AS(ReluNetwork({3}), ShapeError);
  CHECK_THROWS_AS(ReluNetwork({3, 0, 1}), ShapeError);
  CHECK_THROWS_AS(ReluNetwork({3, 4, 2}), ShapeError);
  CHECK_THROWS_AS(ReluNetwork({3, 4, 1}, Convexified{3}), ValidationError);
  const ReluNetwork net({4, 8, 8, 1}, Convexified{2});
  CHECK(net.hidden_layers() == 2);
  CHECK(net.boundary() == 2);
  CHECK(!net.constrained_layer(2));
  CHECK(net.constrained_layer(3));
  CHECK(net.parameter_count() == 4 * 8 + 8 + 8 * 8 + 8 + 8 + 1);
}

TEST_CASE("hand-evaluated forward pass") {
  const ReluNetwork net = hand_net();
  const double z[] = {1.0};
  const ForwardResult r = relu_forward(net, z);
  CHECK(r.output == 1.5);
  REQUIRE(r.hidden.size() == 1);
  CHECK(r.hidden[0] == std::vector<double>{1.0, 0.0});
  CHECK(evaluate(net, z) == 1.5);
}

TEST_CASE("zero biases propagate the input minima to the output minimum") {
  ReluNetwork net = normalised_random({3, 5, 4, 1}, Unconstrained{}, 9);
  for (Dense& d : net.layers()) std::fill(d.bias.begin(), d.bias.end(), 0.0);
  std::vector<double> z;
  for (const Range& r : net.input_norm) z.push_back(r.min);
  CHECK(evaluate(net, z) == net.output_norm.min);
}

TEST_CASE("forward pass rejects bad inputs and is deterministic") {
  const ReluNetwork net = normalised_random({3, 6, 1}, Unconstrained{}, 2);
  const double bad_shape[] = {1.0, 2.0};
  CHECK_THROWS_AS(relu_forward(net, bad_shape), ShapeError);
  const double bad_value[] = {1.0, NAN, 0.0};
  CHECK_THROWS_AS(relu_forward(net, bad_value), DomainError);
  const double z[] = {0.3, -1.2, 2.5};
  const double a = evaluate(net, z);
  const double b = evaluate(net, z);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("forward pass agrees with a direct evaluation of the layer equations") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ReluNetwork net = normalised_random({4, 8, 8, 1}, Unconstrained{}, seed);
    for (int k = 0; k < 20; ++k) {
      std::vector<double> zn(4), z(4);
      for (std::size_t i = 0; i < 4; ++i) {
        zn[i] = u(rng);
        z[i] = net.input_norm[i].min + zn[i] * net.input_norm[i].width();
      }
      const double expect = denormalize_output(net, oracle::plain_forward(net, zn.data()));
      CHECK(std::abs(evaluate(net, z) - expect) <= 1e-12 * (1.0 + std::abs(expect)));
    }
  }
}

TEST_CASE("output normalisation round trip") {
  const ReluNetwork net = normalised_random({2, 3, 1}, Unconstrained{}, 5);
  for (double y : {-7.5, -0.1, 0.0, 0.4, 3.25, 12.0}) {
    CHECK(std::abs(denormalize_output(net, normalize_output(net, y)) - y) <= 1e-12);
    CHECK(std::abs(normalize_output(net, denormalize_output(net, y)) - y) <= 1e-12);
  }
}

TEST_CASE("folding the normalisation preserves the function") {
  const ReluNetwork identity = ReluNetwork::random({3, 4, 1}, Unconstrained{}, 1);
  const ReluNetwork same = fold_normalization(identity);
  for (std::size_t l = 1; l <= 2; ++l) {
    CHECK(same.layer(l).weights == identity.layer(l).weights);
    CHECK(same.layer(l).bias == identity.layer(l).bias);
  }

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-4.0, 6.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ReluNetwork net = normalised_random({4, 10, 20, 10, 1}, Convexified{1}, seed);
    const ReluNetwork folded = fold_normalization(net);
    folded.validate();
    CHECK(folded.is_convexified());
    for (int k = 0; k < 100; ++k) {
      std::vector<double> z(4);
      for (double& v : z) v = u(rng);
      CHECK(std::abs(evaluate(folded, z) - relu_forward(net, z).output) <= 1e-12);
    }
  }
}

TEST_CASE("convexified networks are monotone in the first hidden layer") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ReluNetwork net = ReluNetwork::random({3, 6, 5, 4, 1}, Convexified{1}, seed);
    ReluNetwork tail({6, 5, 4, 1});
    for (std::size_t l = 1; l <= 3; ++l) tail.layer(l) = net.layer(l + 1);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0), step(0.0, 2.0);
    std::vector<double> a, b;
    for (int k = 0; k < 50; ++k) {
      std::vector<double> h(6);
      for (double& v : h) v = u(rng);
      const double before = evaluate_normalized(tail, h, a, b);
      h[static_cast<std::size_t>(k) % 6] += step(rng);
      CHECK(evaluate_normalized(tail, h, a, b) >= before);
    }
  }
}

TEST_CASE("projection clamps constrained layers only") {
  ReluNetwork net({2, 3, 3, 1}, Convexified{2});
  net.layer(1).w(0, 0) = -1.0;
  net.layer(2).w(0, 0) = -1.0;
  net.layer(3).w(0, 0) = -1.0;
  net.project();
  CHECK(net.layer(1).w(0, 0) == -1.0);
  CHECK(net.layer(2).w(0, 0) == -1.0);
  CHECK(net.layer(3).w(0, 0) == 0.0);
  net.layer(3).w(1, 0) = -0.5;
  CHECK_THROWS_AS(net.validate(), ValidationError);
}

TEST_CASE("loss gradient at a perfect fit is zero") {
  const ReluNetwork net = hand_net();
  const std::vector<double> x{1.0};
  const std::vector<double> y{1.5};
  const LossGrad g = loss_and_grad(net, x, y);
  CHECK(g.mse == 0.0);
  CHECK(g.gradients.back().bias[0] == 0.0);
  CHECK_THROWS_AS(loss_and_grad(net, std::vector<double>{1.0, 2.0}, y), ShapeError);
}

TEST_CASE("backpropagation matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const std::vector<std::size_t> sizes = seed % 2 == 0 ? std::vector<std::size_t>{4, 8, 8, 1}
                                                         : std::vector<std::size_t>{3, 5, 1};
    const ReluNetwork net = normalised_random(sizes, Unconstrained{}, seed);
    std::mt19937_64 rng(seed);
    const std::vector<double> x = random_batch(rng, 16, sizes[0]);
    const std::vector<double> y = random_batch(rng, 16, 1);
    const LossGrad g = loss_and_grad(net, x, y);
    CHECK(std::abs(g.mse - oracle::plain_mse(net, x, y)) <= 1e-12);
    const oracle::GradientCheck c = oracle::finite_difference_check(net, x, y, g.gradients);
    CAPTURE(seed);
    CHECK(c.worst_relative <= 1e-5);
  }
}

TEST_CASE("duplicated samples give the single-sample gradient") {
  const ReluNetwork net = normalised_random({4, 8, 8, 1}, Unconstrained{}, 3);
  std::mt19937_64 rng(1);
  const std::vector<double> x = random_batch(rng, 1, 4);
  const std::vector<double> y{0.7};
  std::vector<double> xs, ys;
  for (int k = 0; k < 5; ++k) {
    xs.insert(xs.end(), x.begin(), x.end());
    ys.push_back(y[0]);
  }
  const LossGrad one = loss_and_grad(net, x, y);
  const LossGrad many = loss_and_grad(net, xs, ys);
  CHECK(many.mse == doctest::Approx(one.mse).epsilon(1e-14));
  double diff = 0.0;
  for (std::size_t l = 0; l < one.gradients.size(); ++l) {
    for (std::size_t i = 0; i < one.gradients[l].weights.size(); ++i) {
      diff = std::max(diff, std::abs(one.gradients[l].weights[i] - many.gradients[l].weights[i]));
    }
    for (std::size_t j = 0; j < one.gradients[l].bias.size(); ++j) {
      diff = std::max(diff, std::abs(one.gradients[l].bias[j] - many.gradients[l].bias[j]));
    }
  }
  CHECK(diff <= 1e-14 * (1.0 + sum_abs(one.gradients)));
}

TEST_CASE("dataset generation") {
  const Target seven = [](const Sample&) { return 7.0; };
  const Dataset a = make_dataset(seven, {}, 500, kDefaultMargin, 3);
  CHECK(a.size() == 500);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.outputs[i] == 7.0);
    CHECK(a.inputs[i][0] <= (1.0 - kDefaultMargin) * a.inputs[i][1]);
  }
  a.validate(kDefaultMargin);
  const Dataset b = make_dataset(seven, {}, 500, kDefaultMargin, 3);
  CHECK(a.inputs == b.inputs);
  CHECK(kFullSampleCount == 300000);

  DatasetBounds bad;
  bad.features[0] = Range{20.0, 30.0};
  CHECK_THROWS_AS(make_dataset(seven, bad, 10, kDefaultMargin, 1), DomainError);
  CHECK_THROWS_AS(make_dataset(seven, {}, 0, kDefaultMargin, 1), ValidationError);
}

TEST_CASE("dataset CSV round trip") {
  const Target t = [](const Sample& s) { return s[0] / 3.0 + s[3]; };
  const Dataset a = make_dataset(t, {}, 50, kDefaultMargin, 4);
  std::stringstream io;
  write_dataset_csv(io, a);
  const Dataset b = read_dataset_csv(io);
  CHECK(a.inputs == b.inputs);
  CHECK(a.outputs == b.outputs);
  std::istringstream bad("x,xtilde,q,r,cost\n1,2,3\n");
  CHECK_THROWS_AS(read_dataset_csv(bad), IoError);
}

TEST_CASE("training a constant target reaches a tiny RMSE") {
  const Target seven = [](const Sample&) { return 7.0; };
  const Dataset data = make_dataset(seven, {}, 2000, kDefaultMargin, 1);
  ReluNetwork net = ReluNetwork::random({4, 8, 1}, Unconstrained{}, 2);
  TrainConfig cfg;
  cfg.batch_size = 100;
  cfg.epochs = 1000;
  const TrainReport rep = fit(net, data, cfg);
  CHECK(rep.train_loss.size() == 1000);
  CHECK(rep.validation_loss.size() == 1000);
  CHECK(rep.train_rmse <= 1e-3);
  CHECK(rep.validation_rmse >= 0.0);
  const double z[] = {1.0, 4.0, 2.0, 1.0};
  CHECK(evaluate(net, z) == doctest::Approx(7.0));
}

TEST_CASE("convexified training keeps the constraint and is reproducible") {
  const Target t = [](const Sample& s) { return s[0] * s[2] / (1.0 + s[3]); };
  const Dataset data = make_dataset(t, {}, 1000, kDefaultMargin, 5);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 64;
  cfg.learning_rate = 1e-2;
  ReluNetwork a = ReluNetwork::random({4, 6, 6, 1}, Convexified{1}, 9);
  ReluNetwork b = a;
  fit(a, data, cfg);
  fit(b, data, cfg);
  a.validate();
  for (std::size_t l = 2; l <= 3; ++l) {
    for (double w : a.layer(l).weights) CHECK(w >= 0.0);
    CHECK(a.layer(l).weights == b.layer(l).weights);
  }
  CHECK(a.layer(1).weights == b.layer(1).weights);
}

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  cfg.split = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.split = 0.8;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  Dataset flat;
  flat.inputs.assign(4, Sample{1.0, 2.0, 3.0, 4.0});
  flat.outputs.assign(4, 1.0);
  ReluNetwork net({4, 2, 1});
  CHECK_THROWS_AS(fit(net, flat, TrainConfig{}), ValidationError);
  ReluNetwork wide({5, 2, 1});
  CHECK_THROWS_AS(fit(wide, flat, TrainConfig{}), ShapeError);
}

TEST_CASE("divergent training is reported") {
  const Target t = [](const Sample& s) { return s[0] * s[1]; };
  const Dataset data = make_dataset(t, {}, 200, kDefaultMargin, 6);
  ReluNetwork net = ReluNetwork::random({4, 16, 16, 1}, Unconstrained{}, 1);
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.epochs = 50;
  cfg.batch_size = 10;
  CHECK_THROWS_AS(fit(net, data, cfg), DivergenceError);
}
