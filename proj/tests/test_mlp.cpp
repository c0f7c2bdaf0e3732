#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "evade/errors.hpp"
#include "evade/mlp.hpp"
#include "evade/rng.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

using namespace evade;
using namespace evade::nn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

TEST_CASE("forward pass examples") {
  Mlp zero({6, 8, 2}, OutputActivation::Identity);
  CHECK(zero.forward(Eigen::VectorXd::Ones(6)).isZero(0.0));

  Mlp line({1, 1}, OutputActivation::Identity);
  line.layers()[0].weight(0, 0) = 2.0;
  line.layers()[0].bias(0) = 1.0;
  CHECK(line.forward(Eigen::VectorXd::Constant(1, 3.0))(0) == 7.0);

  Mlp tanh({3, 2}, OutputActivation::TanhScaled, 7.0);
  CHECK(tanh.forward(Eigen::VectorXd::Ones(3)).isZero(0.0));
  tanh.layers()[0].bias << 0.5, -100.0;
  const Eigen::VectorXd y = tanh.forward(Eigen::VectorXd::Zero(3));
  CHECK(y(0) == doctest::Approx(7.0 * std::tanh(0.5)).epsilon(1e-15));
  CHECK(y(1) == doctest::Approx(-7.0));
}

TEST_CASE("forward rejects a wrong input size") {
  Mlp net({6, 4, 2}, OutputActivation::Identity);
  CHECK_THROWS_AS(net.forward(Eigen::VectorXd::Zero(5)), std::invalid_argument);
  CHECK_THROWS_AS(net.forward(Eigen::MatrixXd::Zero(7, 3), nullptr), std::invalid_argument);
}

TEST_CASE("batched and single forward agree") {
  Rng rng(1);
  const Mlp net = Mlp::random({6, 16, 16, 2}, OutputActivation::TanhScaled, 7.0, rng, 0.5);
  const Eigen::MatrixXd x = random_matrix(6, 9, rng, 3.0);
  const Eigen::MatrixXd y = net.forward(x, nullptr);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd yj = net.forward(Eigen::VectorXd(x.col(j)));
    CHECK((y.col(j) - yj).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("linear gradient of a quadratic loss") {
  Mlp net({3, 1}, OutputActivation::Identity);
  net.layers()[0].weight << 0.5, -1.0, 2.0;
  net.layers()[0].bias << 0.25;
  Eigen::MatrixXd x(3, 1);
  x << 1.0, 2.0, -0.5;
  ForwardCache cache;
  const double y = net.forward(x, &cache)(0, 0);
  const double target = 1.0;
  // d/dy of 0.5 (y - t)^2 is (y - t).
  const Gradients g = net.backward(cache, Eigen::MatrixXd::Constant(1, 1, y - target));
  for (int i = 0; i < 3; ++i) CHECK(g.layers[0].weight(0, i) == doctest::Approx((y - target) * x(i)));
  CHECK(g.layers[0].bias(0) == doctest::Approx(y - target));
  CHECK(g.input(1, 0) == doctest::Approx((y - target) * -1.0));
}

TEST_CASE("ReLU at exactly zero passes no gradient") {
  Mlp net({1, 1, 1}, OutputActivation::Identity);
  net.layers()[0].weight(0, 0) = 1.0;
  net.layers()[1].weight(0, 0) = 1.0;
  ForwardCache cache;
  net.forward(Eigen::MatrixXd::Zero(1, 1), &cache);
  const Gradients g = net.backward(cache, Eigen::MatrixXd::Ones(1, 1));
  CHECK(g.layers[0].weight(0, 0) == 0.0);
  CHECK(g.layers[0].bias(0) == 0.0);
  CHECK(g.input(0, 0) == 0.0);
}

TEST_CASE("gradients match finite differences on a 6-8-2 net") {
  Rng rng(2);
  for (auto act : {OutputActivation::Identity, OutputActivation::TanhScaled}) {
    const Mlp net = Mlp::random({6, 8, 2}, act, 3.0, rng, 0.5);
    const Eigen::MatrixXd x = random_matrix(6, 4, rng, 2.0);
    const Eigen::MatrixXd w = random_matrix(2, 4, rng);
    const auto check = oracle::check_gradients(net, x, w);
    CHECK(check.max_rel_error < 1e-4);
    CHECK(check.checked > 60);
  }
}

TEST_CASE("gradients match finite differences on random nets") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> sizes{static_cast<int>(1 + rng.below(8))};
    const int hidden = static_cast<int>(1 + rng.below(2));
    for (int h = 0; h < hidden; ++h) sizes.push_back(static_cast<int>(2 + rng.below(31)));
    sizes.push_back(static_cast<int>(1 + rng.below(2)));
    const auto act = trial % 2 ? OutputActivation::TanhScaled : OutputActivation::Identity;
    const Mlp net = Mlp::random(sizes, act, 2.0, rng, 0.3);
    const Eigen::MatrixXd x = random_matrix(sizes.front(), 3, rng, 2.0);
    const Eigen::MatrixXd w = random_matrix(sizes.back(), 3, rng);
    CHECK(oracle::check_gradients(net, x, w).max_rel_error < 1e-4);
  }
}

TEST_CASE("input-only backward matches the full pass") {
  Rng rng(4);
  const Mlp net = Mlp::random({8, 12, 1}, OutputActivation::Identity, 1.0, rng);
  const Eigen::MatrixXd x = random_matrix(8, 5, rng);
  ForwardCache cache;
  net.forward(x, &cache);
  const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(1, 5);
  CHECK(net.backward(cache, up, false).input.isApprox(net.backward(cache, up).input));
}

TEST_CASE("initialisation ranges and determinism") {
  Rng a(7), b(7);
  const Mlp na = Mlp::random({6, 256, 256, 2}, OutputActivation::TanhScaled, 7.0, a);
  const Mlp nb = Mlp::random({6, 256, 256, 2}, OutputActivation::TanhScaled, 7.0, b);
  CHECK(na == nb);
  CHECK(na.parameter_count() == 6 * 256 + 256 + 256 * 256 + 256 + 256 * 2 + 2);
  CHECK(na.layers()[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
  CHECK(na.layers()[1].weight.cwiseAbs().maxCoeff() <= 1.0 / 16.0);
  CHECK(na.layers()[2].weight.cwiseAbs().maxCoeff() <= 3e-3);
  CHECK(na.layers()[2].bias.cwiseAbs().maxCoeff() <= 3e-3);
}

TEST_CASE("tanh-scaled outputs stay inside the bound") {
  Rng rng(8);
  const Mlp net = Mlp::random({6, 32, 2}, OutputActivation::TanhScaled, 7.0, rng, 1.0);
  const Eigen::MatrixXd y = net.forward(random_matrix(6, 500, rng, 50.0), nullptr);
  CHECK(y.cwiseAbs().maxCoeff() <= 7.0);
  CHECK(y.cwiseAbs().maxCoeff() > 1.0);
}

TEST_CASE("adam first step") {
  Mlp net({1, 1}, OutputActivation::Identity);
  net.layers()[0].bias(0) = 1.0;
  Adam opt(net, {0.001});
  Gradients g = zero_gradients(net);
  g.layers[0].bias(0) = 1.0;  // gradient of 0.5 theta^2 at theta = 1
  opt.step(net, g);
  CHECK(opt.steps() == 1);
  CHECK(net.layers()[0].bias(0) == doctest::Approx(1.0 - 0.001 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adam with zero gradient or zero rate leaves parameters") {
  Rng rng(9);
  Mlp net = Mlp::random({4, 5, 2}, OutputActivation::Identity, 1.0, rng);
  const Mlp before = net;
  Adam opt(net, {});
  opt.step(net, zero_gradients(net));
  CHECK(net == before);
  CHECK(opt.steps() == 1);

  Adam frozen(net, {0.0});
  Gradients g = zero_gradients(net);
  g.layers[0].weight.setConstant(3.0);
  for (int i = 0; i < 10; ++i) frozen.step(net, g);
  CHECK(net == before);
}

TEST_CASE("adam moves against a constant gradient") {
  Mlp net({1, 1}, OutputActivation::Identity);
  Adam opt(net, {0.01});
  Gradients g = zero_gradients(net);
  g.layers[0].weight(0, 0) = -2.0;
  double prev = net.layers()[0].weight(0, 0);
  for (int i = 0; i < 100; ++i) {
    opt.step(net, g);
    CHECK(net.layers()[0].weight(0, 0) > prev);
    prev = net.layers()[0].weight(0, 0);
  }
}

TEST_CASE("adam minimises a quadratic") {
  Mlp net({1, 1}, OutputActivation::Identity);
  net.layers()[0].bias(0) = 1.0;
  Adam opt(net, {0.01});
  for (int i = 0; i < 2000; ++i) {
    Gradients g = zero_gradients(net);
    g.layers[0].bias(0) = net.layers()[0].bias(0);
    opt.step(net, g);
  }
  CHECK(std::abs(net.layers()[0].bias(0)) < 1e-2);
}

TEST_CASE("soft update") {
  Rng rng(10);
  const Mlp source = Mlp::random({3, 4, 2}, OutputActivation::Identity, 1.0, rng);
  Mlp target({3, 4, 2}, OutputActivation::Identity);
  const Mlp zero = target;
  soft_update(target, source, 0.0);
  CHECK(target == zero);
  soft_update(target, source, 0.01);
  CHECK(target.layers()[1].weight.isApprox(0.01 * source.layers()[1].weight));
  soft_update(target, source, 1.0);
  CHECK(target == source);

  Mlp ones({1, 1}, OutputActivation::Identity), t({1, 1}, OutputActivation::Identity);
  ones.layers()[0].weight(0, 0) = 1.0;
  soft_update(t, ones, 0.01);
  CHECK(t.layers()[0].weight(0, 0) == doctest::Approx(0.01).epsilon(1e-15));

  Mlp other({3, 5, 2}, OutputActivation::Identity);
  CHECK_THROWS_AS(soft_update(other, source, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(soft_update(target, source, 1.5), std::invalid_argument);
}

TEST_CASE("save and load round-trip bit-exactly") {
  Rng rng(11);
  const Mlp net = Mlp::random({6, 20, 20, 2}, OutputActivation::TanhScaled, 7.0, rng);
  std::stringstream buf;
  save(net, buf);
  const Mlp back = load(buf);
  CHECK(back == net);
  CHECK(back.bound() == 7.0);
  CHECK(back.output_activation() == OutputActivation::TanhScaled);
  const Eigen::VectorXd x = random_matrix(6, 1, rng, 5.0).col(0);
  CHECK((back.forward(x) - net.forward(x)).cwiseAbs().maxCoeff() == 0.0);

  const auto dir = scratch::dir("mlp");
  save(net, dir / "net.bin");
  CHECK(load(dir / "net.bin") == net);
  CHECK_THROWS_AS(load(dir / "missing.bin"), IoError);
}

TEST_CASE("corrupt model files are rejected") {
  Rng rng(12);
  const Mlp net = Mlp::random({6, 8, 2}, OutputActivation::Identity, 1.0, rng);
  std::stringstream buf;
  save(net, buf);
  const std::string bytes = buf.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load(truncated), DataError);

  std::string foreign = bytes;
  foreign[0] = 'X';
  std::stringstream bad_magic(foreign);
  CHECK_THROWS_AS(load(bad_magic), DataError);

  std::string future = bytes;
  future[8] = static_cast<char>(kModelFormatVersion + 1);
  std::stringstream bad_version(future);
  CHECK_THROWS_AS(load(bad_version), DataError);

  std::stringstream trailing(bytes + "x");
  CHECK_THROWS_AS(load(trailing), DataError);

  std::stringstream empty;
  CHECK_THROWS_AS(load(empty), DataError);
}
