#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <vector>

#include "rdro/nn.hpp"

using namespace rdro;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

std::vector<double> normals(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

}  // namespace

TEST(Forward, Examples) {
  Mlp zero({3, 4, 2}, OutputActivation::identity());
  EXPECT_EQ(zero.forward(std::vector<double>{1, 2, 3}), (std::vector<double>{0, 0}));

  Mlp lin({3, 3}, OutputActivation::identity());
  for (std::size_t r = 0; r < 3; ++r) lin.weight(0, r, r) = 1.0;
  EXPECT_EQ(lin.forward(std::vector<double>{-1, 2, 5}), (std::vector<double>{-1, 2, 5}));

  Mlp sm({2, 4}, OutputActivation::softmax());
  for (double y : sm.forward(std::vector<double>{0.3, -1.0})) EXPECT_DOUBLE_EQ(y, 0.25);
  EXPECT_THROW(sm.forward(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Backward, LinearLayerRows) {
  Mlp lin({3, 2}, OutputActivation::identity());
  const std::vector<double> x{0.5, -2.0, 4.0};
  Tape tape;
  lin.forward(x, tape);
  const auto g = lin.gradient(tape, std::vector<double>{1.0, 0.0});
  // layout: W row-major then b
  EXPECT_EQ(g, (std::vector<double>{0.5, -2.0, 4.0, 0, 0, 0, 1.0, 0.0}));
  const auto z = lin.gradient(tape, std::vector<double>{0.0, 0.0});
  for (double v : z) EXPECT_EQ(v, 0.0);
}

TEST(Init, DeterminismAndBounds) {
  const auto a = Mlp::he_uniform({5, 7, 3}, OutputActivation::identity(), 42);
  const auto b = Mlp::he_uniform({5, 7, 3}, OutputActivation::identity(), 42);
  const auto c = Mlp::he_uniform({5, 7, 3}, OutputActivation::identity(), 43);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  EXPECT_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
  auto m = a;
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t col = 0; col < 5; ++col) EXPECT_LE(std::abs(m.weight(0, r, col)), std::sqrt(6.0 / 5.0));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t col = 0; col < 7; ++col) EXPECT_LE(std::abs(m.weight(1, r, col)), std::sqrt(6.0 / 7.0));
}

TEST(Backward, FiniteDifferenceProbes) {
  std::mt19937_64 rng(3);
  const OutputActivation heads[] = {OutputActivation::identity(), OutputActivation::softmax(),
                                    OutputActivation::scaled_tanh(2.5), OutputActivation::sigmoid()};
  int probes = 0;
  for (int t = 0; t < 100; ++t) {
    const auto head = heads[t % 4];
    auto net = Mlp::he_uniform({3, 6, 5, 3}, head, 100 + t);
    for (auto& p : net.parameters()) p += 0.05;  // nonzero biases
    const auto x = normals(3, rng);
    const auto cot = normals(3, rng);
    Tape tape;
    net.forward(x, tape);
    std::vector<double> g(net.param_count(), 0.0);
    std::vector<double> gx(3, 0.0);
    net.backward(tape, cot, g, gx);

    std::uniform_int_distribution<std::size_t> pick(0, net.param_count() - 1);
    const std::size_t k = pick(rng);
    auto params = net.parameters();
    const double keep = params[k];
    const double h = 1e-6;
    params[k] = keep + h;
    const double up = dot(net.forward(x), cot);
    params[k] = keep - h;
    const double dn = dot(net.forward(x), cot);
    params[k] = keep;
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(g[k], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "probe " << t;

    auto xp = x;
    xp[t % 3] += h;
    auto xm = x;
    xm[t % 3] -= h;
    const double fdx = (dot(net.forward(xp), cot) - dot(net.forward(xm), cot)) / (2 * h);
    EXPECT_NEAR(gx[t % 3], fdx, 1e-5 * std::max(1.0, std::abs(fdx)));
    ++probes;
  }
  EXPECT_EQ(probes, 100);
}

TEST(Backward, SoftmaxJacobianRowsSumToZero) {
  auto net = Mlp::he_uniform({2, 4}, OutputActivation::softmax(), 5);
  for (auto& p : net.parameters()) p += 0.1;
  Tape tape;
  net.forward(std::vector<double>{0.7, -0.3}, tape);
  const std::vector<double> ones(4, 1.0);
  for (double v : net.gradient(tape, ones)) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Backward, AccumulatesAcrossTapes) {
  const auto net = Mlp::he_uniform({2, 3, 1}, OutputActivation::identity(), 9);
  Tape t1, t2;
  net.forward(std::vector<double>{1.0, 2.0}, t1);
  net.forward(std::vector<double>{-1.0, 0.5}, t2);
  std::vector<double> acc(net.param_count(), 0.0);
  net.backward(t1, std::vector<double>{1.0}, acc);
  net.backward(t2, std::vector<double>{2.0}, acc);
  const auto a = net.gradient(t1, std::vector<double>{1.0});
  const auto b = net.gradient(t2, std::vector<double>{2.0});
  for (std::size_t k = 0; k < acc.size(); ++k) EXPECT_DOUBLE_EQ(acc[k], a[k] + b[k]);
}

TEST(Serialization, RoundTrip) {
  auto net = Mlp::he_uniform({3, 5, 2}, OutputActivation::scaled_tanh(1.5), 17);
  net.bias(0, 2) = 0.1 + 1e-17;
  std::stringstream ss;
  net.write(ss);
  const auto back = Mlp::read(ss);
  EXPECT_EQ(back.layer_sizes(), net.layer_sizes());
  EXPECT_EQ(back.output_activation().name(), "scaled_tanh");
  EXPECT_EQ(back.output_activation().scale, 1.5);
  EXPECT_TRUE(std::equal(back.parameters().begin(), back.parameters().end(), net.parameters().begin()));

  const auto path = std::filesystem::temp_directory_path() / "rdro_nn_roundtrip.txt";
  net.save(path.string());
  const auto loaded = Mlp::load(path.string());
  EXPECT_TRUE(std::equal(loaded.parameters().begin(), loaded.parameters().end(), net.parameters().begin()));
  std::filesystem::remove(path);

  std::stringstream bad("rdro-mlp 1\nlayers 2 2\noutput identity 1\nparams 3\n1\n2\n3\n");
  EXPECT_THROW(Mlp::read(bad), std::runtime_error);
}
