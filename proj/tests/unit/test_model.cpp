#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "pulsesense/model.hpp"
#include "support.hpp"

using namespace pulsesense;
using testing::error_code;

namespace {

ModelConfig tiny(HeadType head, std::size_t d = 3) {
  ModelConfig c;
  c.input_dim = d;
  c.lstm1_units = 4;
  c.lstm2_units = 3;
  c.dense_units = 5;
  c.head = head;
  return c;
}

// Random parameters with biases moved away from zero so every path carries gradient.
ModelParams random_params(const ModelConfig& c, std::uint64_t seed, double scale = 0.5) {
  ModelParams p(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (Eigen::Index i = 0; i < p.flat().size(); ++i) p.flat()(i) = n(rng);
  p.dense_bias().array() += 0.3;  // keep most ReLUs active
  return p;
}

double objective(const ModelParams& p, const std::vector<Eigen::MatrixXd>& xs, const Eigen::RowVectorXd& dpred,
                 bool training, std::uint64_t seed) {
  std::vector<const Eigen::MatrixXd*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  return forward_batch(p, ptrs, training, seed).predictions.dot(dpred);
}

// Max over parameters of |analytic - central difference| / max(|analytic|, |fd|, floor).
double gradient_check(const ModelConfig& c, std::uint64_t seed, bool training) {
  ModelParams p = random_params(c, seed);
  std::vector<Eigen::MatrixXd> xs = {testing::random_matrix(12, static_cast<Eigen::Index>(c.input_dim), seed + 1),
                                     testing::random_matrix(12, static_cast<Eigen::Index>(c.input_dim), seed + 2)};
  Eigen::RowVectorXd dpred(2);
  dpred << 0.7, -1.3;
  std::vector<const Eigen::MatrixXd*> ptrs = {&xs[0], &xs[1]};
  const auto cache = forward_batch(p, ptrs, training, 99);
  const ModelParams g = backward(p, cache, dpred);

  const double eps = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.flat().size(); ++i) {
    const double saved = p.flat()(i);
    p.flat()(i) = saved + eps;
    const double up = objective(p, xs, dpred, training, 99);
    p.flat()(i) = saved - eps;
    const double down = objective(p, xs, dpred, training, 99);
    p.flat()(i) = saved;
    const double fd = (up - down) / (2.0 * eps);
    const double a = g.flat()(i);
    worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-7}));
  }
  return worst;
}

}  // namespace

TEST_CASE("backward matches central differences for both heads") {
  CHECK(gradient_check(tiny(HeadType::Regression), 1, false) < 1e-4);
  CHECK(gradient_check(tiny(HeadType::Binary), 2, false) < 1e-4);
}

TEST_CASE("backward matches central differences with dropout masks") {
  CHECK(gradient_check(tiny(HeadType::Regression), 3, true) < 1e-4);
  CHECK(gradient_check(tiny(HeadType::Binary), 4, true) < 1e-4);
}

TEST_CASE("gradient property over random small configurations") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 6; ++trial) {
    ModelConfig c;
    c.input_dim = 1 + rng() % 4;
    c.lstm1_units = 1 + rng() % 5;
    c.lstm2_units = 1 + rng() % 4;
    c.dense_units = 1 + rng() % 6;
    c.head = trial % 2 ? HeadType::Binary : HeadType::Regression;
    c.output_offset = 0.5;
    c.output_scale = 2.0;
    CHECK(gradient_check(c, 100 + static_cast<std::uint64_t>(trial), trial % 3 == 0) < 1e-4);
  }
}

TEST_CASE("zero network predicts zero and zero upstream gives zero gradients") {
  const ModelParams p(ModelConfig{});
  const Eigen::MatrixXd x = testing::random_matrix(20, 64, 3);
  CHECK(predict(p, x) == 0.0);
  const auto r = forward(init_params(tiny(HeadType::Regression), 5), testing::random_matrix(12, 3, 1), false);
  CHECK(backward(init_params(tiny(HeadType::Regression), 5), r.cache, 0.0).flat().isZero(0.0));
}

TEST_CASE("inference is deterministic and binary output lies in (0,1)") {
  const auto p = init_params(tiny(HeadType::Regression), 9);
  const Eigen::MatrixXd x = testing::random_matrix(12, 3, 8);
  CHECK(predict(p, x) == predict(p, x));
  CHECK(forward(p, x, false).prediction == predict(p, x));
  for (int i = 0; i < 1000; ++i) {
    const auto b = random_params(tiny(HeadType::Binary), static_cast<std::uint64_t>(i), 1.5);
    const double y = predict(b, testing::random_matrix(6, 3, 5000 + static_cast<std::uint64_t>(i), 3.0));
    CHECK(y > 0.0);
    CHECK(y < 1.0);
  }
}

TEST_CASE("heads are affine or sigmoid over the dense features") {
  ModelConfig c = tiny(HeadType::Regression);
  c.output_offset = 72.0;
  c.output_scale = 9.0;
  const auto p = random_params(c, 6);
  const auto r = forward(p, testing::random_matrix(12, 3, 4), false);
  const double affine = (p.head_kernel() * r.cache.dense_out)(0, 0) + p.head_bias()(0);
  CHECK(r.prediction == doctest::Approx(72.0 + 9.0 * affine).epsilon(1e-14));

  const auto pb = random_params(tiny(HeadType::Binary), 6);
  const auto rb = forward(pb, testing::random_matrix(12, 3, 4), false);
  const double logit = (pb.head_kernel() * rb.cache.dense_out)(0, 0) + pb.head_bias()(0);
  CHECK(rb.prediction == doctest::Approx(1.0 / (1.0 + std::exp(-logit))).epsilon(1e-14));
}

TEST_CASE("dead ReLU layer blocks every gradient above the head bias") {
  auto p = random_params(tiny(HeadType::Regression), 12);
  p.dense_bias().setConstant(-1e3);
  const auto r = forward(p, testing::random_matrix(12, 3, 2), false);
  CHECK(r.cache.dense_out.isZero(0.0));
  const auto g = backward(p, r.cache, 1.0);
  CHECK(g.head_kernel().isZero(0.0));
  CHECK(g.dense_kernel().isZero(0.0));
  CHECK(g.lstm1_kernel().isZero(0.0));
  CHECK(g.head_bias()(0) == 1.0);
}

TEST_CASE("inverted dropout keeps the pre-dense activation unbiased") {
  const auto p = random_params(tiny(HeadType::Regression), 21);
  const Eigen::MatrixXd x = testing::random_matrix(12, 3, 22);
  const int draws = 10000;
  const Eigen::Index dn = 5;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dn), sumsq = Eigen::VectorXd::Zero(dn);
  Eigen::MatrixXd l1_sum = Eigen::MatrixXd::Zero(4, 12);
  Eigen::MatrixXd l1_ref;
  double zeros = 0.0, total = 0.0;
  for (int k = 0; k < draws; ++k) {
    const auto r = forward(p, x, true, static_cast<std::uint64_t>(k));
    // Deviation of the dense pre-activation from its value with this draw's
    // second-layer state but no mask on it.
    const Eigen::VectorXd h2 = r.cache.lstm2.hidden.col(r.cache.lstm2.hidden.cols() - 1);
    const Eigen::VectorXd dev = r.cache.dense_pre.col(0) - (p.dense_kernel() * h2 + p.dense_bias());
    sum += dev;
    sumsq += dev.cwiseProduct(dev);
    l1_sum += r.cache.layer1_out;
    l1_ref = r.cache.lstm1.hidden;
    zeros += static_cast<double>((r.cache.mask1.array() == 0.0).count());
    total += static_cast<double>(r.cache.mask1.size());
  }
  for (Eigen::Index j = 0; j < dn; ++j) {
    const double mean = sum(j) / draws;
    const double sd = std::sqrt(std::max(sumsq(j) / draws - mean * mean, 0.0));
    CHECK(std::abs(mean) <= 3.0 * sd / std::sqrt(static_cast<double>(draws)) + 1e-12);
  }
  // Layer-one output averages back to the undropped hidden sequence.
  const Eigen::MatrixXd l1_mean = l1_sum / draws;
  const double se = l1_ref.cwiseAbs().maxCoeff() * std::sqrt(0.2 / 0.8 / draws);
  CHECK((l1_mean - l1_ref).cwiseAbs().maxCoeff() <= 4.0 * se);
  CHECK(std::abs(zeros / total - 0.2) < 0.01);
}

TEST_CASE("init is deterministic with unit forget bias") {
  ModelConfig c;
  const auto a = init_params(c, 42), b = init_params(c, 42), d = init_params(c, 43);
  CHECK(a == b);
  CHECK(!(a == d));
  const auto bias1 = a.lstm1_bias();
  for (Eigen::Index i = 0; i < 256; ++i) CHECK(bias1(i) == (i >= 64 && i < 128 ? 1.0 : 0.0));
  const auto bias2 = a.lstm2_bias();
  for (Eigen::Index i = 0; i < 128; ++i) CHECK(bias2(i) == (i >= 32 && i < 64 ? 1.0 : 0.0));
  CHECK(a.dense_bias().isZero(0.0));
  CHECK(a.head_bias().isZero(0.0));
  // Glorot bound and orthogonality.
  const double limit = std::sqrt(6.0 / (64.0 + 256.0));
  CHECK(a.lstm1_kernel().cwiseAbs().maxCoeff() <= limit);
  const Eigen::MatrixXd u = a.lstm1_recurrent();
  CHECK((u.transpose() * u - Eigen::MatrixXd::Identity(64, 64)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameter counts") {
  ModelConfig c;
  CHECK(count_parameters(c) == 45985);
  CHECK(ModelParams(c).size() == 45985);
  CHECK(46113 - count_parameters(c) == 128);
  c.input_dim = 1;
  CHECK(count_parameters(c) == 29857);
  ModelConfig wide;
  wide.dense_units = 32;
  CHECK(count_parameters(wide) - count_parameters(ModelConfig{}) == 544);
  std::size_t offset = 0;
  for (const auto& t : ModelParams(c).layout()) {
    CHECK(t.offset == offset);
    offset += t.rows * t.cols;
  }
  CHECK(offset == 29857);
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.dropout_rate = 1.0;
  CHECK(error_code([&] { validate(c); }) == ErrorCode::ConfigInvalid);
  c = ModelConfig{};
  c.lstm2_units = 0;
  CHECK(error_code([&] { validate(c); }) == ErrorCode::ConfigInvalid);
  CHECK(error_code([] { model_config_from_json(nlohmann::json{{"units", 3}}); }) == ErrorCode::ConfigUnknownKey);
  ModelConfig b;
  b.head = HeadType::Binary;
  b.input_dim = 7;
  CHECK(model_config_from_json(to_json(b)) == b);
  CHECK(error_code([] { predict(ModelParams(ModelConfig{}), Eigen::MatrixXd::Zero(4, 3)); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("cache from other parameters is rejected") {
  const auto p = init_params(tiny(HeadType::Regression), 1);
  const auto other = init_params(tiny(HeadType::Binary), 1);
  const auto r = forward(p, testing::random_matrix(12, 3, 1), false);
  CHECK(error_code([&] { backward(other, r.cache, 1.0); }) == ErrorCode::CacheMismatch);
  CHECK(error_code([&] { backward(p, r.cache, Eigen::RowVectorXd::Ones(2)); }) == ErrorCode::CacheMismatch);
}

TEST_CASE("losses") {
  CHECK(mse_loss(1, 3).loss == 4.0);
  CHECK(mse_loss(1, 3).grad == -4.0);
  CHECK(mse_loss(2, 2).loss == 0.0);
  CHECK(mse_loss(2, 2).grad == 0.0);
  const std::array<double, 2> y{1, 2}, yhat{1, 3};
  CHECK(mean_loss(HeadType::Regression, yhat, y) == 0.5);
  CHECK(bce_loss(0.5, 1).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(1 - 1e-7, 1).loss == doctest::Approx(1e-7).epsilon(1e-6));
  CHECK(bce_loss(0.9, 0).loss == doctest::Approx(-std::log(0.1)).epsilon(1e-14));
  CHECK(std::isfinite(bce_loss(0.0, 1).loss));
  CHECK(std::isfinite(bce_loss(1.0, 0).loss));
  // Gradient of the unclamped loss against a difference quotient.
  const double p = 0.3, h = 1e-6;
  CHECK(bce_loss(p, 1).grad == doctest::Approx((bce_loss(p + h, 1).loss - bce_loss(p - h, 1).loss) / (2 * h)).epsilon(1e-8));
}

TEST_CASE("adam single step closed form") {
  auto s = make_adam_state(1, 0.001);
  Eigen::VectorXd theta(1), g(1);
  theta << 1.0;
  g << 2.0;
  adam_update(s, theta, g);
  CHECK(s.step == 1);
  CHECK(std::abs(theta(0) - (1.0 - 0.001 * 2.0 / (2.0 + 1e-8))) < 1e-12);

  auto z = make_adam_state(3);
  Eigen::VectorXd t3 = Eigen::VectorXd::LinSpaced(3, -1, 1), zero = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd before = t3;
  adam_update(z, t3, zero);
  CHECK(t3 == before);
}

TEST_CASE("adam trajectory on a quadratic matches an extended-precision reference") {
  // f(x) = 0.5 * sum a_i (x_i - c_i)^2
  const Eigen::Vector4d a(1.0, 10.0, 0.1, 3.0), c(0.5, -2.0, 4.0, 0.0);
  Eigen::VectorXd x(4);
  x << 1.0, 1.0, -1.0, 2.0;
  std::array<long double, 4> rx{1.0L, 1.0L, -1.0L, 2.0L}, rm{}, rv{};
  auto s = make_adam_state(4, 0.05);
  const long double lr = 0.05L, b1 = 0.9L, b2 = 0.999L, eps = 1e-8L;
  for (int t = 1; t <= 100; ++t) {
    const Eigen::VectorXd g = a.cwiseProduct(x - c);
    adam_update(s, x, g);
    for (int i = 0; i < 4; ++i) {
      const long double gi = static_cast<long double>(a(i)) * (rx[static_cast<std::size_t>(i)] - c(i));
      rm[static_cast<std::size_t>(i)] = b1 * rm[static_cast<std::size_t>(i)] + (1 - b1) * gi;
      rv[static_cast<std::size_t>(i)] = b2 * rv[static_cast<std::size_t>(i)] + (1 - b2) * gi * gi;
      const long double mh = rm[static_cast<std::size_t>(i)] / (1 - std::pow(b1, t));
      const long double vh = rv[static_cast<std::size_t>(i)] / (1 - std::pow(b2, t));
      rx[static_cast<std::size_t>(i)] -= lr * mh / (std::sqrt(vh) + eps);
    }
    for (int i = 0; i < 4; ++i) CHECK(std::abs(x(i) - static_cast<double>(rx[static_cast<std::size_t>(i)])) < 1e-10);
  }
}

TEST_CASE("adam is element-wise") {
  auto s = make_adam_state(4, 0.01);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.25);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    const double shared = n(rng);
    Eigen::VectorXd g(4);
    g << shared, n(rng), shared, n(rng);
    adam_update(s, x, g);
  }
  CHECK(x(0) == x(2));

  // Permuting the buffer permutes the result.
  auto s1 = make_adam_state(5), s2 = make_adam_state(5);
  Eigen::VectorXd p1 = testing::random_matrix(5, 1, 1), p2 = p1.reverse();
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd g = testing::random_matrix(5, 1, 10 + static_cast<std::uint64_t>(t));
    adam_update(s1, p1, g);
    adam_update(s2, p2, g.reverse());
  }
  CHECK(p1 == p2.reverse());
  CHECK((s1.v.array() >= 0.0).all());
}

TEST_CASE("model container round trip") {
  ModelConfig c;
  c.output_offset = 71.25;
  c.output_scale = 3.5;
  ModelParams p = init_params(c, 5);
  p.flat() = p.flat().cast<float>().cast<double>();
  p.flat()(0) = -0.0;
  const nlohmann::json meta = {{"note", "x"}};
  const std::string bytes = save_model(p, meta);
  const auto back = load_model(bytes);
  CHECK(back.params == p);
  CHECK(back.params.config() == c);
  CHECK(std::signbit(back.params.flat()(0)));
  CHECK(back.meta == meta);
  CHECK(bytes.size() >= static_cast<std::size_t>(46000 * 4 * 0.9));
  CHECK(bytes.size() <= static_cast<std::size_t>(46000 * 4 * 1.3 + 4096));
  CHECK(bytes.substr(0, 5) == "PSNN1");

  CHECK(error_code([&] { load_model(bytes.substr(0, bytes.size() - 100)); }) == ErrorCode::ChecksumMismatch);
  CHECK(error_code([&] { load_model(bytes.substr(0, 8)); }) == ErrorCode::ChecksumMismatch);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK(error_code([&] { load_model(flipped); }) == ErrorCode::ChecksumMismatch);
  CHECK(error_code([&] { load_model("PSNX1" + bytes.substr(5)); }) == ErrorCode::BadMagic);
}

TEST_CASE("round trip property on random small models") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c = tiny(trial % 2 ? HeadType::Binary : HeadType::Regression, 1 + rng() % 5);
    ModelParams p = random_params(c, rng());
    p.flat() = p.flat().cast<float>().cast<double>();
    CHECK(load_model(save_model(p)).params == p);
  }
}
