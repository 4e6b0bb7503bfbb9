#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssbd/nn/layers.hpp"
#include "ssbd/nn/loss.hpp"
#include "ssbd/rng.hpp"

#include "helpers.hpp"

using namespace ssbd;
using ssbd::test::grad_check;

namespace {

template <typename S>
Tensor<S> tensor_from(const std::vector<Index>& shape, std::initializer_list<S> values) {
  Tensor<S> t(shape);
  REQUIRE(t.size() == static_cast<Index>(values.size()));
  Index i = 0;
  for (S v : values) t.flat()(i++) = v;
  return t;
}

template <typename S>
Tensor<S> random_tensor(const std::vector<Index>& shape, Rng& rng) {
  Tensor<S> t(shape);
  for (Index i = 0; i < t.size(); ++i) t.flat()(i) = static_cast<S>(rng.normal());
  return t;
}

// Squared-sum readout: loss = sum(y^2), dy = 2y.
template <typename S>
S square_loss(const Tensor<S>& y, Tensor<S>& dy) {
  dy = Tensor<S>(y.shape());
  dy.flat() = 2 * y.flat();
  return y.flat().squaredNorm();
}

}  // namespace

TEST_CASE("linear layer forward and backward by hand") {
  Rng rng(1);
  nn::Linear<double> lin(3, 2, rng);
  lin.w << 1, 2, 3, 4, 5, 6;
  lin.b << 0.5, -0.5;

  RowMat<double> x(2, 3);
  x << 1, 0, -1, 2, 1, 0;

  typename nn::Linear<double>::Cache cache;
  const auto y = lin.forward(x, cache);
  REQUIRE(y.rows() == 2);
  REQUIRE(y.cols() == 2);
  CHECK(y(0, 0) == doctest::Approx(1 - 3 + 0.5));
  CHECK(y(0, 1) == doctest::Approx(4 - 6 - 0.5));
  CHECK(y(1, 0) == doctest::Approx(2 + 2 + 0.5));
  CHECK(y(1, 1) == doctest::Approx(8 + 5 - 0.5));

  RowMat<double> dy(2, 2);
  dy << 1, 0, 0, 1;
  lin.zero_grad();
  const auto dx = lin.backward(cache, dy);

  // gw = dy^T x, gb = column sums of dy, dx = dy w.
  CHECK(lin.gw(0, 0) == doctest::Approx(1.0));
  CHECK(lin.gw(0, 2) == doctest::Approx(-1.0));
  CHECK(lin.gw(1, 0) == doctest::Approx(2.0));
  CHECK(lin.gw(1, 1) == doctest::Approx(1.0));
  CHECK(lin.gb(0) == doctest::Approx(1.0));
  CHECK(lin.gb(1) == doctest::Approx(1.0));
  CHECK(dx(0, 0) == doctest::Approx(1.0));
  CHECK(dx(0, 2) == doctest::Approx(3.0));
  CHECK(dx(1, 0) == doctest::Approx(4.0));

  CHECK_THROWS_AS(lin.forward(RowMat<double>::Zero(1, 4)), ShapeMismatch);
}

TEST_CASE("he initialization has the fan-in scale and zero bias") {
  Rng rng(7);
  nn::Linear<double> lin(256, 400, rng);
  const double want_std = std::sqrt(2.0 / 256.0);
  const double mean = lin.w.mean();
  const double var = (lin.w.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.002);
  CHECK(std::sqrt(var) == doctest::Approx(want_std).epsilon(0.03));
  CHECK(lin.b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(lin.param_count() == 400 * 256 + 400);
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(11);
  nn::Linear<double> lin(4, 3, rng);
  const RowMat<double> x = RowMat<double>::NullaryExpr(5, 4, [&] { return rng.normal(); });

  nn::ParamList<double> params;
  lin.params("lin", params);
  const auto result = grad_check<double>(params, [&] {
    lin.zero_grad();
    typename nn::Linear<double>::Cache cache;
    const auto y = lin.forward(x, cache);
    lin.backward(cache, 2 * y);
    return y.squaredNorm();
  });
  CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("conv2d forward by hand on a 3x3 image") {
  Rng rng(2);
  nn::Conv2d<double> conv(1, 1, 2, 1, 0, rng);
  conv.w << 1, 2, 3, 4;  // taps (r, c), (r, c+1), (r+1, c), (r+1, c+1)
  conv.b << 0.5;

  const auto x = tensor_from<double>({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = conv.forward(x);
  CHECK(y.shape() == std::vector<Index>{1, 1, 2, 2});
  CHECK(y(0, 0, 0, 0) == doctest::Approx(37.5));
  CHECK(y(0, 0, 0, 1) == doctest::Approx(47.5));
  CHECK(y(0, 0, 1, 0) == doctest::Approx(67.5));
  CHECK(y(0, 0, 1, 1) == doctest::Approx(77.5));

  CHECK(conv.out_shape({1, 1, 3, 3}) == std::vector<Index>{1, 1, 2, 2});
  CHECK_THROWS_AS(conv.forward(tensor_from<double>({2, 1, 1}, {0, 0})), ShapeMismatch);
}

TEST_CASE("conv2d with padding and stride matches finite differences") {
  Rng rng(13);
  nn::Conv2d<double> conv(2, 3, 3, 2, 1, rng);
  const auto x = random_tensor<double>({2, 5, 5}, rng);
  CHECK(conv.out_shape({2, 5, 5}) == std::vector<Index>{3, 3, 3});

  nn::ParamList<double> params;
  conv.params("conv", params);
  Tensor<double> dy;
  const auto result = grad_check<double>(params, [&] {
    conv.zero_grad();
    typename nn::Conv2d<double>::Cache cache;
    const auto y = conv.forward(x, cache);
    const double loss = square_loss(y, dy);
    conv.backward(cache, dy);
    return loss;
  });
  CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("conv2d input gradient matches finite differences") {
  Rng rng(17);
  nn::Conv2d<double> conv(1, 2, 3, 1, 1, rng);
  auto x = random_tensor<double>({1, 4, 4}, rng);

  typename nn::Conv2d<double>::Cache cache;
  Tensor<double> dy;
  conv.zero_grad();
  auto y = conv.forward(x, cache);
  square_loss(y, dy);
  const auto dx = conv.backward(cache, dy);

  const double eps = 1e-6;
  for (Index i : {Index(0), Index(5), Index(10), Index(15)}) {
    const double keep = x.flat()(i);
    x.flat()(i) = keep + eps;
    const double up = conv.forward(x).flat().squaredNorm();
    x.flat()(i) = keep - eps;
    const double down = conv.forward(x).flat().squaredNorm();
    x.flat()(i) = keep;
    CHECK(dx.flat()(i) == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
  }
}

TEST_CASE("temporal conv filters along the frame axis") {
  Rng rng(3);
  nn::TemporalConv<double> tconv(1, 1, 2, 1, 0, rng);
  tconv.w << 1, 10;
  tconv.b << 0.25;

  const auto x = tensor_from<double>({1, 3, 1, 1, 1}, {1, 2, 3});
  const auto y = tconv.forward(x);
  CHECK(y.shape() == std::vector<Index>{1, 2, 1, 1, 1});
  CHECK(y(0, 0, 0, 0, 0) == doctest::Approx(1 + 20 + 0.25));
  CHECK(y(0, 1, 0, 0, 0) == doctest::Approx(2 + 30 + 0.25));
  CHECK(tconv.out_frames(3) == 2);
  CHECK(tconv.out_frames(40) == 39);

  CHECK_THROWS_AS(tconv.forward(tensor_from<double>({1, 1, 1}, {0})), ShapeMismatch);
}

TEST_CASE("temporal conv gradients match finite differences") {
  Rng rng(19);
  nn::TemporalConv<double> tconv(2, 3, 3, 2, 1, rng);
  const auto x = random_tensor<double>({2, 6, 2, 2, 2}, rng);

  nn::ParamList<double> params;
  tconv.params("tconv", params);
  Tensor<double> dy;
  const auto result = grad_check<double>(params, [&] {
    tconv.zero_grad();
    typename nn::TemporalConv<double>::Cache cache;
    const auto y = tconv.forward(x, cache);
    const double loss = square_loss(y, dy);
    tconv.backward(cache, dy);
    return loss;
  });
  CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("batch norm training statistics and running buffers") {
  nn::BatchNorm<double> bn(1);
  bn.gamma << 2;
  bn.beta << 1;

  const auto x = tensor_from<double>({1, 2, 2}, {1, 2, 3, 4});
  typename nn::BatchNorm<double>::Cache cache;
  const auto y = bn.forward_train(x, cache);

  const double inv = 1.0 / std::sqrt(1.25 + 1e-5);
  CHECK(y(0, 0, 0) == doctest::Approx(2 * (1 - 2.5) * inv + 1));
  CHECK(y(0, 1, 1) == doctest::Approx(2 * (4 - 2.5) * inv + 1));

  CHECK(bn.running_mean(0) == doctest::Approx(0.1 * 2.5));
  // Unbiased variance: 1.25 * 4 / 3.
  CHECK(bn.running_var(0) == doctest::Approx(0.9 + 0.1 * 1.25 * 4.0 / 3.0));

  // Inference normalizes with the running buffers instead of batch stats.
  bn.running_mean << 1.0;
  bn.running_var << 4.0;
  const auto z = bn.forward(x);
  CHECK(z(0, 0, 0) == doctest::Approx(2 * (1 - 1.0) / std::sqrt(4.0 + 1e-5) + 1));
  CHECK(z(0, 1, 1) == doctest::Approx(2 * (4 - 1.0) / std::sqrt(4.0 + 1e-5) + 1));

  CHECK_THROWS_AS(bn.forward(tensor_from<double>({2, 1, 1}, {0, 0})), ShapeMismatch);
}

TEST_CASE("batch norm gradients match finite differences") {
  Rng rng(23);
  nn::BatchNorm<double> bn(3);
  for (Index i = 0; i < 3; ++i) {
    bn.gamma(i) = 1.0 + 0.2 * static_cast<double>(i);
    bn.beta(i) = 0.1 * static_cast<double>(i);
  }
  const auto x = random_tensor<double>({2, 3, 4, 4}, rng);

  nn::ParamList<double> params;
  bn.params("bn", params);
  Tensor<double> dy;
  // Use a fixed random readout so the loss is not invariant to beta.
  const auto readout = random_tensor<double>({2, 3, 4, 4}, rng);
  const auto result = grad_check<double>(params, [&] {
    bn.zero_grad();
    const auto rm = bn.running_mean;
    const auto rv = bn.running_var;
    typename nn::BatchNorm<double>::Cache cache;
    const auto y = bn.forward_train(x, cache);
    bn.running_mean = rm;  // keep the loss a pure function of the params
    bn.running_var = rv;
    dy = readout;
    bn.backward(cache, dy);
    return (y.flat().array() * readout.flat().array()).sum();
  });
  CHECK(result.max_rel_error < 1e-6);

  nn::ParamList<double> with_buffers;
  bn.buffers("bn", with_buffers);
  CHECK(with_buffers.size() == 2);
  CHECK(with_buffers[0].grad == nullptr);
}

TEST_CASE("relu masks negatives and routes gradients") {
  const auto x = tensor_from<double>({2, 2}, {-1, 2, 0, -3});
  const auto y = nn::relu(x);
  CHECK(y.flat()(0) == 0);
  CHECK(y.flat()(1) == 2);
  CHECK(y.flat()(2) == 0);
  CHECK(y.flat()(3) == 0);

  nn::ReluCache<double> cache;
  nn::relu(x, cache);
  const auto dy = tensor_from<double>({2, 2}, {10, 10, 10, 10});
  const auto dx = nn::relu_backward(cache, dy);
  CHECK(dx.flat()(0) == 0);
  CHECK(dx.flat()(1) == 10);
  CHECK(dx.flat()(2) == 0);
  CHECK(dx.flat()(3) == 0);

  RowMat<double> m(1, 3);
  m << -5, 0.5, 7;
  const auto mm = nn::relu_mat(m);
  CHECK(mm(0, 0) == 0);
  CHECK(mm(0, 1) == 0.5);
  CHECK(mm(0, 2) == 7);
}

TEST_CASE("average pooling and its backward split mass evenly") {
  const auto x = tensor_from<double>({1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8,
                                                 9, 10, 11, 12, 13, 14, 15, 16});
  const auto y = nn::avg_pool2d(x, 2);
  CHECK(y.shape() == std::vector<Index>{1, 2, 2});
  CHECK(y(0, 0, 0) == doctest::Approx(3.5));
  CHECK(y(0, 0, 1) == doctest::Approx(5.5));
  CHECK(y(0, 1, 0) == doctest::Approx(11.5));
  CHECK(y(0, 1, 1) == doctest::Approx(13.5));

  const auto dy = tensor_from<double>({1, 2, 2}, {4, 8, 12, 16});
  const auto dx = nn::avg_pool2d_backward({1, 4, 4}, 2, dy);
  CHECK(dx(0, 0, 0) == doctest::Approx(1.0));
  CHECK(dx(0, 0, 2) == doctest::Approx(2.0));
  CHECK(dx(0, 3, 3) == doctest::Approx(4.0));
  CHECK(dx.flat().sum() == doctest::Approx(dy.flat().sum()));
}

TEST_CASE("max pooling with stride and padding") {
  const auto x = tensor_from<double>({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = nn::max_pool2d(x, 2, 2, 0);
  CHECK(y.shape() == std::vector<Index>{1, 1, 1});
  CHECK(y(0, 0, 0) == 5);

  // Padding extends the grid; out-of-frame taps are skipped, not zero.
  const auto yp = nn::max_pool2d(x, 2, 2, 1);
  CHECK(yp.shape() == std::vector<Index>{1, 2, 2});
  CHECK(yp(0, 0, 0) == 1);
  CHECK(yp(0, 0, 1) == 3);
  CHECK(yp(0, 1, 0) == 7);
  CHECK(yp(0, 1, 1) == 9);
}

TEST_CASE("pooled reductions and their backwards") {
  Rng rng(5);
  const auto x = random_tensor<double>({3, 2, 2, 2}, rng);
  const auto m = nn::spatial_mean_frames(x);
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 2);
  CHECK(m(1, 0) == doctest::Approx(x.flat().segment(8, 4).mean()));

  RowMat<double> dy = RowMat<double>::Ones(3, 2);
  const auto dx = nn::spatial_mean_frames_backward({3, 2, 2, 2}, dy);
  CHECK(dx.flat()(0) == doctest::Approx(0.25));
  CHECK(dx.flat().sum() == doctest::Approx(6.0));
  CHECK_THROWS_AS(nn::spatial_mean_frames(random_tensor<double>({2, 2, 2}, rng)), ShapeMismatch);

  const auto v = random_tensor<double>({2, 3, 2, 2, 2}, rng);
  const auto g = nn::global_avg_pool_video(v);
  REQUIRE(g.rows() == 2);
  REQUIRE(g.cols() == 2);
  double acc = 0;
  for (Index t = 0; t < 3; ++t)
    for (Index i = 0; i < 4; ++i) acc += v.flat()(t * 8 + i);
  CHECK(g(0, 0) == doctest::Approx(acc / 12.0));

  const RowMat<double> ones = RowMat<double>::Ones(2, 2);
  const auto gdx = nn::global_avg_pool_video_backward({2, 3, 2, 2, 2}, ones);
  CHECK(gdx.flat()(0) == doctest::Approx(1.0 / 12.0));
  CHECK(gdx.flat().sum() == doctest::Approx(4.0));
  CHECK_THROWS_AS(nn::global_avg_pool_video(x), ShapeMismatch);

  const auto img = tensor_from<double>({2, 1, 2}, {1, 3, 10, 20});
  const auto pooled = nn::global_avg_pool_image(img);
  CHECK(pooled(0) == doctest::Approx(2.0));
  CHECK(pooled(1) == doctest::Approx(15.0));
}

TEST_CASE("softmax and log softmax are shift invariant and normalized") {
  ColVec<double> logits(3);
  logits << 0.2, -0.1, 0.4;

  const auto p = nn::softmax(logits);
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(p(0) == doctest::Approx(0.33758453779871642).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(0.25008877662170523).epsilon(1e-12));
  CHECK(p(2) == doctest::Approx(0.41232668557957835).epsilon(1e-12));

  const auto shifted = nn::softmax<double>((logits.array() + 1000.0).matrix());
  CHECK((shifted - p).cwiseAbs().maxCoeff() < 1e-12);

  const auto lp = nn::log_softmax(logits);
  CHECK((lp.array().exp().matrix() - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("binary cross entropy with logits matches the closed form") {
  double dz = 0;
  CHECK(nn::bce_with_logits(0.3, 1.0, &dz) == doctest::Approx(0.554355244468527).epsilon(1e-12));
  CHECK(dz == doctest::Approx(-0.425557483188341).epsilon(1e-12));
  CHECK(nn::bce_with_logits(-1.2, 0.0, &dz) == doctest::Approx(0.263282467338031).epsilon(1e-12));
  CHECK(dz == doctest::Approx(0.231475216500982).epsilon(1e-12));
  CHECK(nn::bce_with_logits(2.0, 1.0, &dz) == doctest::Approx(0.126928011042972).epsilon(1e-12));
  CHECK(dz == doctest::Approx(-0.119202922022118).epsilon(1e-12));

  // Extreme logits must not overflow.
  CHECK(std::isfinite(nn::bce_with_logits(800.0, 0.0)));
  CHECK(nn::bce_with_logits(800.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("categorical cross entropy with logits matches the closed form") {
  ColVec<double> logits(3);
  logits << 0.2, -0.1, 0.4;
  ColVec<double> d(3);
  CHECK(nn::ce_with_logits(logits, 2, &d) == doctest::Approx(0.885939317668456).epsilon(1e-12));
  CHECK(d(0) == doctest::Approx(0.33758453779871642).epsilon(1e-9));
  CHECK(d(1) == doctest::Approx(0.25008877662170523).epsilon(1e-9));
  CHECK(d(2) == doctest::Approx(0.41232668557957835 - 1.0).epsilon(1e-9));
  CHECK(d.sum() == doctest::Approx(0.0));
  CHECK_THROWS_AS(nn::ce_with_logits(logits, 3), ShapeMismatch);
  CHECK_THROWS_AS(nn::ce_with_logits(logits, Index(-1)), ShapeMismatch);
}

TEST_CASE("kl divergence of a hand pair and of identical distributions") {
  ColVec<double> p(3), q(3);
  p << 0.5, 0.25, 0.25;
  q << 0.25, 0.5, 0.25;
  CHECK(nn::kl_divergence(p, q) == doctest::Approx(0.173286795139986).epsilon(1e-12));
  CHECK(nn::kl_divergence(p, p) == doctest::Approx(0.0));
  // Zero mass in p contributes nothing.
  ColVec<double> pz(3), qz(3);
  pz << 1.0, 0.0, 0.0;
  qz << 0.5, 0.25, 0.25;
  CHECK(nn::kl_divergence(pz, qz) == doctest::Approx(std::log(2.0)));
}
