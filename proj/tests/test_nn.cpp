#include <doctest.h>

#include <cmath>
#include <functional>

#include "passdoor/nn.hpp"
#include "passdoor/rng.hpp"

using namespace passdoor;

namespace {

Tensor<double> random_tensor(Rng& rng, int n, int c, int h, int w, double scale = 1.0) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.v) v = rng.normal(0.0, scale);
  return t;
}

double dot_loss(const Tensor<double>& y, const AlignedVec<double>& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i) acc += y.v[i] * r[i];
  return acc;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

/// Central finite differences on every entry of `buf` against the
/// analytic gradient, with loss_fn re-running the forward pass.
void fd_check(AlignedVec<double>& buf, const AlignedVec<double>& analytic,
              const std::function<double()>& loss_fn, double h = 1e-6, double tol = 1e-5) {
  REQUIRE(buf.size() == analytic.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double orig = buf[i];
    buf[i] = orig + h;
    const double lp = loss_fn();
    buf[i] = orig - h;
    const double lm = loss_fn();
    buf[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    if (std::abs(fd) < 1e-10 && std::abs(analytic[i]) < 1e-10) continue;
    CHECK(rel_err(fd, analytic[i]) < tol);
  }
}

}  // namespace

TEST_CASE("conv2d forward matches a naive direct convolution") {
  Rng rng(1);
  Conv2d<double> conv("c", 2, 3, 3, 1);
  conv.init(rng);
  Tensor<double> x = random_tensor(rng, 1, 2, 5, 5);
  Tensor<double> y = conv.forward(x);
  REQUIRE(y.c == 3);
  REQUIRE(y.h == 5);
  REQUIRE(y.w == 5);

  std::vector<ParamRef<double>> ps;
  conv.collect(ps);
  const auto& w = *ps[0].w;
  const auto& b = *ps[1].w;
  for (int co = 0; co < 3; ++co) {
    for (int oy = 0; oy < 5; ++oy) {
      for (int ox = 0; ox < 5; ++ox) {
        double acc = b[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < 2; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy + ky - 1, ix = ox + kx - 1;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
              acc += w[((static_cast<std::size_t>(co) * 2 + ci) * 3 + ky) * 3 + kx] *
                     x.at(0, ci, iy, ix);
            }
        CHECK(std::abs(acc - y.at(0, co, oy, ox)) < 1e-12);
      }
    }
  }
}

TEST_CASE("conv2d gradients: input, weights, bias (stride 1 and 2)") {
  for (int stride : {1, 2}) {
    Rng rng(10 + stride);
    Conv2d<double> conv("c", 2, 3, 3, stride);
    conv.init(rng);
    Tensor<double> x = random_tensor(rng, 2, 2, 6, 6);
    Tensor<double> y0 = conv.forward(x);
    AlignedVec<double> r(y0.v.size());
    for (auto& v : r) v = rng.normal();

    Tensor<double> dy(y0.n, y0.c, y0.h, y0.w);
    dy.v = r;
    std::vector<ParamRef<double>> ps;
    conv.collect(ps);
    for (auto& p : ps) std::fill(p.g->begin(), p.g->end(), 0.0);
    Tensor<double> dx = conv.backward(dy);

    auto loss = [&] { return dot_loss(conv.forward(x), r); };
    fd_check(x.v, dx.v, loss);
    fd_check(*ps[0].w, *ps[0].g, loss);
    fd_check(*ps[1].w, *ps[1].g, loss);
  }
}

TEST_CASE("depthwise conv gradients") {
  Rng rng(3);
  DepthwiseConv2d<double> conv("dw", 3, 3, 2);
  conv.init(rng);
  Tensor<double> x = random_tensor(rng, 2, 3, 6, 6);
  Tensor<double> y0 = conv.forward(x);
  AlignedVec<double> r(y0.v.size());
  for (auto& v : r) v = rng.normal();
  Tensor<double> dy(y0.n, y0.c, y0.h, y0.w);
  dy.v = r;
  std::vector<ParamRef<double>> ps;
  conv.collect(ps);
  for (auto& p : ps) std::fill(p.g->begin(), p.g->end(), 0.0);
  Tensor<double> dx = conv.backward(dy);

  auto loss = [&] { return dot_loss(conv.forward(x), r); };
  fd_check(x.v, dx.v, loss);
  fd_check(*ps[0].w, *ps[0].g, loss);
  fd_check(*ps[1].w, *ps[1].g, loss);
}

TEST_CASE("linear gradients") {
  Rng rng(4);
  Linear<double> lin("l", 12, 5);
  lin.init(rng);
  Tensor<double> x = random_tensor(rng, 3, 12, 1, 1);
  Tensor<double> y0 = lin.forward(x);
  AlignedVec<double> r(y0.v.size());
  for (auto& v : r) v = rng.normal();
  Tensor<double> dy(3, 5, 1, 1);
  dy.v = r;
  std::vector<ParamRef<double>> ps;
  lin.collect(ps);
  for (auto& p : ps) std::fill(p.g->begin(), p.g->end(), 0.0);
  Tensor<double> dx = lin.backward(dy);

  auto loss = [&] { return dot_loss(lin.forward(x), r); };
  fd_check(x.v, dx.v, loss);
  fd_check(*ps[0].w, *ps[0].g, loss);
  fd_check(*ps[1].w, *ps[1].g, loss);
}

TEST_CASE("activation and pooling gradients") {
  Rng rng(5);
  Tensor<double> x = random_tensor(rng, 2, 3, 4, 4);

  SUBCASE("leaky relu") {
    LeakyReLU<double> act(0.1);
    Tensor<double> y0 = act.forward(x);
    AlignedVec<double> r(y0.v.size());
    for (auto& v : r) v = rng.normal();
    Tensor<double> dy = y0;
    dy.v = r;
    Tensor<double> dx = act.backward(dy);
    auto loss = [&] { return dot_loss(act.forward(x), r); };
    fd_check(x.v, dx.v, loss);
  }
  SUBCASE("tanh") {
    Tanh<double> act;
    Tensor<double> y0 = act.forward(x);
    AlignedVec<double> r(y0.v.size());
    for (auto& v : r) v = rng.normal();
    Tensor<double> dy = y0;
    dy.v = r;
    Tensor<double> dx = act.backward(dy);
    auto loss = [&] { return dot_loss(act.forward(x), r); };
    fd_check(x.v, dx.v, loss);
  }
  SUBCASE("global average pool") {
    GlobalAvgPool<double> gap;
    Tensor<double> y0 = gap.forward(x);
    CHECK(y0.h == 1);
    CHECK(std::abs(y0.at(0, 0, 0, 0) -
                   [&] {
                     double s = 0;
                     for (int yy = 0; yy < 4; ++yy)
                       for (int xx = 0; xx < 4; ++xx) s += x.at(0, 0, yy, xx);
                     return s / 16.0;
                   }()) < 1e-12);
    AlignedVec<double> r(y0.v.size());
    for (auto& v : r) v = rng.normal();
    Tensor<double> dy = y0;
    dy.v = r;
    Tensor<double> dx = gap.backward(dy);
    auto loss = [&] { return dot_loss(gap.forward(x), r); };
    fd_check(x.v, dx.v, loss);
  }
  SUBCASE("upsample2x") {
    Upsample2x<double> up;
    Tensor<double> y0 = up.forward(x);
    CHECK(y0.h == 8);
    CHECK(y0.at(0, 0, 3, 3) == x.at(0, 0, 1, 1));
    AlignedVec<double> r(y0.v.size());
    for (auto& v : r) v = rng.normal();
    Tensor<double> dy = y0;
    dy.v = r;
    Tensor<double> dx = up.backward(dy);
    auto loss = [&] { return dot_loss(up.forward(x), r); };
    fd_check(x.v, dx.v, loss);
  }
  SUBCASE("channel mask") {
    ChannelMask<double> mask;
    mask.resize(3);
    mask.mask()[1] = 0.0;
    Tensor<double> y0 = mask.forward(x);
    for (int yy = 0; yy < 4; ++yy)
      for (int xx = 0; xx < 4; ++xx) CHECK(y0.at(0, 1, yy, xx) == 0.0);
    AlignedVec<double> r(y0.v.size());
    for (auto& v : r) v = rng.normal();
    Tensor<double> dy = y0;
    dy.v = r;
    Tensor<double> dx = mask.backward(dy);
    auto loss = [&] { return dot_loss(mask.forward(x), r); };
    fd_check(x.v, dx.v, loss);
  }
}

TEST_CASE("adam minimizes a quadratic deterministically") {
  auto run = [] {
    AlignedVec<double> w = {5.0, -3.0, 2.0};
    AlignedVec<double> g(3, 0.0);
    Adam<double> opt({{"w", &w, &g}}, 0.05);
    for (int i = 0; i < 500; ++i) {
      opt.zero_grad();
      for (int k = 0; k < 3; ++k) g[static_cast<std::size_t>(k)] = 2.0 * w[static_cast<std::size_t>(k)];
      opt.step();
    }
    return w;
  };
  const auto w1 = run();
  const auto w2 = run();
  CHECK(w1 == w2);
  for (double v : w1) CHECK(std::abs(v) < 1e-2);
}

TEST_CASE("stable bce helpers") {
  CHECK(std::abs(bce_with_logits(0.0, 1.0) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(bce_with_logits(0.0, 0.0) - std::log(2.0)) < 1e-12);
  CHECK(bce_with_logits(50.0, 1.0) < 1e-12);
  CHECK(bce_with_logits(-50.0, 0.0) < 1e-12);
  CHECK(std::isfinite(bce_with_logits(1000.0, 0.0)));
  CHECK(std::abs(sigmoid(0.0) - 0.5) < 1e-15);
}
