#include <cmath>
#include <random>

#include "doctest.h"
#include "splatspa/errors.hpp"
#include "splatspa/loss.hpp"
#include "splatspa/renderer.hpp"
#include "support.hpp"

using namespace splatspa;
using test_support::rel_err;

namespace {

Gaussian2D splat(double x, double y, double scale, double a, Rgb c, double key) {
  Gaussian2D g;
  g.mu = {x, y};
  g.log_scale = {std::log(scale), std::log(scale)};
  g.opacity_logit = logit(a);
  g.color = c;
  g.order_key = key;
  return g;
}

RenderSettings exact(int w, int h) {
  RenderSettings s;
  s.width = w;
  s.height = h;
  s.cutoff_sq = RenderSettings::kNoCutoff;
  s.threads = 1;
  return s;
}

// Half of the squared difference to a fixed random target.
double l2_objective(const Image& img, const Image& target, Image* grad) {
  double v = 0.0;
  if (grad) *grad = Image(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double d = img.data[i] - target.data[i];
    v += 0.5 * d * d;
    if (grad) grad->data[i] = d;
  }
  return v;
}

}  // namespace

TEST_CASE("empty cloud renders the background") {
  RenderSettings s = exact(8, 5);
  s.background = {0.2, 0.4, 0.6};
  const Image img = render(GaussianCloud{}, s);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(img.at(x, y, 0) == 0.2);
      CHECK(img.at(x, y, 1) == 0.4);
      CHECK(img.at(x, y, 2) == 0.6);
    }
  }
}

TEST_CASE("fully opaque Gaussian at a pixel center reproduces its color") {
  GaussianCloud cloud;
  Gaussian2D g = splat(3.5, 2.5, 1.0, 0.5, {0.25, 0.5, 0.75}, 0.0);
  g.opacity_logit = 800.0;  // sigmoid == 1 in double
  cloud.push_back(g);
  const Image img = render(cloud, exact(8, 8));
  CHECK(img.at(3, 2, 0) == 0.25);
  CHECK(img.at(3, 2, 1) == 0.5);
  CHECK(img.at(3, 2, 2) == 0.75);
}

TEST_CASE("two overlapping Gaussians match the hand-evaluated blend") {
  GaussianCloud cloud;
  // inserted back-first so the order key, not the index, decides
  const Gaussian2D back = splat(5.0, 4.0, 2.0, 0.6, {0.1, 0.8, 0.3}, 0.9);
  const Gaussian2D front = splat(3.0, 3.0, 1.5, 0.7, {0.9, 0.2, 0.4}, 0.1);
  cloud.push_back(back);
  cloud.push_back(front);
  RenderSettings s = exact(8, 8);
  s.background = {0.3, 0.3, 0.3};
  const Image img = render(cloud, s);

  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const Vec2 p{x + 0.5, y + 0.5};
      const double a1 = 0.7 * eval_gaussian(front, p);
      const double a2 = 0.6 * eval_gaussian(back, p);
      for (int c = 0; c < 3; ++c) {
        const double expect = front.color[c] * a1 + back.color[c] * a2 * (1 - a1) + 0.3 * (1 - a1) * (1 - a2);
        CHECK(img.at(x, y, c) == doctest::Approx(expect).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("dead Gaussians are skipped") {
  GaussianCloud cloud = test_support::random_cloud(4, 16, 16, 2);
  GaussianCloud fewer = cloud;
  cloud.alive[2] = 0;
  fewer.keep(std::vector<std::size_t>{0, 1, 3});
  CHECK(render(cloud, exact(16, 16)) == render(fewer, exact(16, 16)));
  const CloudGradient g = render_backward(cloud, exact(16, 16), Image(16, 16, 1.0));
  CHECK(g.opacity_logit[2] == 0.0);
  CHECK(g.mu[4] == 0.0);
}

TEST_CASE("transmittance floor stops compositing") {
  GaussianCloud cloud;
  Gaussian2D opaque = splat(2.5, 2.5, 4.0, 0.5, {1, 0, 0}, 0.0);
  opaque.opacity_logit = 800.0;
  cloud.push_back(opaque);
  cloud.push_back(splat(2.5, 2.5, 4.0, 0.9, {0, 1, 0}, 1.0));
  const Image img = render(cloud, exact(5, 5));
  CHECK(img.at(2, 2, 1) == 0.0);
  Image up(5, 5);
  up.at(2, 2, 1) = 1.0;  // only the fully covered center pixel
  const CloudGradient g = render_backward(cloud, exact(5, 5), up);
  CHECK(g.color[4] == 0.0);
  CHECK(g.opacity_logit[1] == 0.0);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  const GaussianCloud cloud = test_support::random_cloud(5, 16, 16, 4);
  const CloudGradient g = render_backward(cloud, exact(16, 16), Image(16, 16));
  for (const auto* col : {&g.mu, &g.theta, &g.log_scale, &g.opacity_logit, &g.color}) {
    for (double v : *col) CHECK(v == 0.0);
  }
}

TEST_CASE("backward rejects a mis-shaped upstream gradient") {
  const GaussianCloud cloud = test_support::random_cloud(2, 16, 16, 4);
  CHECK_THROWS_AS(render_backward(cloud, exact(16, 16), Image(15, 16)), InvalidArgument);
}

TEST_CASE("single Gaussian opacity-logit gradient at its center pixel") {
  GaussianCloud cloud;
  cloud.push_back(splat(4.5, 4.5, 1.3, 0.35, {0.9, 0.6, 0.2}, 0.0));
  RenderSettings s = exact(9, 9);
  s.background = {0.1, 0.2, 0.3};
  Image up(9, 9);
  up.at(4, 4, 0) = 1.0;  // loss = red channel at mu
  const CloudGradient g = render_backward(cloud, s, up);
  const double logit_v = cloud.opacity_logit[0];
  CHECK(g.opacity_logit[0] == doctest::Approx(1.0 * sigmoid_derivative(logit_v) * (0.9 - 0.1)).epsilon(1e-13));
}

TEST_CASE("backward matches central differences for 5 Gaussians on 16x16") {
  const RenderSettings s = exact(16, 16);
  const Image target = test_support::random_image(16, 16, 77);
  int failures = 0;
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    const GaussianCloud cloud = test_support::random_cloud(5, 16, 16, 100 + trial);
    Image up;
    l2_objective(render(cloud, s), target, &up);
    const CloudGradient g = render_backward(cloud, s, up);
    auto objective = [&](const GaussianCloud& c) { return l2_objective(render(c, s), target, nullptr); };
    auto check_column = [&](std::vector<double> GaussianCloud::*col, const std::vector<double>& an, double h) {
      for (std::size_t k = 0; k < an.size(); ++k) {
        GaussianCloud p = cloud, m = cloud;
        (p.*col)[k] += h;
        (m.*col)[k] -= h;
        const double nu = (objective(p) - objective(m)) / (2 * h);
        if (rel_err(an[k], nu, 1e-4) >= 1e-4) {
          ++failures;
          MESSAGE("column entry " << k << " analytic " << an[k] << " numeric " << nu);
        }
      }
    };
    check_column(&GaussianCloud::mu, g.mu, 1e-3);
    check_column(&GaussianCloud::theta, g.theta, 1e-3);
    check_column(&GaussianCloud::log_scale, g.log_scale, 1e-3);
    check_column(&GaussianCloud::opacity_logit, g.opacity_logit, 1e-3);
    check_column(&GaussianCloud::color, g.color, 1e-3);
  }
  CHECK(failures == 0);
}

TEST_CASE("RenderPass agrees with render and render_backward") {
  const GaussianCloud cloud = test_support::random_cloud(40, 48, 40, 8);
  RenderSettings s;
  s.width = 48;
  s.height = 40;
  s.threads = 1;
  const RenderPass pass(cloud, s);
  CHECK(pass.image() == render(cloud, s));
  const Image up = test_support::random_image(48, 40, 3, -1.0, 1.0);
  const CloudGradient a = pass.backward(up);
  const CloudGradient b = render_backward(cloud, s, up);
  CHECK(a.mu == b.mu);
  CHECK(a.opacity_logit == b.opacity_logit);
  CHECK(a.color == b.color);
}

TEST_CASE("renders are deterministic and thread-count independent") {
  const GaussianCloud cloud = test_support::random_cloud(200, 70, 50, 21);
  RenderSettings s;
  s.width = 70;
  s.height = 50;
  s.threads = 1;
  const Image one = render(cloud, s);
  CHECK(render(cloud, s) == one);
  const Image up = test_support::random_image(70, 50, 5, -1.0, 1.0);
  const CloudGradient g1 = render_backward(cloud, s, up);
  for (unsigned t : {2u, 3u, 8u}) {
    s.threads = t;
    CHECK(render(cloud, s) == one);
    const CloudGradient gt = render_backward(cloud, s, up);
    CHECK(gt.mu == g1.mu);
    CHECK(gt.theta == g1.theta);
    CHECK(gt.log_scale == g1.log_scale);
    CHECK(gt.opacity_logit == g1.opacity_logit);
    CHECK(gt.color == g1.color);
    CHECK(blend_weight_mass(cloud, s) == blend_weight_mass(cloud, RenderSettings{s.width, s.height}));
  }
}

TEST_CASE("swapping order keys of overlapping opaque Gaussians changes the image") {
  GaussianCloud cloud;
  cloud.push_back(splat(4, 4, 2.0, 0.95, {1, 0, 0}, 0.2));
  cloud.push_back(splat(5, 5, 2.0, 0.95, {0, 0, 1}, 0.8));
  const Image a = render(cloud, exact(10, 10));
  std::swap(cloud.order_key[0], cloud.order_key[1]);
  const Image b = render(cloud, exact(10, 10));
  CHECK(a.at(4, 4, 0) > b.at(4, 4, 0));
  CHECK_FALSE(a == b);
}

TEST_CASE("a near-zero opacity Gaussian is invisible") {
  GaussianCloud cloud = test_support::random_cloud(12, 24, 24, 31);
  RenderSettings s;
  s.width = 24;
  s.height = 24;
  const Image before = render(cloud, s);
  GaussianCloud faded = cloud;
  faded.opacity_logit[5] = logit(9e-8);
  faded.color[15] = 1.0 - faded.color[15];
  const Image after = render(faded, s);
  GaussianCloud removed = faded;
  removed.alive[5] = 0;
  const Image gone = render(removed, s);
  for (std::size_t i = 0; i < before.data.size(); ++i) CHECK(std::abs(after.data[i] - gone.data[i]) < 1e-5);
}

TEST_CASE("blend weight mass") {
  SUBCASE("zero opacity scores zero") {
    GaussianCloud cloud;
    Gaussian2D g = splat(4, 4, 2.0, 0.5, {1, 1, 1}, 0.0);
    g.opacity_logit = -800.0;
    cloud.push_back(g);
    CHECK(blend_weight_mass(cloud, exact(8, 8))[0] == 0.0);
  }
  SUBCASE("an opaque wide Gaussian scores about its pixel count") {
    GaussianCloud cloud;
    Gaussian2D g = splat(4, 3, 400.0, 0.5, {1, 1, 1}, 0.0);
    g.opacity_logit = 800.0;
    cloud.push_back(g);
    CHECK(blend_weight_mass(cloud, exact(8, 6))[0] == doctest::Approx(48.0).epsilon(1e-3));
  }
  SUBCASE("two-Gaussian occlusion matches hand-evaluated weights") {
    GaussianCloud cloud;
    const Gaussian2D front = splat(3.0, 3.0, 1.5, 0.7, {0.9, 0.2, 0.4}, 0.1);
    const Gaussian2D back = splat(4.0, 3.5, 2.0, 0.6, {0.1, 0.8, 0.3}, 0.9);
    cloud.push_back(front);
    cloud.push_back(back);
    double w_front = 0.0, w_back = 0.0;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const Vec2 p{x + 0.5, y + 0.5};
        const double a1 = 0.7 * eval_gaussian(front, p);
        const double a2 = 0.6 * eval_gaussian(back, p);
        w_front += a1;
        w_back += a2 * (1 - a1);
      }
    }
    const auto mass = blend_weight_mass(cloud, exact(8, 8));
    CHECK(mass[0] == doctest::Approx(w_front).epsilon(1e-12));
    CHECK(mass[1] == doctest::Approx(w_back).epsilon(1e-12));
  }
}

TEST_CASE("cutoff render stays close to the exact render") {
  const GaussianCloud cloud = test_support::random_cloud(30, 32, 32, 12);
  RenderSettings cut;
  cut.width = cut.height = 32;
  const Image a = render(cloud, cut);
  const Image b = render(cloud, exact(32, 32));
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) < 2e-3);
}

TEST_CASE("settings validation") {
  RenderSettings s;
  s.tile_size = 12;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = RenderSettings{};
  s.width = 0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = RenderSettings{};
  s.transmittance_floor = 1.0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
}
