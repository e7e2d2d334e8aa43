#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "splatspa/errors.hpp"
#include "splatspa/sparsifier.hpp"
#include "support.hpp"

using namespace splatspa;
using test_support::rel_err;

namespace {

SparsifierState state_with(std::vector<double> z, std::vector<double> lambda, double delta = 1e-2,
                           std::size_t kappa = 1) {
  SparsifierState s = init_state(z, {delta, kappa, 1e-4, 10, 50});
  s.z = std::move(z);
  s.lambda = std::move(lambda);
  return s;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double dist_sq(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Smallest |v - z|^2 over every kappa-sparse z, by enumerating supports.
// The best z for a fixed support copies v on it.
double exhaustive_best(const std::vector<double>& v, std::size_t kappa) {
  const std::size_t n = v.size();
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(kappa), true);
  double best = INFINITY;
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!pick[i]) cost += v[i] * v[i];
    }
    best = std::min(best, cost);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

std::size_t nonzeros(const std::vector<double>& z) {
  return static_cast<std::size_t>(std::count_if(z.begin(), z.end(), [](double x) { return x != 0.0; }));
}

}  // namespace

TEST_CASE("init copies a into z and zeroes lambda") {
  const std::vector<double> a{0.5, 0.2};
  const SparsifierState s = init_state(a, {1e-2, 1, 1e-4, 5, 50});
  CHECK(s.z == a);
  CHECK(s.lambda == std::vector<double>{0.0, 0.0});
  CHECK(s.outer == 0);
  CHECK_FALSE(s.finished);

  const SparsifierState empty = init_state(std::vector<double>{}, {1e-2, 0, 0.0, 0, 50});
  CHECK(empty.size() == 0);

  SparsifierState full = init_state(a, {1e-2, 2, 1e-4, 5, 50});
  sparsify_step(std::vector<double>{0.3, 0.9}, full);
  CHECK(full.z == std::vector<double>{0.3, 0.9});
}

TEST_CASE("init validates budget and parameters") {
  const std::vector<double> a{0.5, 0.2};
  CHECK_THROWS_AS(init_state(a, {1e-2, 3, 1e-4, 5, 50}), InvalidBudget);
  CHECK_THROWS_AS(init_state(a, {0.0, 1, 1e-4, 5, 50}), InvalidParameter);
  CHECK_THROWS_AS(init_state(a, {1e-2, 1, 1e-4, 5, 0}), InvalidParameter);
}

TEST_CASE("coupling gradient examples") {
  const std::vector<double> a{0.4, 0.6};
  CHECK(coupling_gradient(a, state_with(a, {0.0, 0.0})) == std::vector<double>{0.0, 0.0});
  const auto g = coupling_gradient(std::vector<double>{0.8}, state_with({0.0}, {0.1}, 2.0));
  CHECK(g[0] == doctest::Approx(1.8).epsilon(1e-15));
  CHECK_THROWS(coupling_gradient(std::vector<double>{0.1, 0.2, 0.3}, state_with(a, {0.0, 0.0})));
}

TEST_CASE("coupling gradient is the derivative of the penalty") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> a = random_vec(8, rng, 0.0, 1.0);
    const SparsifierState s = state_with(random_vec(8, rng, 0.0, 1.0), random_vec(8, rng), 0.37, 3);
    const auto g = coupling_gradient(a, s);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double h = 1e-5;
      std::vector<double> p = a, m = a;
      p[i] += h;
      m[i] -= h;
      const double nu = (penalty(p, s) - penalty(m, s)) / (2 * h);
      CHECK(rel_err(g[i], nu, 1e-9) < 1e-6);
      // the dual term does not depend on a
      const double nu_dual = (penalty(p, s, true) - penalty(m, s, true)) / (2 * h);
      CHECK(rel_err(g[i], nu_dual, 1e-9) < 1e-6);
    }
  }
}

TEST_CASE("penalty values") {
  const SparsifierState s = state_with({0.0, 0.5}, {0.1, -0.2}, 2.0, 1);
  const std::vector<double> a{0.3, 0.5};
  // (2/2)((0.3+0.1)^2 + (0-0.2)^2) = 0.16 + 0.04
  CHECK(penalty(a, s) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(penalty(a, s, true) == doctest::Approx(0.2 + 0.01 + 0.04).epsilon(1e-14));
}

TEST_CASE("projection keeps the top-kappa magnitudes") {
  const std::vector<double> v{0.9, 0.1, 0.5, 0.3};
  CHECK(project_top_k(v, 2, ProjectionCriterion::magnitude()) == std::vector<double>{0.9, 0.0, 0.5, 0.0});
  CHECK(project_top_k(v, 4, ProjectionCriterion::magnitude()) == v);
  CHECK(project_top_k(v, 0, ProjectionCriterion::magnitude()) == std::vector<double>(4, 0.0));
  // magnitude, not signed value
  CHECK(project_top_k(std::vector<double>{-0.8, 0.5, 0.1}, 1, ProjectionCriterion::magnitude()) ==
        std::vector<double>{-0.8, 0.0, 0.0});
}

TEST_CASE("sparsify step projects a + lambda") {
  const std::vector<double> a{0.5, 0.1, 0.4, 0.3};
  SparsifierState s = state_with(a, {0.4, 0.0, 0.0, 0.0}, 1e-2, 2);
  const auto& z = sparsify_step(a, s);
  CHECK(z == std::vector<double>{0.9, 0.0, 0.4, 0.0});
}

TEST_CASE("ties go to the lower index") {
  const std::vector<double> v{0.5, 0.7, 0.5, 0.5};
  CHECK(top_k_indices(v, 2) == std::vector<std::size_t>{1, 0});
  CHECK(project_top_k(v, 2, ProjectionCriterion::magnitude()) == std::vector<double>{0.5, 0.7, 0.0, 0.0});
  CHECK(project_top_k(std::vector<double>{0.5, -0.5}, 1, ProjectionCriterion::magnitude()) ==
        std::vector<double>{0.5, 0.0});
}

TEST_CASE("external scores choose the support") {
  const std::vector<double> v{0.9, 0.1, 0.5, 0.3};
  const auto z = project_top_k(v, 2, ProjectionCriterion::external({0.0, 5.0, 1.0, 3.0}));
  CHECK(z == std::vector<double>{0.0, 0.1, 0.0, 0.3});
  CHECK_THROWS(project_top_k(v, 2, ProjectionCriterion::external({1.0, 2.0})));
}

TEST_CASE("magnitude projection is the exact minimizer for every n <= 10 and kappa <= n") {
  std::mt19937_64 rng(2024);
  for (std::size_t n = 0; n <= 10; ++n) {
    for (std::size_t kappa = 0; kappa <= n; ++kappa) {
      for (int trial = 0; trial < 3; ++trial) {
        const std::vector<double> v = random_vec(n, rng);
        const auto z = project_top_k(v, kappa, ProjectionCriterion::magnitude());
        CHECK(nonzeros(z) <= kappa);
        CHECK(dist_sq(v, z) == doctest::Approx(exhaustive_best(v, kappa)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("random n=10 kappa=4 support equals the enumerated argmin") {
  std::mt19937_64 rng(99);
  const std::vector<double> v = random_vec(10, rng);
  const auto z = project_top_k(v, 4, ProjectionCriterion::magnitude());
  std::vector<std::size_t> best_support;
  double best = INFINITY;
  std::vector<bool> pick(10, false);
  std::fill(pick.begin(), pick.begin() + 4, true);
  do {
    double cost = 0.0;
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < 10; ++i) {
      if (pick[i]) support.push_back(i);
      else cost += v[i] * v[i];
    }
    if (cost < best) {
      best = cost;
      best_support = support;
    }
  } while (std::prev_permutation(pick.begin(), pick.end()));
  std::vector<std::size_t> got;
  for (std::size_t i = 0; i < 10; ++i) {
    if (z[i] != 0.0) got.push_back(i);
  }
  CHECK(got == best_support);
}

TEST_CASE("support is invariant to positive scaling") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> v = random_vec(12, rng);
    std::vector<double> scaled = v;
    const double c = std::exp(random_vec(1, rng, -3.0, 3.0)[0]);
    for (double& x : scaled) x *= c;
    CHECK(top_k_indices(std::vector<double>(v.begin(), v.end()), 5).size() == 5);
    const auto z1 = project_top_k(v, 5, ProjectionCriterion::magnitude());
    const auto z2 = project_top_k(scaled, 5, ProjectionCriterion::magnitude());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK((z1[i] != 0.0) == (z2[i] != 0.0));
  }
}

TEST_CASE("multiplier update") {
  const std::vector<double> a{0.3, 0.6};
  SparsifierState same = state_with(a, {0.1, -0.2});
  CHECK(multiplier_update(a, same) == std::vector<double>{0.1, -0.2});

  SparsifierState s = state_with({0.0}, {0.0});
  CHECK(multiplier_update(std::vector<double>{0.7}, s)[0] == doctest::Approx(0.7));

  SparsifierState three = state_with({0.2, 0.0}, {0.0, 0.0});
  for (int k = 0; k < 3; ++k) multiplier_update(a, three);
  CHECK(three.lambda[0] == doctest::Approx(3 * (0.3 - 0.2)).epsilon(1e-14));
  CHECK(three.lambda[1] == doctest::Approx(3 * 0.6).epsilon(1e-14));
}

TEST_CASE("residual") {
  const std::vector<double> a{1.0, 0.0};
  CHECK(residual(a, state_with(a, {0, 0})) == 0.0);
  CHECK(residual(a, state_with({0.0, 0.0}, {0, 0})) == 1.0);
  std::mt19937_64 rng(13);
  const auto x = random_vec(30, rng), y = random_vec(30, rng);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 30; ++i) oracle += (x[i] - y[i]) * (x[i] - y[i]);
  SparsifierState s = init_state(y, {1e-2, 3, 1e-4, 5, 50});
  CHECK(residual(x, s) == doctest::Approx(oracle).epsilon(1e-14));
}

TEST_CASE("convergence guard") {
  const std::vector<double> a{0.5, 0.5};
  SparsifierState s = init_state(a, {1e-2, 1, 1e-4, 7, 50});
  CHECK(converged(s, a, 0));  // residual 0
  s.z = {0.5, 0.5 - std::sqrt(10 * 1e-4)};  // residual 10 eps
  CHECK_FALSE(converged(s, a, 0));
  CHECK_FALSE(converged(s, a, 7));
  CHECK(converged(s, a, 8));  // T + 1
}

TEST_CASE("z stays kappa-sparse through repeated steps") {
  std::mt19937_64 rng(17);
  std::vector<double> a = random_vec(40, rng, 0.0, 1.0);
  SparsifierState s = init_state(a, {0.1, 9, 1e-4, 100, 10});
  for (int k = 0; k < 25; ++k) {
    sparsify_step(a, s);
    CHECK(nonzeros(s.z) <= 9);
    multiplier_update(a, s);
    a = random_vec(40, rng, 0.0, 1.0);
  }
}

TEST_CASE("compaction follows the cloud's index mapping") {
  SparsifierState s = state_with({0.1, 0.2, 0.3, 0.4}, {1, 2, 3, 4}, 1e-2, 2);
  compact(s, std::vector<std::size_t>{1, 3});
  CHECK(s.z == std::vector<double>{0.2, 0.4});
  CHECK(s.lambda == std::vector<double>{2, 4});
}
