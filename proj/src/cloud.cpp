#include "splatspa/cloud.hpp"

#include <string>

#include "splatspa/errors.hpp"

namespace splatspa {

GaussianCloud::GaussianCloud(std::size_t n)
    : mu(2 * n, 0.0),
      theta(n, 0.0),
      log_scale(2 * n, 0.0),
      opacity_logit(n, 0.0),
      color(3 * n, 0.0),
      order_key(n, 0.0),
      alive(n, 1) {}

std::size_t GaussianCloud::alive_count() const {
  std::size_t count = 0;
  for (auto a : alive) count += a ? 1 : 0;
  return count;
}

Gaussian2D GaussianCloud::get(std::size_t i) const {
  Gaussian2D g;
  g.mu = {mu[2 * i], mu[2 * i + 1]};
  g.theta = theta[i];
  g.log_scale = {log_scale[2 * i], log_scale[2 * i + 1]};
  g.opacity_logit = opacity_logit[i];
  g.color = {color[3 * i], color[3 * i + 1], color[3 * i + 2]};
  g.order_key = order_key[i];
  return g;
}

void GaussianCloud::set(std::size_t i, const Gaussian2D& g) {
  mu[2 * i] = g.mu.x;
  mu[2 * i + 1] = g.mu.y;
  theta[i] = g.theta;
  log_scale[2 * i] = g.log_scale[0];
  log_scale[2 * i + 1] = g.log_scale[1];
  opacity_logit[i] = g.opacity_logit;
  for (int c = 0; c < 3; ++c) color[3 * i + c] = g.color[c];
  order_key[i] = g.order_key;
}

void GaussianCloud::push_back(const Gaussian2D& g) {
  mu.insert(mu.end(), {g.mu.x, g.mu.y});
  theta.push_back(g.theta);
  log_scale.insert(log_scale.end(), g.log_scale.begin(), g.log_scale.end());
  opacity_logit.push_back(g.opacity_logit);
  color.insert(color.end(), g.color.begin(), g.color.end());
  order_key.push_back(g.order_key);
  alive.push_back(1);
}

std::vector<double> GaussianCloud::opacities() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = opacity(i);
  return out;
}

void GaussianCloud::keep(std::span<const std::size_t> indices) {
  for (std::size_t idx : indices) {
    if (idx >= size()) {
      throw InvalidArgument("keep: index " + std::to_string(idx) + " out of range for cloud of size " +
                            std::to_string(size()));
    }
  }
  mu = gather_rows(mu, 2, indices);
  theta = gather_rows(theta, 1, indices);
  log_scale = gather_rows(log_scale, 2, indices);
  opacity_logit = gather_rows(opacity_logit, 1, indices);
  color = gather_rows(color, 3, indices);
  order_key = gather_rows(order_key, 1, indices);
  alive = gather_rows(alive, 1, indices);
}

std::vector<std::size_t> GaussianCloud::compact() {
  std::vector<std::size_t> kept;
  kept.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    if (alive[i]) kept.push_back(i);
  }
  keep(kept);
  return kept;
}

void GaussianCloud::validate() const {
  const std::size_t n = size();
  if (mu.size() != 2 * n || log_scale.size() != 2 * n || opacity_logit.size() != n ||
      color.size() != 3 * n || order_key.size() != n || alive.size() != n) {
    throw InvalidArgument("GaussianCloud column lengths disagree (n = " + std::to_string(n) + ")");
  }
}

}  // namespace splatspa
