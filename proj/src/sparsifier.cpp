#include "splatspa/sparsifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "splatspa/cloud.hpp"
#include "splatspa/errors.hpp"

namespace splatspa {

namespace {

void require_length(std::span<const double> a, const SparsifierState& state, const char* op) {
  if (a.size() != state.z.size() || state.lambda.size() != state.z.size()) {
    throw InvalidArgument(std::string(op) + ": length mismatch (a has " + std::to_string(a.size()) +
                          ", state has " + std::to_string(state.z.size()) + ")");
  }
}

}  // namespace

SparsifierState init_state(std::span<const double> a, const SparsifierConfig& cfg) {
  if (cfg.kappa > a.size()) {
    throw InvalidBudget("sparsifier: kappa = " + std::to_string(cfg.kappa) + " exceeds n = " +
                        std::to_string(a.size()));
  }
  if (!(cfg.delta > 0.0)) throw InvalidParameter("sparsifier: delta must be positive");
  if (cfg.interval == 0) throw InvalidParameter("sparsifier: interval must be >= 1");
  if (!(cfg.epsilon >= 0.0)) throw InvalidParameter("sparsifier: epsilon must be >= 0");

  SparsifierState s;
  s.z.assign(a.begin(), a.end());
  s.lambda.assign(a.size(), 0.0);
  s.delta = cfg.delta;
  s.kappa = cfg.kappa;
  s.epsilon = cfg.epsilon;
  s.max_outer = cfg.max_outer;
  s.interval = cfg.interval;
  return s;
}

std::vector<double> coupling_gradient(std::span<const double> a, const SparsifierState& state) {
  require_length(a, state, "coupling_gradient");
  std::vector<double> g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) g[i] = state.delta * (a[i] - state.z[i] + state.lambda[i]);
  return g;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  k = std::min(k, scores.size());
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto ranks_before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), ranks_before);
  idx.resize(k);
  return idx;
}

std::vector<double> project_top_k(std::span<const double> v, std::size_t kappa,
                                  const ProjectionCriterion& criterion) {
  std::vector<double> z(v.size(), 0.0);
  if (kappa >= v.size()) {
    z.assign(v.begin(), v.end());
    return z;
  }
  std::vector<double> score;
  if (criterion.is_magnitude()) {
    score.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) score[i] = std::abs(v[i]);
  } else {
    if (criterion.scores().size() != v.size()) {
      throw InvalidArgument("sparsify: external score vector has length " +
                            std::to_string(criterion.scores().size()) + ", expected " + std::to_string(v.size()));
    }
    score = criterion.scores();
  }
  for (std::size_t i : top_k_indices(score, kappa)) z[i] = v[i];
  return z;
}

const std::vector<double>& sparsify_step(std::span<const double> a, SparsifierState& state,
                                         const ProjectionCriterion& criterion) {
  require_length(a, state, "sparsify_step");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i] + state.lambda[i];
  state.z = project_top_k(v, state.kappa, criterion);
  return state.z;
}

const std::vector<double>& multiplier_update(std::span<const double> a, SparsifierState& state) {
  require_length(a, state, "multiplier_update");
  for (std::size_t i = 0; i < a.size(); ++i) state.lambda[i] += a[i] - state.z[i];
  return state.lambda;
}

double residual(std::span<const double> a, const SparsifierState& state) {
  require_length(a, state, "residual");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - state.z[i];
    acc += d * d;
  }
  return acc;
}

bool converged(const SparsifierState& state, std::span<const double> a, std::size_t outer_count) {
  return residual(a, state) <= state.epsilon || outer_count > state.max_outer;
}

double penalty(std::span<const double> a, const SparsifierState& state, bool include_dual_term) {
  require_length(a, state, "penalty");
  double split = 0.0, dual = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - state.z[i] + state.lambda[i];
    split += d * d;
    dual += state.lambda[i] * state.lambda[i];
  }
  return 0.5 * state.delta * (include_dual_term ? split + dual : split);
}

void compact(SparsifierState& state, std::span<const std::size_t> kept) {
  for (std::size_t idx : kept) {
    if (idx >= state.z.size()) throw InvalidArgument("sparsifier compact: index out of range");
  }
  state.z = gather_rows(state.z, 1, kept);
  state.lambda = gather_rows(state.lambda, 1, kept);
}

}  // namespace splatspa
