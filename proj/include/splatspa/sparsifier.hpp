#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace splatspa {

/// Ranking used by the sparsifying projection: magnitude of a + lambda by
/// default, or caller-supplied per-Gaussian importance scores.
class ProjectionCriterion {
 public:
  static ProjectionCriterion magnitude() { return ProjectionCriterion{}; }
  static ProjectionCriterion external(std::vector<double> scores) {
    ProjectionCriterion c;
    c.scores_ = std::move(scores);
    return c;
  }

  bool is_magnitude() const { return !scores_.has_value(); }
  const std::vector<double>& scores() const { return *scores_; }

 private:
  std::optional<std::vector<double>> scores_;
};

struct SparsifierConfig {
  double delta = 1e-2;          // penalty weight
  std::size_t kappa = 0;        // Gaussian budget
  double epsilon = 0.0;         // feasibility tolerance on |a - z|^2
  std::size_t max_outer = 0;    // T, cap on sparsifying steps
  std::size_t interval = 50;    // training iterations between sparsifying steps

  bool operator==(const SparsifierConfig&) const = default;
};

/// Augmented-Lagrangian state over activated opacities: auxiliary sparse
/// copy z and the scaled dual multiplier lambda.
struct SparsifierState {
  std::vector<double> z;
  std::vector<double> lambda;
  double delta = 1e-2;
  std::size_t kappa = 0;
  double epsilon = 0.0;
  std::size_t max_outer = 0;
  std::size_t interval = 50;
  std::size_t outer = 0;   // completed sparsifying steps
  bool finished = false;   // loop guard tripped; z and lambda frozen

  std::size_t size() const { return z.size(); }
  SparsifierConfig config() const { return {delta, kappa, epsilon, max_outer, interval}; }

  bool operator==(const SparsifierState&) const = default;
};

/// z <- a, lambda <- 0. Throws InvalidBudget when kappa > n and
/// InvalidParameter when delta <= 0 or interval == 0.
SparsifierState init_state(std::span<const double> a, const SparsifierConfig& cfg);

/// delta * (a - z + lambda), the extra gradient on a from the penalty term.
std::vector<double> coupling_gradient(std::span<const double> a, const SparsifierState& state);

/// Indices of the k largest scores, ordered by descending score and ascending
/// index on ties.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

/// Keeps the kappa entries of v ranked highest by the criterion, zeroes the rest.
std::vector<double> project_top_k(std::span<const double> v, std::size_t kappa,
                                  const ProjectionCriterion& criterion);

/// z <- prox_h(a + lambda). Returns the new z.
const std::vector<double>& sparsify_step(std::span<const double> a, SparsifierState& state,
                                         const ProjectionCriterion& criterion = ProjectionCriterion::magnitude());

/// lambda <- lambda + a - z. Returns the new lambda.
const std::vector<double>& multiplier_update(std::span<const double> a, SparsifierState& state);

/// |a - z|^2
double residual(std::span<const double> a, const SparsifierState& state);

/// True once |a - z|^2 <= epsilon or outer_count > max_outer.
bool converged(const SparsifierState& state, std::span<const double> a, std::size_t outer_count);

/// (delta/2)|a - z + lambda|^2, optionally plus (delta/2)|lambda|^2.
double penalty(std::span<const double> a, const SparsifierState& state, bool include_dual_term = false);

/// Applies a cloud compaction (surviving original indices) to z and lambda.
void compact(SparsifierState& state, std::span<const std::size_t> kept);

}  // namespace splatspa
