#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "splatspa/cloud.hpp"
#include "splatspa/image.hpp"
#include "splatspa/loss.hpp"
#include "splatspa/optimizer.hpp"
#include "splatspa/renderer.hpp"
#include "splatspa/sparsifier.hpp"

namespace splatspa {

enum class TrainMode { Dense, GaussianSpa, OneShot };

/// How Gaussians are chosen for removal at a prune event.
enum class PruneCriterion {
  ZeroZ,             // keep the support of the sparse auxiliary variable
  OpacityMagnitude,  // keep the most opaque
  HitCount,          // keep the largest accumulated blend-weight mass
};

/// Ranking used by the sparsifying step inside the training loop.
enum class ProjectionScore {
  Magnitude,  // |a + lambda|
  HitCount,   // blend-weight mass of the current render
};

std::string to_string(TrainMode m);
std::string to_string(ProjectionScore p);
ProjectionScore parse_projection_score(const std::string& s);
std::string to_string(PruneCriterion c);
TrainMode parse_train_mode(const std::string& s);
PruneCriterion parse_prune_criterion(const std::string& s);

/// Iteration milestones and step sizes. Iterations are 1-based; "after t"
/// means after t optimizer steps.
struct TrainSchedule {
  std::size_t total_iters = 8000;
  std::size_t sparsify_start_iter = 3000;
  /// GaussianSpa prunes here at the latest, earlier if its loop terminates first.
  std::size_t prune_iter = 6000;
  /// Position rate is relative to the image diagonal in pixels.
  LearningRates lr{2e-3, 5e-3, 5e-3, 5e-2, 2.5e-3};
  std::uint64_t rng_seed = 0;
  std::size_t eval_every = 100;

  /// Sparsification is disabled when sparsify_start_iter == total_iters.
  bool sparsify_enabled() const { return sparsify_start_iter < total_iters; }
  void validate(TrainMode mode) const;

  bool operator==(const TrainSchedule&) const = default;
};

struct TrainerConfig {
  TrainMode mode = TrainMode::Dense;
  TrainSchedule schedule;
  LossConfig loss;
  Rgb background{0.0, 0.0, 0.0};
  unsigned threads = 0;
  int tile_size = 16;

  // GaussianSpa. max_outer == 0 selects the largest T whose T + 1 sparsifying
  // steps fit between sparsify_start_iter and prune_iter.
  SparsifierConfig sparsifier{1e-2, 0, 0.0, 0, 50};

  ProjectionScore projection = ProjectionScore::Magnitude;

  // One-shot baseline.
  PruneCriterion baseline_criterion = PruneCriterion::OpacityMagnitude;
  double keep_fraction = 0.25;

  void validate(std::size_t n) const;
  bool operator==(const TrainerConfig&) const = default;
};

inline constexpr int kHistogramBins = 32;

struct MetricRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  bool prune_marker = false;  // placeholder row flagging the prune event
};

struct ResidualRow {
  std::size_t iter = 0;
  double residual = 0.0;
  double lagrangian = 0.0;            // loss + (delta/2)|a - z + lambda|^2
  double lagrangian_with_dual = 0.0;  // ... + (delta/2)|lambda|^2
};

struct HistogramRow {
  std::size_t iter = 0;
  std::array<std::uint32_t, kHistogramBins> counts{};
};

struct TrainLog {
  std::vector<MetricRow> metrics;
  std::vector<ResidualRow> residuals;
  std::vector<HistogramRow> histograms;
  std::vector<double> train_loss;  // per iteration, loss of the pre-step render

  std::optional<double> first_residual;       // after the first sparsifying step
  std::optional<double> terminal_residual;    // when the loop guard tripped
  std::optional<std::size_t> terminated_at;   // outer steps completed at that point
  std::optional<double> pre_prune_psnr;
  std::optional<double> post_prune_psnr;
  std::optional<double> post_prune_loss;
  std::size_t opacities_below_001_at_prune = 0;
};

std::array<std::uint32_t, kHistogramBins> opacity_histogram(std::span<const double> opacities);

/// Random cloud over the target: uniform positions, colors sampled from the
/// target, isotropic scale sqrt(W*H/n)/2, opacity 0.1, random compositing order.
GaussianCloud init_cloud(const Image& target, std::size_t n, std::mt19937_64& rng);
GaussianCloud init_cloud(const Image& target, std::size_t n, std::uint64_t seed);

struct Objective {
  double loss = 0.0;
  double penalty = 0.0;  // (delta/2)|a - z + lambda|^2, zero without a sparsifier
  CloudGradient grad;    // of loss + penalty
};

/// Loss of one render against the target plus, when a sparsifier is given,
/// the coupling penalty on the activated opacities, with the gradient of the
/// sum with respect to every Gaussian parameter.
Objective training_objective(const GaussianCloud& cloud, const Image& target, const RenderSettings& settings,
                             const LossConfig& loss_cfg, const SparsifierState* sparsifier);

/// Everything needed to resume a run bit-exactly.
struct CheckpointModel {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  TrainerConfig config;
  std::size_t iteration = 0;
  bool pruned = false;
  GaussianCloud cloud;
  OptimizerState optimizer;
  std::optional<SparsifierState> sparsifier;
  std::string rng_state;

  bool operator==(const CheckpointModel& o) const;
};

/// Owns cloud, optimizer and sparsifier state for one training run and
/// advances it one iteration at a time.
class Trainer {
 public:
  Trainer(GaussianCloud cloud, Image target, TrainerConfig config);
  static Trainer resume(const CheckpointModel& model, Image target);

  void step();
  void run_until(std::size_t iter);
  void run() { run_until(config_.schedule.total_iters); }
  bool done() const { return iteration_ >= config_.schedule.total_iters; }

  std::size_t iteration() const { return iteration_; }
  bool pruned() const { return pruned_; }
  const GaussianCloud& cloud() const { return cloud_; }
  const OptimizerState& optimizer() const { return optimizer_; }
  const std::optional<SparsifierState>& sparsifier() const { return sparsifier_; }
  const TrainerConfig& config() const { return config_; }
  const TrainLog& log() const { return log_; }
  const Image& target() const { return target_; }
  const std::optional<Image>& pre_prune_render() const { return pre_prune_render_; }
  const std::optional<Image>& post_prune_render() const { return post_prune_render_; }

  RenderSettings render_settings() const;
  LearningRates effective_rates() const;
  /// max_outer actually in force (resolves the automatic default).
  std::size_t effective_max_outer() const;
  CheckpointModel checkpoint() const;

 private:
  Trainer() = default;

  bool sparsify_active(std::size_t t) const;
  void evaluate(std::size_t t);
  void log_histogram(std::size_t t);
  void outer_step(std::size_t t, double loss_value);
  void prune(std::size_t t);
  void check_finite(std::size_t t, const CloudGradient& grad, double loss_value) const;

  TrainerConfig config_;
  Image target_;
  GaussianCloud cloud_;
  OptimizerState optimizer_;
  std::optional<SparsifierState> sparsifier_;
  std::mt19937_64 rng_;
  std::size_t iteration_ = 0;
  bool pruned_ = false;
  TrainLog log_;
  std::optional<Image> pre_prune_render_;
  std::optional<Image> post_prune_render_;
};

struct TrainResult {
  GaussianCloud cloud;
  TrainLog log;
  std::optional<Image> pre_prune_render;
  std::optional<Image> post_prune_render;
};

TrainResult train_dense(GaussianCloud cloud, const Image& target, const TrainSchedule& schedule,
                        const LossConfig& loss_cfg = {});

/// Throws BudgetInfeasible when kappa >= alive count.
TrainResult train_gaussianspa(GaussianCloud cloud, const Image& target, const TrainSchedule& schedule,
                              const SparsifierConfig& sparsifier_cfg, const LossConfig& loss_cfg = {});

TrainResult oneshot_prune_baseline(GaussianCloud cloud, const Image& target, const TrainSchedule& schedule,
                                   PruneCriterion criterion, double keep_fraction,
                                   const LossConfig& loss_cfg = {});

/// Sum over views and pixels of each Gaussian's blend weight. Views only
/// supply the render size; the cloud is rendered over a black background.
std::vector<double> hit_count_scores(const GaussianCloud& cloud, std::span<const Image> views,
                                     unsigned threads = 0);

/// Number of Gaussians a one-shot prune keeps.
std::size_t keep_count(std::size_t alive, double keep_fraction);

}  // namespace splatspa
