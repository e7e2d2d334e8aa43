#include "splatspa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "splatspa/errors.hpp"

namespace splatspa {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Dense: return "dense";
    case TrainMode::GaussianSpa: return "gaussianspa";
    case TrainMode::OneShot: return "oneshot";
  }
  return "?";
}

std::string to_string(PruneCriterion c) {
  switch (c) {
    case PruneCriterion::ZeroZ: return "zero-z";
    case PruneCriterion::OpacityMagnitude: return "opacity";
    case PruneCriterion::HitCount: return "hit-count";
  }
  return "?";
}

std::string to_string(ProjectionScore p) {
  return p == ProjectionScore::Magnitude ? "magnitude" : "hit-count";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "dense") return TrainMode::Dense;
  if (s == "gaussianspa") return TrainMode::GaussianSpa;
  if (s == "oneshot") return TrainMode::OneShot;
  throw InvalidArgument("unknown train mode '" + s + "'");
}

PruneCriterion parse_prune_criterion(const std::string& s) {
  if (s == "zero-z") return PruneCriterion::ZeroZ;
  if (s == "opacity") return PruneCriterion::OpacityMagnitude;
  if (s == "hit-count") return PruneCriterion::HitCount;
  throw InvalidArgument("unknown prune criterion '" + s + "' (expected zero-z, opacity or hit-count)");
}

ProjectionScore parse_projection_score(const std::string& s) {
  if (s == "magnitude") return ProjectionScore::Magnitude;
  if (s == "hit-count") return ProjectionScore::HitCount;
  throw InvalidArgument("unknown projection score '" + s + "' (expected magnitude or hit-count)");
}

void TrainSchedule::validate(TrainMode mode) const {
  if (eval_every == 0) throw InvalidArgument("schedule: eval_every must be >= 1");
  for (int gi = 0; gi < kParamGroups; ++gi) {
    const double r = lr[static_cast<ParamGroup>(gi)];
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw InvalidArgument("schedule: learning rate for " + std::string(group_name(static_cast<ParamGroup>(gi))) +
                            " must be finite and >= 0");
    }
  }
  if (mode == TrainMode::GaussianSpa) {
    if (sparsify_start_iter > total_iters) {
      throw InvalidArgument("schedule: sparsify_start_iter (" + std::to_string(sparsify_start_iter) +
                            ") exceeds total_iters (" + std::to_string(total_iters) + ")");
    }
    if (sparsify_enabled() && !(sparsify_start_iter < prune_iter && prune_iter <= total_iters)) {
      throw InvalidArgument("schedule: need sparsify_start_iter < prune_iter <= total_iters (got " +
                            std::to_string(sparsify_start_iter) + ", " + std::to_string(prune_iter) + ", " +
                            std::to_string(total_iters) + ")");
    }
  }
  if (mode == TrainMode::OneShot && !(prune_iter >= 1 && prune_iter <= total_iters)) {
    throw InvalidArgument("schedule: prune_iter (" + std::to_string(prune_iter) + ") must lie in [1, total_iters = " +
                          std::to_string(total_iters) + "]");
  }
}

void TrainerConfig::validate(std::size_t n) const {
  schedule.validate(mode);
  loss.validate();
  if (mode == TrainMode::GaussianSpa) {
    if (sparsifier.kappa >= n) {
      throw BudgetInfeasible("kappa (" + std::to_string(sparsifier.kappa) + ") must be below the Gaussian count N (" +
                             std::to_string(n) + ")");
    }
    if (!(sparsifier.delta > 0.0)) throw InvalidParameter("delta must be positive");
    if (sparsifier.interval == 0) throw InvalidParameter("interval must be >= 1");
    if (!(sparsifier.epsilon >= 0.0)) throw InvalidParameter("epsilon must be >= 0");
    if (schedule.sparsify_enabled() && sparsifier.max_outer > 0) {
      const std::size_t span = schedule.prune_iter - schedule.sparsify_start_iter;
      if ((sparsifier.max_outer + 1) * sparsifier.interval > span) {
        throw InvalidArgument("max_outer (" + std::to_string(sparsifier.max_outer) + ") + 1 sparsifying steps at interval " +
                              std::to_string(sparsifier.interval) + " do not fit between sparsify_start (" +
                              std::to_string(schedule.sparsify_start_iter) + ") and prune_iter (" +
                              std::to_string(schedule.prune_iter) + ")");
      }
    }
    if (schedule.sparsify_enabled() && sparsifier.interval > schedule.prune_iter - schedule.sparsify_start_iter) {
      throw InvalidArgument("interval (" + std::to_string(sparsifier.interval) +
                            ") is longer than the sparsifying phase");
    }
  }
  if (mode == TrainMode::OneShot) {
    if (!(keep_fraction > 0.0 && keep_fraction < 1.0)) {
      throw InvalidArgument("keep_fraction must lie in (0, 1)");
    }
    if (baseline_criterion == PruneCriterion::ZeroZ) {
      throw InvalidArgument("one-shot baseline needs the opacity or hit-count criterion");
    }
  }
  if (tile_size < 1 || (tile_size & (tile_size - 1)) != 0) throw InvalidArgument("tile_size must be a power of two");
}

std::array<std::uint32_t, kHistogramBins> opacity_histogram(std::span<const double> opacities) {
  std::array<std::uint32_t, kHistogramBins> counts{};
  for (double a : opacities) {
    int bin = static_cast<int>(a * kHistogramBins);
    counts[std::clamp(bin, 0, kHistogramBins - 1)]++;
  }
  return counts;
}

GaussianCloud init_cloud(const Image& target, std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw InvalidArgument("init_cloud: n must be >= 1");
  if (target.width < 1 || target.height < 1) throw InvalidArgument("init_cloud: empty target image");
  std::uniform_real_distribution<double> ux(0.0, target.width);
  std::uniform_real_distribution<double> uy(0.0, target.height);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double scale = std::sqrt(static_cast<double>(target.width) * target.height / static_cast<double>(n)) / 2.0;
  const double log_s = std::log(scale);
  const double opacity_logit = logit(0.1);

  GaussianCloud cloud;
  for (std::size_t i = 0; i < n; ++i) {
    Gaussian2D g;
    g.mu = {ux(rng), uy(rng)};
    g.theta = angle(rng);
    g.log_scale = {log_s, log_s};
    g.opacity_logit = opacity_logit;
    const int px = std::clamp(static_cast<int>(g.mu.x), 0, target.width - 1);
    const int py = std::clamp(static_cast<int>(g.mu.y), 0, target.height - 1);
    g.color = {target.at(px, py, 0), target.at(px, py, 1), target.at(px, py, 2)};
    g.order_key = unit(rng);
    cloud.push_back(g);
  }
  return cloud;
}

GaussianCloud init_cloud(const Image& target, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_cloud(target, n, rng);
}

std::size_t keep_count(std::size_t alive, double keep_fraction) {
  const auto k = static_cast<long long>(std::llround(keep_fraction * static_cast<double>(alive)));
  return static_cast<std::size_t>(std::clamp<long long>(k, 1, static_cast<long long>(alive)));
}

std::vector<double> hit_count_scores(const GaussianCloud& cloud, std::span<const Image> views, unsigned threads) {
  std::vector<double> scores(cloud.size(), 0.0);
  for (const Image& view : views) {
    RenderSettings rs;
    rs.width = view.width;
    rs.height = view.height;
    rs.threads = threads;
    const auto mass = blend_weight_mass(cloud, rs);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += mass[i];
  }
  return scores;
}

bool CheckpointModel::operator==(const CheckpointModel& o) const {
  return version == o.version && config == o.config && iteration == o.iteration && pruned == o.pruned &&
         cloud == o.cloud && optimizer == o.optimizer && sparsifier == o.sparsifier && rng_state == o.rng_state;
}

Trainer::Trainer(GaussianCloud cloud, Image target, TrainerConfig config)
    : config_(std::move(config)), target_(std::move(target)), cloud_(std::move(cloud)) {
  cloud_.validate();
  config_.validate(cloud_.alive_count());
  render_settings().validate();
  optimizer_ = OptimizerState::for_cloud(cloud_);
  rng_.seed(config_.schedule.rng_seed);
  evaluate(0);
  log_histogram(0);
}

Trainer Trainer::resume(const CheckpointModel& model, Image target) {
  Trainer t;
  t.config_ = model.config;
  t.target_ = std::move(target);
  t.cloud_ = model.cloud;
  t.cloud_.validate();
  t.render_settings().validate();
  t.optimizer_ = model.optimizer;
  t.sparsifier_ = model.sparsifier;
  t.iteration_ = model.iteration;
  t.pruned_ = model.pruned;
  std::istringstream in(model.rng_state);
  in >> t.rng_;
  if (!in) throw CorruptCheckpoint("checkpoint: unreadable rng state");
  return t;
}

RenderSettings Trainer::render_settings() const {
  RenderSettings rs;
  rs.width = target_.width;
  rs.height = target_.height;
  rs.background = config_.background;
  rs.threads = config_.threads;
  rs.tile_size = config_.tile_size;
  return rs;
}

LearningRates Trainer::effective_rates() const {
  LearningRates lr = config_.schedule.lr;
  lr.position *= std::hypot(static_cast<double>(target_.width), static_cast<double>(target_.height));
  return lr;
}

std::size_t Trainer::effective_max_outer() const {
  if (config_.sparsifier.max_outer > 0) return config_.sparsifier.max_outer;
  const auto& s = config_.schedule;
  if (!s.sparsify_enabled()) return 0;
  const std::size_t steps = (s.prune_iter - s.sparsify_start_iter) / config_.sparsifier.interval;
  return steps > 0 ? steps - 1 : 0;
}

CheckpointModel Trainer::checkpoint() const {
  CheckpointModel m;
  m.config = config_;
  m.iteration = iteration_;
  m.pruned = pruned_;
  m.cloud = cloud_;
  m.optimizer = optimizer_;
  m.sparsifier = sparsifier_;
  std::ostringstream out;
  out << rng_;
  m.rng_state = out.str();
  return m;
}

bool Trainer::sparsify_active(std::size_t t) const {
  const auto& s = config_.schedule;
  return config_.mode == TrainMode::GaussianSpa && s.sparsify_enabled() && !pruned_ && t > s.sparsify_start_iter &&
         t <= s.prune_iter;
}

void Trainer::run_until(std::size_t iter) {
  iter = std::min(iter, config_.schedule.total_iters);
  while (iteration_ < iter) step();
}

Objective training_objective(const GaussianCloud& cloud, const Image& target, const RenderSettings& settings,
                             const LossConfig& loss_cfg, const SparsifierState* sparsifier) {
  const RenderPass pass(cloud, settings);
  const LossResult l = loss(pass.image(), target, loss_cfg);
  Objective obj{l.value, 0.0, pass.backward(l.grad)};
  if (sparsifier) {
    // dL/da gains delta (a - z + lambda); chain it into logit space.
    const std::vector<double> a = cloud.opacities();
    const std::vector<double> coupling = coupling_gradient(a, *sparsifier);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (cloud.alive[i]) obj.grad.opacity_logit[i] += coupling[i] * a[i] * (1.0 - a[i]);
    }
    obj.penalty = penalty(a, *sparsifier);
  }
  return obj;
}

void Trainer::check_finite(std::size_t t, const CloudGradient& grad, double loss_value) const {
  auto bad_column = [&]() -> std::string {
    // A bad parameter usually poisons every gradient, so report it first.
    for (int gi = 0; gi < kParamGroups; ++gi) {
      const auto g = static_cast<ParamGroup>(gi);
      for (double v : param_column(cloud_, g)) {
        if (!std::isfinite(v)) return std::string(group_name(g));
      }
    }
    for (int gi = 0; gi < kParamGroups; ++gi) {
      const auto g = static_cast<ParamGroup>(gi);
      for (double v : grad_column(grad, g)) {
        if (!std::isfinite(v)) return "d/d " + std::string(group_name(g));
      }
    }
    return "none identified";
  };
  bool finite = std::isfinite(loss_value);
  for (int gi = 0; gi < kParamGroups && finite; ++gi) {
    for (double v : grad_column(grad, static_cast<ParamGroup>(gi))) {
      if (!std::isfinite(v)) {
        finite = false;
        break;
      }
    }
  }
  if (!finite) {
    throw NonFiniteError("training diverged at iteration " + std::to_string(t) + ": non-finite loss or gradient (column: " +
                         bad_column() + ")");
  }
}

void Trainer::step() {
  if (done()) return;
  const std::size_t t = iteration_ + 1;
  const RenderSettings rs = render_settings();

  if (sparsify_active(t) && !sparsifier_) {
    if (config_.sparsifier.kappa >= cloud_.alive_count()) {
      throw BudgetInfeasible("kappa (" + std::to_string(config_.sparsifier.kappa) +
                             ") must be below the alive Gaussian count (" + std::to_string(cloud_.alive_count()) + ")");
    }
    SparsifierConfig cfg = config_.sparsifier;
    cfg.max_outer = effective_max_outer();
    sparsifier_ = init_state(cloud_.opacities(), cfg);
  }

  const bool coupled = sparsify_active(t);
  const Objective obj = training_objective(cloud_, target_, rs, config_.loss, coupled ? &*sparsifier_ : nullptr);
  log_.train_loss.push_back(obj.loss);
  check_finite(t, obj.grad, obj.loss);
  optimizer_.apply(cloud_, obj.grad, effective_rates());
  iteration_ = t;

  const auto& s = config_.schedule;
  if (sparsify_active(t) && !sparsifier_->finished && (t - s.sparsify_start_iter) % sparsifier_->interval == 0) {
    outer_step(t, obj.loss);
  }

  // prune_iter is the latest prune; a loop that terminates earlier prunes at once
  const bool loop_done = config_.mode == TrainMode::GaussianSpa && sparsifier_ && sparsifier_->finished;
  const bool prunes = config_.mode != TrainMode::Dense && !pruned_ && (t == s.prune_iter || loop_done) &&
                      (config_.mode == TrainMode::OneShot || s.sparsify_enabled());
  if (prunes) {
    prune(t);
  } else {
    const bool after_marker = !log_.metrics.empty() && log_.metrics.back().prune_marker;
    const bool around_prune = config_.mode != TrainMode::Dense && (t + 1 == s.prune_iter || after_marker);
    if (t % s.eval_every == 0 || t == s.total_iters || around_prune) evaluate(t);
    if (!pruned_ && t % s.eval_every == 0) log_histogram(t);
  }
}

void Trainer::outer_step(std::size_t t, double loss_value) {
  SparsifierState& st = *sparsifier_;
  const std::vector<double> a = cloud_.opacities();
  if (config_.projection == ProjectionScore::HitCount) {
    sparsify_step(a, st, ProjectionCriterion::external(blend_weight_mass(cloud_, render_settings())));
  } else {
    sparsify_step(a, st, ProjectionCriterion::magnitude());
  }
  multiplier_update(a, st);
  ++st.outer;

  ResidualRow row;
  row.iter = t;
  row.residual = residual(a, st);
  row.lagrangian = loss_value + penalty(a, st, false);
  row.lagrangian_with_dual = loss_value + penalty(a, st, true);
  log_.residuals.push_back(row);
  if (!log_.first_residual) log_.first_residual = row.residual;

  if (converged(st, a, st.outer)) {
    st.finished = true;
    log_.terminal_residual = row.residual;
    log_.terminated_at = st.outer;
  }
}

void Trainer::prune(std::size_t t) {
  const RenderSettings rs = render_settings();
  evaluate(t);
  pre_prune_render_ = render(cloud_, rs);
  log_.pre_prune_psnr = log_.metrics.back().psnr;
  log_histogram(t);

  const std::vector<double> a = cloud_.opacities();
  log_.opacities_below_001_at_prune = static_cast<std::size_t>(
      std::count_if(a.begin(), a.end(), [](double v) { return v < 0.01; }));

  std::vector<std::size_t> kept;
  if (config_.mode == TrainMode::GaussianSpa) {
    // keep the support of z
    const SparsifierState& st = *sparsifier_;
    std::vector<double> magnitude(st.z.size());
    for (std::size_t i = 0; i < magnitude.size(); ++i) magnitude[i] = std::abs(st.z[i]);
    kept = top_k_indices(magnitude, st.kappa);
  } else {
    std::vector<double> score = config_.baseline_criterion == PruneCriterion::HitCount ? blend_weight_mass(cloud_, rs) : a;
    for (std::size_t i = 0; i < score.size(); ++i) {
      if (!cloud_.alive[i]) score[i] = -1.0;
    }
    kept = top_k_indices(score, keep_count(cloud_.alive_count(), config_.keep_fraction));
  }
  std::sort(kept.begin(), kept.end());

  std::vector<std::uint8_t> alive(cloud_.size(), 0);
  for (std::size_t i : kept) alive[i] = 1;
  cloud_.alive = std::move(alive);
  const std::vector<std::size_t> survivors = cloud_.compact();
  optimizer_.compact(survivors);
  if (sparsifier_) splatspa::compact(*sparsifier_, survivors);
  pruned_ = true;

  MetricRow marker;
  marker.iter = t;
  marker.prune_marker = true;
  log_.metrics.push_back(marker);

  post_prune_render_ = render(cloud_, rs);
  log_.post_prune_psnr = psnr(*post_prune_render_, target_);
  log_.post_prune_loss = loss(*post_prune_render_, target_, config_.loss).value;
}

void Trainer::evaluate(std::size_t t) {
  const Image pred = render(cloud_, render_settings());
  MetricRow row;
  row.iter = t;
  row.loss = loss(pred, target_, config_.loss).value;
  row.psnr = psnr(pred, target_);
  row.ssim = ssim(pred, target_, config_.loss);
  log_.metrics.push_back(row);
}

void Trainer::log_histogram(std::size_t t) {
  std::vector<double> a;
  a.reserve(cloud_.size());
  for (std::size_t i = 0; i < cloud_.size(); ++i) {
    if (cloud_.alive[i]) a.push_back(cloud_.opacity(i));
  }
  log_.histograms.push_back({t, opacity_histogram(a)});
}

namespace {

TrainResult finish(Trainer& trainer) {
  trainer.run();
  return {trainer.cloud(), trainer.log(), trainer.pre_prune_render(), trainer.post_prune_render()};
}

}  // namespace

TrainResult train_dense(GaussianCloud cloud, const Image& target, const TrainSchedule& schedule,
                        const LossConfig& loss_cfg) {
  TrainerConfig cfg;
  cfg.mode = TrainMode::Dense;
  cfg.schedule = schedule;
  cfg.loss = loss_cfg;
  Trainer trainer(std::move(cloud), target, cfg);
  return finish(trainer);
}

TrainResult train_gaussianspa(GaussianCloud cloud, const Image& target, const TrainSchedule& schedule,
                              const SparsifierConfig& sparsifier_cfg, const LossConfig& loss_cfg) {
  TrainerConfig cfg;
  cfg.mode = TrainMode::GaussianSpa;
  cfg.schedule = schedule;
  cfg.loss = loss_cfg;
  cfg.sparsifier = sparsifier_cfg;
  Trainer trainer(std::move(cloud), target, cfg);
  return finish(trainer);
}

TrainResult oneshot_prune_baseline(GaussianCloud cloud, const Image& target, const TrainSchedule& schedule,
                                   PruneCriterion criterion, double keep_fraction, const LossConfig& loss_cfg) {
  TrainerConfig cfg;
  cfg.mode = TrainMode::OneShot;
  cfg.schedule = schedule;
  cfg.loss = loss_cfg;
  cfg.baseline_criterion = criterion;
  cfg.keep_fraction = keep_fraction;
  Trainer trainer(std::move(cloud), target, cfg);
  return finish(trainer);
}

}  // namespace splatspa
