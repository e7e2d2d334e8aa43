#include "splatspa/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "splatspa/checkpoint.hpp"
#include "splatspa/errors.hpp"
#include "splatspa/image_io.hpp"
#include "splatspa/loss.hpp"
#include "splatspa/ply.hpp"

namespace splatspa::cli {

namespace fs = std::filesystem;

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string metrics_csv(const TrainLog& log) {
  std::string s = "iter,loss,psnr,ssim\n";
  for (const auto& r : log.metrics) {
    if (r.prune_marker) {
      s += std::to_string(r.iter) + ",,,\n";
    } else {
      s += std::to_string(r.iter) + "," + fmt6(r.loss) + "," + fmt6(r.psnr) + "," + fmt6(r.ssim) + "\n";
    }
  }
  return s;
}

std::string residual_csv(const TrainLog& log) {
  std::string s = "iter,residual,lagrangian,lagrangian_with_dual\n";
  for (const auto& r : log.residuals) {
    s += std::to_string(r.iter) + "," + fmt6(r.residual) + "," + fmt6(r.lagrangian) + "," +
         fmt6(r.lagrangian_with_dual) + "\n";
  }
  return s;
}

std::string histogram_csv(const TrainLog& log) {
  std::string s = "iter";
  for (int b = 0; b < kHistogramBins; ++b) {
    char name[16];
    std::snprintf(name, sizeof name, ",bin_%02d", b);
    s += name;
  }
  s += "\n";
  for (const auto& r : log.histograms) {
    s += std::to_string(r.iter);
    for (auto c : r.counts) s += "," + std::to_string(c);
    s += "\n";
  }
  return s;
}

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

int fail(Streams io, int code, const std::string& msg) {
  io.err << "error: " << msg << "\n";
  return code;
}

int train_command(const RunConfig& cfg, TrainMode mode, Streams io) {
  if (cfg.target.empty()) return fail(io, kExitInvalid, "no target image given (--target)");
  if (!fs::exists(cfg.target)) return fail(io, kExitInvalid, "target image '" + cfg.target + "' not found");
  if (cfg.resume && !fs::exists(*cfg.resume)) {
    return fail(io, kExitInvalid, "checkpoint '" + *cfg.resume + "' not found");
  }
  cfg.validate(mode);
  const Image target = read_image(cfg.target);

  std::optional<Trainer> trainer;
  if (cfg.resume) {
    const CheckpointModel model = load_checkpoint(*cfg.resume);
    if (model.config.mode != mode) {
      return fail(io, kExitInvalid, "checkpoint was written by mode '" + to_string(model.config.mode) + "'");
    }
    trainer.emplace(Trainer::resume(model, target));
  } else {
    trainer.emplace(init_cloud(target, cfg.n, cfg.seed), target, cfg.trainer_config(mode));
  }
  trainer->run_until(cfg.stop_at.value_or(trainer->config().schedule.total_iters));

  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  save_checkpoint(trainer->checkpoint(), dir / "checkpoint.bin");
  write_image(render(trainer->cloud(), trainer->render_settings()), dir / "render.png");
  write_text(dir / "metrics.csv", metrics_csv(trainer->log()));
  if (mode == TrainMode::GaussianSpa) {
    write_text(dir / "residual.csv", residual_csv(trainer->log()));
    write_text(dir / "opacity_hist.csv", histogram_csv(trainer->log()));
  }
  if (trainer->pre_prune_render()) write_image(*trainer->pre_prune_render(), dir / "pre_prune.png");
  if (trainer->post_prune_render()) write_image(*trainer->post_prune_render(), dir / "post_prune.png");

  const auto& log = trainer->log();
  io.out << "iterations=" << trainer->iteration() << " gaussians=" << trainer->cloud().alive_count();
  if (!log.metrics.empty()) io.out << " psnr=" << fmt4(log.metrics.back().psnr);
  io.out << "\n";
  return kExitOk;
}

std::vector<double> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read score file '" + path + "'");
  std::vector<double> scores;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    try {
      scores.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw InvalidArgument("score file '" + path + "': bad value '" + line + "'");
    }
  }
  return scores;
}

int prune_ply_command(const std::string& in, const std::string& out, std::size_t kappa,
                      const std::string& criterion, const std::string& scores_path, Streams io) {
  if (!fs::exists(in)) return fail(io, kExitInvalid, "input PLY '" + in + "' not found");
  const SplatPlyRecord record = read_splat_ply(in);
  ProjectionCriterion crit = ProjectionCriterion::magnitude();
  if (criterion == "scores") {
    if (scores_path.empty()) return fail(io, kExitInvalid, "--criterion scores needs --scores <file>");
    crit = ProjectionCriterion::external(read_scores(scores_path));
  } else if (criterion != "opacity") {
    return fail(io, kExitInvalid, "unknown criterion '" + criterion + "' (expected opacity or scores)");
  }
  const SplatPlyRecord simplified = simplify_splat_ply(record, kappa, crit);
  write_splat_ply(simplified, out);

  double total_mass = 0.0, kept_mass = 0.0;
  for (float l : record.column("opacity")) total_mass += sigmoid(l);
  for (float l : simplified.column("opacity")) kept_mass += sigmoid(l);
  const double fraction = total_mass > 0.0 ? kept_mass / total_mass : 0.0;
  io.out << "retained=" << simplified.vertex_count << " total=" << record.vertex_count
         << " opacity_mass_fraction=" << fmt6(fraction) << "\n";
  return kExitOk;
}

int eval_command(const std::string& pred_path, const std::string& gt_path, Streams io) {
  for (const auto& p : {pred_path, gt_path}) {
    if (!fs::exists(p)) return fail(io, kExitInvalid, "image '" + p + "' not found");
  }
  const Image pred = read_image(pred_path);
  const Image gt = read_image(gt_path);
  if (!pred.same_shape(gt)) {
    return fail(io, kExitInvalid, "image sizes differ: " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                                      " vs " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
  }
  io.out << "psnr=" << fmt4(psnr(pred, gt)) << " ssim=" << fmt4(ssim(pred, gt)) << "\n";
  return kExitOk;
}

void add_training_options(CLI::App* sub, RunConfig& cfg, TrainMode mode) {
  sub->add_option("--target", cfg.target, "Target image (PNG or PPM)");
  sub->add_option("--out", cfg.out, "Output directory");
  sub->add_option("--n", cfg.n, "Number of Gaussians");
  sub->add_option("--iters", cfg.iters, "Total training iterations");
  sub->add_option("--seed", cfg.seed, "Random seed");
  sub->add_option("--eval-every", cfg.eval_every, "Iterations between metric rows");
  sub->add_option("--rho", cfg.rho, "D-SSIM weight in the loss");
  sub->add_option("--lr-position", cfg.lr_position, "Position learning rate, relative to the image diagonal");
  sub->add_option("--lr-rotation", cfg.lr_rotation);
  sub->add_option("--lr-scale", cfg.lr_scale);
  sub->add_option("--lr-opacity", cfg.lr_opacity);
  sub->add_option("--lr-color", cfg.lr_color);
  sub->add_option("--resume", cfg.resume, "Continue from a checkpoint");
  sub->add_option("--stop-at", cfg.stop_at, "Stop (and checkpoint) after this iteration");
  if (mode == TrainMode::GaussianSpa) {
    sub->add_option("--kappa", cfg.kappa, "Target Gaussian budget");
    sub->add_option("--delta", cfg.delta, "Penalty weight");
    sub->add_option("--epsilon", cfg.epsilon, "Feasibility tolerance on |a - z|^2 (default 1e-4 * kappa)");
    sub->add_option("--max-outer", cfg.max_outer, "Cap T on sparsifying steps (0: fit the phase)");
    sub->add_option("--interval", cfg.interval, "Iterations between sparsifying steps");
    sub->add_option("--projection", cfg.projection, "Sparsifying rank: magnitude or hit-count");
  }
  if (mode != TrainMode::Dense) {
    sub->add_option("--sparsify-start", cfg.sparsify_start, "Iteration where sparsification begins");
    sub->add_option("--prune-iter", cfg.prune_iter, "Iteration of the prune event");
  }
  if (mode == TrainMode::OneShot) {
    sub->add_option("--criterion", cfg.criterion, "opacity or hit-count");
    sub->add_option("--keep-fraction", cfg.keep_fraction, "Fraction of Gaussians kept at the prune event");
  }
}

// Splices `--key value` pairs from a --config file in front of the explicit flags.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> injected;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      continue;
    }
    for (const auto& [key, value] : read_config_file(path)) {
      injected.push_back("--" + key);
      injected.push_back(value);
    }
  }
  if (!injected.empty() && !out.empty()) out.insert(out.begin() + 1, injected.begin(), injected.end());
  return out;
}

}  // namespace

TrainerConfig RunConfig::trainer_config(TrainMode mode) const {
  TrainerConfig c;
  c.mode = mode;
  c.schedule.total_iters = iters;
  c.schedule.sparsify_start_iter = sparsify_start;
  c.schedule.prune_iter = prune_iter;
  c.schedule.lr = {lr_position, lr_rotation, lr_scale, lr_opacity, lr_color};
  c.schedule.rng_seed = seed;
  c.schedule.eval_every = eval_every;
  c.loss.rho = rho;
  c.sparsifier.delta = delta;
  c.sparsifier.kappa = kappa;
  c.sparsifier.epsilon = epsilon.value_or(1e-4 * static_cast<double>(kappa));
  c.sparsifier.max_outer = max_outer;
  c.sparsifier.interval = interval;
  c.projection = parse_projection_score(projection);
  c.baseline_criterion = mode == TrainMode::OneShot ? parse_prune_criterion(criterion) : PruneCriterion::OpacityMagnitude;
  c.keep_fraction = keep_fraction;
  return c;
}

void RunConfig::validate(TrainMode mode) const {
  if (n < 1) throw InvalidArgument("n must be >= 1");
  if (mode == TrainMode::GaussianSpa) {
    if (kappa >= n) {
      throw BudgetInfeasible("kappa (" + std::to_string(kappa) + ") must be below N (" + std::to_string(n) + ")");
    }
    if (kappa == 0) throw InvalidBudget("kappa must be >= 1");
    if (prune_iter <= sparsify_start) {
      throw InvalidArgument("prune_iter (" + std::to_string(prune_iter) + ") must be greater than sparsify_start (" +
                            std::to_string(sparsify_start) + ")");
    }
    if (prune_iter > iters) {
      throw InvalidArgument("prune_iter (" + std::to_string(prune_iter) + ") must not exceed iters (" +
                            std::to_string(iters) + ")");
    }
  }
  if (mode == TrainMode::OneShot) {
    if (!(keep_fraction > 0.0 && keep_fraction < 1.0)) {
      throw InvalidArgument("keep_fraction (" + fmt6(keep_fraction) + ") must lie in (0, 1)");
    }
    if (prune_iter < 1 || prune_iter > iters) {
      throw InvalidArgument("prune_iter (" + std::to_string(prune_iter) + ") must lie in [1, iters = " +
                            std::to_string(iters) + "]");
    }
  }
  trainer_config(mode).validate(n);
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config '" + path + "' line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    for (char& ch : key) {
      if (ch == '_') ch = '-';
    }
    kv[key] = value;
  }
  return kv;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Streams io{out, err};
  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const InputError& e) {
    return fail(io, kExitInvalid, e.what());
  }

  CLI::App app{"Sparsity-constrained 2D Gaussian splatting"};
  app.name("splatspa");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  RunConfig cfg;
  auto* fit = app.add_subcommand("fit", "Dense fit of a target image");
  add_training_options(fit, cfg, TrainMode::Dense);
  auto* sparsify = app.add_subcommand("sparsify", "Optimizing-sparsifying fit, prune to kappa, light tuning");
  add_training_options(sparsify, cfg, TrainMode::GaussianSpa);
  auto* baseline = app.add_subcommand("baseline", "Dense fit with a one-shot prune event");
  add_training_options(baseline, cfg, TrainMode::OneShot);

  std::string ply_in, ply_out, ply_criterion = "opacity", scores_path;
  std::size_t ply_kappa = 0;
  auto* prune_ply = app.add_subcommand("prune-ply", "Keep the top-kappa vertices of a 3DGS PLY");
  prune_ply->add_option("input", ply_in, "Input PLY")->required();
  prune_ply->add_option("output", ply_out, "Output PLY")->required();
  prune_ply->add_option("--kappa", ply_kappa, "Vertices to keep")->required();
  prune_ply->add_option("--criterion", ply_criterion, "opacity or scores");
  prune_ply->add_option("--scores", scores_path, "One score per line, used with --criterion scores");

  std::string eval_pred, eval_gt;
  auto* eval = app.add_subcommand("eval", "PSNR and SSIM of an image against ground truth");
  eval->add_option("render", eval_pred, "Rendered image")->required();
  eval->add_option("gt", eval_gt, "Ground-truth image")->required();

  std::vector<std::string> argv_store = {"splatspa"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInvalid;
  }

  try {
    if (fit->parsed()) return train_command(cfg, TrainMode::Dense, io);
    if (sparsify->parsed()) return train_command(cfg, TrainMode::GaussianSpa, io);
    if (baseline->parsed()) return train_command(cfg, TrainMode::OneShot, io);
    if (prune_ply->parsed()) return prune_ply_command(ply_in, ply_out, ply_kappa, ply_criterion, scores_path, io);
    if (eval->parsed()) return eval_command(eval_pred, eval_gt, io);
  } catch (const InputError& e) {
    return fail(io, kExitInvalid, e.what());
  } catch (const VersionMismatch& e) {
    return fail(io, kExitInvalid, e.what());
  } catch (const CorruptCheckpoint& e) {
    return fail(io, kExitInvalid, e.what());
  } catch (const std::exception& e) {
    return fail(io, kExitRuntime, e.what());
  }
  return kExitInvalid;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace splatspa::cli
