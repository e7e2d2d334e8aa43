#include "splatspa/renderer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "splatspa/errors.hpp"

namespace splatspa {

namespace {

struct Splat {
  std::size_t index;  // position in the cloud
  double mx, my;
  Sym2 prec;
  double opacity;
  double r, g, b;
  int x0, x1, y0, y1;  // inclusive pixel bounds
};

struct Plan {
  std::vector<Splat> splats;                      // in compositing order
  std::vector<std::vector<std::uint32_t>> tiles;  // splat positions per tile
  int tiles_x = 0;
  int tiles_y = 0;
};

Plan build_plan(const GaussianCloud& cloud, const RenderSettings& s) {
  cloud.validate();
  Plan plan;
  std::vector<std::size_t> order;
  order.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.alive[i]) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cloud.order_key[a] < cloud.order_key[b];
  });

  plan.tiles_x = (s.width + s.tile_size - 1) / s.tile_size;
  plan.tiles_y = (s.height + s.tile_size - 1) / s.tile_size;
  plan.tiles.resize(static_cast<std::size_t>(plan.tiles_x) * plan.tiles_y);

  for (std::size_t i : order) {
    Splat sp;
    sp.index = i;
    sp.mx = cloud.mu[2 * i];
    sp.my = cloud.mu[2 * i + 1];
    const LogScale ls{cloud.log_scale[2 * i], cloud.log_scale[2 * i + 1]};
    sp.prec = build_precision(cloud.theta[i], ls);
    sp.opacity = cloud.opacity(i);
    sp.r = cloud.color[3 * i];
    sp.g = cloud.color[3 * i + 1];
    sp.b = cloud.color[3 * i + 2];
    if (!std::isfinite(sp.mx) || !std::isfinite(sp.my)) continue;

    if (std::isinf(s.cutoff_sq)) {
      sp.x0 = 0;
      sp.y0 = 0;
      sp.x1 = s.width - 1;
      sp.y1 = s.height - 1;
    } else {
      // Axis-aligned bounds of the ellipse d^2 <= cutoff, in pixel-center units.
      const Sym2 cov = build_covariance(cloud.theta[i], ls);
      const double rx = std::sqrt(s.cutoff_sq * cov.xx);
      const double ry = std::sqrt(s.cutoff_sq * cov.yy);
      const double fx0 = std::ceil(sp.mx - rx - 0.5);
      const double fx1 = std::floor(sp.mx + rx - 0.5);
      const double fy0 = std::ceil(sp.my - ry - 0.5);
      const double fy1 = std::floor(sp.my + ry - 0.5);
      if (fx1 < 0.0 || fy1 < 0.0 || fx0 > s.width - 1 || fy0 > s.height - 1) continue;
      sp.x0 = static_cast<int>(std::max(fx0, 0.0));
      sp.y0 = static_cast<int>(std::max(fy0, 0.0));
      sp.x1 = static_cast<int>(std::min(fx1, static_cast<double>(s.width - 1)));
      sp.y1 = static_cast<int>(std::min(fy1, static_cast<double>(s.height - 1)));
      if (sp.x0 > sp.x1 || sp.y0 > sp.y1) continue;
    }

    const auto pos = static_cast<std::uint32_t>(plan.splats.size());
    plan.splats.push_back(sp);
    for (int ty = sp.y0 / s.tile_size; ty <= sp.y1 / s.tile_size; ++ty) {
      for (int tx = sp.x0 / s.tile_size; tx <= sp.x1 / s.tile_size; ++tx) {
        plan.tiles[static_cast<std::size_t>(ty) * plan.tiles_x + tx].push_back(pos);
      }
    }
  }
  return plan;
}

// Runs fn(tile) for every tile. Tiles are independent; callers merge any
// per-tile results in tile order so the outcome does not depend on threads.
template <typename Fn>
void for_each_tile(std::size_t num_tiles, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(num_tiles)));
  if (threads <= 1) {
    for (std::size_t t = 0; t < num_tiles; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < num_tiles; t = next++) fn(t);
    });
  }
}

struct TileRect {
  int x0, y0, x1, y1;  // half-open
  int width() const { return x1 - x0; }
};

TileRect tile_rect(const Plan& plan, const RenderSettings& s, std::size_t tile) {
  const int tx = static_cast<int>(tile % plan.tiles_x);
  const int ty = static_cast<int>(tile / plan.tiles_x);
  return {tx * s.tile_size, ty * s.tile_size, std::min((tx + 1) * s.tile_size, s.width),
          std::min((ty + 1) * s.tile_size, s.height)};
}

// One splat touching one pixel, in compositing order.
struct Hit {
  std::uint32_t local;  // index into the tile's splat list
  std::uint32_t pixel;  // index within the tile
  double density;
  double transmittance;  // before this splat
};

struct TileResult {
  std::vector<Hit> hits;
  std::vector<double> mass;  // blend weight per local splat
};

enum class Record { None, Hits, Mass };

// Composites a tile splat by splat. Each pixel still sees the splats in
// compositing order, so this equals a per-pixel front-to-back loop.
template <Record kRecord>
void composite_tile(const Plan& plan, const RenderSettings& s, std::size_t tile, Image* img, TileResult* out) {
  const TileRect rect = tile_rect(plan, s, tile);
  const auto& list = plan.tiles[tile];
  const int tw = rect.width();
  const std::size_t npix = static_cast<std::size_t>(tw) * (rect.y1 - rect.y0);
  std::vector<double> trans(npix, 1.0), acc(npix * 3, 0.0);
  if constexpr (kRecord == Record::Mass) out->mass.assign(list.size(), 0.0);
  if constexpr (kRecord == Record::Hits) {
    std::size_t bound = 0;
    for (std::uint32_t pos : list) {
      const Splat& sp = plan.splats[pos];
      bound += static_cast<std::size_t>(std::min(sp.x1, rect.x1 - 1) - std::max(sp.x0, rect.x0) + 1) *
               (std::min(sp.y1, rect.y1 - 1) - std::max(sp.y0, rect.y0) + 1);
    }
    out->hits.reserve(bound);
  }

  for (std::uint32_t local = 0; local < list.size(); ++local) {
    const Splat& sp = plan.splats[list[local]];
    const int x0 = std::max(sp.x0, rect.x0), x1 = std::min(sp.x1, rect.x1 - 1);
    const int y0 = std::max(sp.y0, rect.y0), y1 = std::min(sp.y1, rect.y1 - 1);
    for (int y = y0; y <= y1; ++y) {
      const double dy = y + 0.5 - sp.my;
      for (int x = x0; x <= x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y - rect.y0) * tw + (x - rect.x0);
        const double t = trans[p];
        if (t < s.transmittance_floor) continue;
        const double dx = x + 0.5 - sp.mx;
        const double d2 = mahalanobis_sq(sp.prec, dx, dy);
        if (d2 > s.cutoff_sq) continue;
        const double density = std::exp(-0.5 * d2);
        if (density == 0.0) continue;
        const double alpha = sp.opacity * density;
        const double w = alpha * t;
        acc[3 * p] += sp.r * w;
        acc[3 * p + 1] += sp.g * w;
        acc[3 * p + 2] += sp.b * w;
        trans[p] = t * (1.0 - alpha);
        if constexpr (kRecord == Record::Hits) {
          out->hits.push_back({local, static_cast<std::uint32_t>(p), density, t});
        } else if constexpr (kRecord == Record::Mass) {
          out->mass[local] += w;
        }
      }
    }
  }

  if (img) {
    for (int y = rect.y0; y < rect.y1; ++y) {
      for (int x = rect.x0; x < rect.x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y - rect.y0) * tw + (x - rect.x0);
        for (int c = 0; c < 3; ++c) {
          img->at(x, y, c) = std::clamp(acc[3 * p + c] + s.background[c] * trans[p], 0.0, 1.0);
        }
      }
    }
  }
}

// Per-Gaussian accumulator used by backward: d/d(mu), d/d(precision),
// d/d(activated opacity), d/d(color).
struct SplatAccum {
  double dmx = 0, dmy = 0;
  double dpxx = 0, dpxy = 0, dpyy = 0;
  double dopacity = 0;
  double dr = 0, dg = 0, db = 0;

  void add(const SplatAccum& o) {
    dmx += o.dmx;
    dmy += o.dmy;
    dpxx += o.dpxx;
    dpxy += o.dpxy;
    dpyy += o.dpyy;
    dopacity += o.dopacity;
    dr += o.dr;
    dg += o.dg;
    db += o.db;
  }
};

}  // namespace

void RenderSettings::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("render: width and height must be >= 1");
  if (tile_size < 1 || (tile_size & (tile_size - 1)) != 0) {
    throw InvalidArgument("render: tile_size must be a power of two");
  }
  if (!(transmittance_floor > 0.0 && transmittance_floor < 1.0)) {
    throw InvalidArgument("render: transmittance_floor must lie in (0, 1)");
  }
  if (!(cutoff_sq > 0.0)) throw InvalidArgument("render: cutoff_sq must be positive");
  for (double c : background) {
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("render: background must lie in [0, 1]");
  }
}

unsigned render_thread_count(const RenderSettings& settings) {
  if (settings.threads > 0) return settings.threads;
  if (const char* env = std::getenv("SPLATSPA_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct RenderPass::State {
  RenderSettings settings;
  const GaussianCloud* cloud = nullptr;
  Plan plan;
  std::vector<TileResult> tiles;
  Image image;
};

RenderPass::RenderPass(const GaussianCloud& cloud, const RenderSettings& s) : state_(std::make_unique<State>()) {
  s.validate();
  state_->settings = s;
  state_->cloud = &cloud;
  state_->plan = build_plan(cloud, s);
  state_->image = Image(s.width, s.height);
  state_->tiles.resize(state_->plan.tiles.size());
  for_each_tile(state_->plan.tiles.size(), render_thread_count(s), [&](std::size_t tile) {
    composite_tile<Record::Hits>(state_->plan, s, tile, &state_->image, &state_->tiles[tile]);
  });
}

RenderPass::RenderPass(RenderPass&&) noexcept = default;
RenderPass& RenderPass::operator=(RenderPass&&) noexcept = default;
RenderPass::~RenderPass() = default;

const Image& RenderPass::image() const { return state_->image; }

CloudGradient RenderPass::backward(const Image& d_image) const {
  const RenderSettings& s = state_->settings;
  const Plan& plan = state_->plan;
  const GaussianCloud& cloud = *state_->cloud;
  if (d_image.width != s.width || d_image.height != s.height ||
      d_image.data.size() != static_cast<std::size_t>(s.width) * s.height * 3) {
    throw InvalidArgument("render_backward: upstream gradient must be " + std::to_string(s.height) + "x" +
                          std::to_string(s.width) + "x3");
  }
  std::vector<std::vector<SplatAccum>> tile_accum(plan.tiles.size());

  for_each_tile(plan.tiles.size(), render_thread_count(s), [&](std::size_t tile) {
    const TileRect rect = tile_rect(plan, s, tile);
    const auto& list = plan.tiles[tile];
    const int tw = rect.width();
    const std::size_t npix = static_cast<std::size_t>(tw) * (rect.y1 - rect.y0);
    auto& accum = tile_accum[tile];
    accum.assign(list.size(), SplatAccum{});

    // Upstream gradient and the color seen behind the current hit, per pixel.
    std::vector<double> up(npix * 3), behind(npix * 3);
    for (std::size_t p = 0; p < npix; ++p) {
      const int x = rect.x0 + static_cast<int>(p % tw);
      const int y = rect.y0 + static_cast<int>(p / tw);
      for (int c = 0; c < 3; ++c) {
        up[3 * p + c] = d_image.at(x, y, c);
        behind[3 * p + c] = s.background[c];
      }
    }

    const auto& hits = state_->tiles[tile].hits;
    for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
      const Splat& sp = plan.splats[list[it->local]];
      SplatAccum& a = accum[it->local];
      const std::size_t p = it->pixel;
      const double gr = up[3 * p], gg = up[3 * p + 1], gb = up[3 * p + 2];
      double& br = behind[3 * p];
      double& bg = behind[3 * p + 1];
      double& bb = behind[3 * p + 2];
      const double t = it->transmittance;
      const double alpha = sp.opacity * it->density;

      const double d_alpha = t * (gr * (sp.r - br) + gg * (sp.g - bg) + gb * (sp.b - bb));
      const double w = alpha * t;
      a.dr += gr * w;
      a.dg += gg * w;
      a.db += gb * w;
      a.dopacity += d_alpha * it->density;

      const double dx = rect.x0 + static_cast<int>(p % tw) + 0.5 - sp.mx;
      const double dy = rect.y0 + static_cast<int>(p / tw) + 0.5 - sp.my;
      const double gd = d_alpha * sp.opacity * it->density;  // d loss / d(-d^2 / 2) chain
      a.dmx += gd * (sp.prec.xx * dx + sp.prec.xy * dy);
      a.dmy += gd * (sp.prec.xy * dx + sp.prec.yy * dy);
      a.dpxx += -0.5 * gd * dx * dx;
      a.dpxy += -gd * dx * dy;
      a.dpyy += -0.5 * gd * dy * dy;

      br = sp.r * alpha + (1.0 - alpha) * br;
      bg = sp.g * alpha + (1.0 - alpha) * bg;
      bb = sp.b * alpha + (1.0 - alpha) * bb;
    }
  });

  std::vector<SplatAccum> total(plan.splats.size());
  for (std::size_t tile = 0; tile < plan.tiles.size(); ++tile) {
    const auto& list = plan.tiles[tile];
    for (std::size_t local = 0; local < list.size(); ++local) total[list[local]].add(tile_accum[tile][local]);
  }

  CloudGradient grad(cloud.size());
  for (std::size_t pos = 0; pos < plan.splats.size(); ++pos) {
    const Splat& sp = plan.splats[pos];
    const SplatAccum& a = total[pos];
    const std::size_t i = sp.index;
    grad.mu[2 * i] = a.dmx;
    grad.mu[2 * i + 1] = a.dmy;
    const ShapeGradient shape = precision_to_shape_grad(
        cloud.theta[i], {cloud.log_scale[2 * i], cloud.log_scale[2 * i + 1]}, {a.dpxx, a.dpxy, a.dpyy});
    grad.theta[i] = shape.d_theta;
    grad.log_scale[2 * i] = shape.d_log_scale[0];
    grad.log_scale[2 * i + 1] = shape.d_log_scale[1];
    grad.opacity_logit[i] = a.dopacity * sp.opacity * (1.0 - sp.opacity);
    grad.color[3 * i] = a.dr;
    grad.color[3 * i + 1] = a.dg;
    grad.color[3 * i + 2] = a.db;
  }
  return grad;
}

Image render(const GaussianCloud& cloud, const RenderSettings& s) {
  s.validate();
  const Plan plan = build_plan(cloud, s);
  Image img(s.width, s.height);
  for_each_tile(plan.tiles.size(), render_thread_count(s), [&](std::size_t tile) {
    composite_tile<Record::None>(plan, s, tile, &img, nullptr);
  });
  return img;
}

CloudGradient render_backward(const GaussianCloud& cloud, const RenderSettings& settings, const Image& d_image) {
  return RenderPass(cloud, settings).backward(d_image);
}

std::vector<double> blend_weight_mass(const GaussianCloud& cloud, const RenderSettings& s) {
  s.validate();
  const Plan plan = build_plan(cloud, s);
  std::vector<TileResult> results(plan.tiles.size());
  for_each_tile(plan.tiles.size(), render_thread_count(s), [&](std::size_t tile) {
    composite_tile<Record::Mass>(plan, s, tile, nullptr, &results[tile]);
  });

  std::vector<double> scores(cloud.size(), 0.0);
  for (std::size_t tile = 0; tile < plan.tiles.size(); ++tile) {
    const auto& list = plan.tiles[tile];
    for (std::size_t local = 0; local < list.size(); ++local) {
      scores[plan.splats[list[local]].index] += results[tile].mass[local];
    }
  }
  return scores;
}

}  // namespace splatspa
