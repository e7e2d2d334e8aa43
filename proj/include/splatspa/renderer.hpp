#pragma once

#include <limits>
#include <memory>
#include <vector>

#include "splatspa/cloud.hpp"
#include "splatspa/image.hpp"

namespace splatspa {

struct RenderSettings {
  int width = 64;
  int height = 64;
  Rgb background{0.0, 0.0, 0.0};
  int tile_size = 16;
  /// A pixel stops compositing once its transmittance drops below this.
  double transmittance_floor = 1e-4;
  /// Density is treated as zero beyond this squared Mahalanobis distance.
  /// Use infinity() for an exact (uncut) render.
  double cutoff_sq = 18.0;
  /// 0 picks SPLATSPA_THREADS or the hardware concurrency.
  unsigned threads = 0;

  static constexpr double kNoCutoff = std::numeric_limits<double>::infinity();

  void validate() const;
};

/// One forward render that keeps its per-pixel compositing records, so the
/// backward pass replays them instead of recomputing the blend.
class RenderPass {
 public:
  RenderPass(const GaussianCloud& cloud, const RenderSettings& settings);
  RenderPass(RenderPass&&) noexcept;
  RenderPass& operator=(RenderPass&&) noexcept;
  ~RenderPass();

  const Image& image() const;
  CloudGradient backward(const Image& d_image) const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Front-to-back alpha compositing of every alive Gaussian, ordered by
/// (order_key, index). Pixel samples sit at pixel centers.
Image render(const GaussianCloud& cloud, const RenderSettings& settings);

/// Gradient of a pixel-wise loss with respect to every Gaussian parameter,
/// given d loss / d image. Dead Gaussians get zero gradient.
CloudGradient render_backward(const GaussianCloud& cloud, const RenderSettings& settings,
                              const Image& d_image);

/// Per-Gaussian sum over pixels of the blend weight alpha_i * T_i.
std::vector<double> blend_weight_mass(const GaussianCloud& cloud, const RenderSettings& settings);

/// Worker count actually used for a render with these settings.
unsigned render_thread_count(const RenderSettings& settings);

}  // namespace splatspa
