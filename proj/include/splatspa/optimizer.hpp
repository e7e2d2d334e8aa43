#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "splatspa/cloud.hpp"

namespace splatspa {

enum class ParamGroup : int { Position = 0, Rotation, Scale, Opacity, Color };
inline constexpr int kParamGroups = 5;

std::string_view group_name(ParamGroup g);

struct LearningRates {
  double position = 0.0;
  double rotation = 5e-3;
  double scale = 5e-3;
  double opacity = 5e-2;
  double color = 2.5e-3;

  double operator[](ParamGroup g) const;
  bool operator==(const LearningRates&) const = default;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  bool operator==(const AdamMoments&) const = default;
};

/// Adam with one moment pair per parameter column and a shared step counter.
struct OptimizerState {
  std::array<AdamMoments, kParamGroups> moments;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;

  static OptimizerState for_cloud(const GaussianCloud& cloud);

  /// One Adam update of every column. Dead Gaussians are left untouched.
  void apply(GaussianCloud& cloud, const CloudGradient& grad, const LearningRates& lr);

  /// Compacts moment columns with the same index mapping as the cloud.
  void compact(std::span<const std::size_t> kept);

  bool operator==(const OptimizerState&) const = default;
};

std::vector<double>& param_column(GaussianCloud& cloud, ParamGroup g);
const std::vector<double>& param_column(const GaussianCloud& cloud, ParamGroup g);
const std::vector<double>& grad_column(const CloudGradient& grad, ParamGroup g);
std::size_t group_stride(ParamGroup g);

}  // namespace splatspa
