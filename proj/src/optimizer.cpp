#include "splatspa/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "splatspa/errors.hpp"

namespace splatspa {

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Position: return "mu";
    case ParamGroup::Rotation: return "theta";
    case ParamGroup::Scale: return "log_scale";
    case ParamGroup::Opacity: return "opacity_logit";
    case ParamGroup::Color: return "color";
  }
  return "?";
}

double LearningRates::operator[](ParamGroup g) const {
  switch (g) {
    case ParamGroup::Position: return position;
    case ParamGroup::Rotation: return rotation;
    case ParamGroup::Scale: return scale;
    case ParamGroup::Opacity: return opacity;
    case ParamGroup::Color: return color;
  }
  return 0.0;
}

std::vector<double>& param_column(GaussianCloud& cloud, ParamGroup g) {
  switch (g) {
    case ParamGroup::Position: return cloud.mu;
    case ParamGroup::Rotation: return cloud.theta;
    case ParamGroup::Scale: return cloud.log_scale;
    case ParamGroup::Opacity: return cloud.opacity_logit;
    case ParamGroup::Color: return cloud.color;
  }
  throw InvalidArgument("unknown parameter group");
}

const std::vector<double>& param_column(const GaussianCloud& cloud, ParamGroup g) {
  return param_column(const_cast<GaussianCloud&>(cloud), g);
}

const std::vector<double>& grad_column(const CloudGradient& grad, ParamGroup g) {
  switch (g) {
    case ParamGroup::Position: return grad.mu;
    case ParamGroup::Rotation: return grad.theta;
    case ParamGroup::Scale: return grad.log_scale;
    case ParamGroup::Opacity: return grad.opacity_logit;
    case ParamGroup::Color: return grad.color;
  }
  throw InvalidArgument("unknown parameter group");
}

std::size_t group_stride(ParamGroup g) {
  switch (g) {
    case ParamGroup::Position: return 2;
    case ParamGroup::Scale: return 2;
    case ParamGroup::Color: return 3;
    default: return 1;
  }
}

OptimizerState OptimizerState::for_cloud(const GaussianCloud& cloud) {
  OptimizerState s;
  for (int gi = 0; gi < kParamGroups; ++gi) {
    const auto g = static_cast<ParamGroup>(gi);
    const std::size_t len = param_column(cloud, g).size();
    s.moments[gi].m.assign(len, 0.0);
    s.moments[gi].v.assign(len, 0.0);
  }
  return s;
}

void OptimizerState::apply(GaussianCloud& cloud, const CloudGradient& grad, const LearningRates& lr) {
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (int gi = 0; gi < kParamGroups; ++gi) {
    const auto g = static_cast<ParamGroup>(gi);
    auto& param = param_column(cloud, g);
    const auto& d = grad_column(grad, g);
    auto& [m, v] = moments[gi];
    if (d.size() != param.size() || m.size() != param.size()) {
      throw InvalidArgument("optimizer: column length mismatch for " + std::string(group_name(g)));
    }
    const std::size_t stride = group_stride(g);
    const double rate = lr[g];
    for (std::size_t k = 0; k < param.size(); ++k) {
      if (!cloud.alive[k / stride]) continue;
      m[k] = beta1 * m[k] + (1.0 - beta1) * d[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * d[k] * d[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      param[k] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  // colors stay in the unit cube
  for (double& c : cloud.color) c = std::clamp(c, 0.0, 1.0);
}

void OptimizerState::compact(std::span<const std::size_t> kept) {
  for (int gi = 0; gi < kParamGroups; ++gi) {
    const std::size_t stride = group_stride(static_cast<ParamGroup>(gi));
    moments[gi].m = gather_rows(moments[gi].m, stride, kept);
    moments[gi].v = gather_rows(moments[gi].v, stride, kept);
  }
}

}  // namespace splatspa
