#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvmol/error.hpp"
#include "mvmol/tensor.hpp"

namespace mvmol {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Decoupled-weight-decay Adam. Moment buffers are keyed by parameter name;
/// the step counter is shared across parameters.
template <class S>
class AdamWT {
 public:
  explicit AdamWT(AdamWConfig cfg = {}) : cfg_(cfg) {}

  struct State {
    std::vector<S> m, v;
  };

  /// One update over named (parameter, gradient) pairs. Gradients are read
  /// from each tensor's grad buffer and must match the parameter shape.
  void step(const std::vector<std::pair<std::string, TensorT<S>*>>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, p] : params) {
      require(p->grad.size() == p->data.size(), ErrorKind::Shape,
              "adamw: gradient missing or mis-shaped for '" + name + "'");
      State& st = state_[name];
      if (st.m.size() != p->data.size()) {
        require(st.m.empty(), ErrorKind::Shape, "adamw: state shape changed for '" + name + "'");
        st.m.assign(p->data.size(), S(0));
        st.v.assign(p->data.size(), S(0));
      }
      for (size_t i = 0; i < p->data.size(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        const double m = cfg_.beta1 * static_cast<double>(st.m[i]) + (1.0 - cfg_.beta1) * g;
        const double v = cfg_.beta2 * static_cast<double>(st.v[i]) + (1.0 - cfg_.beta2) * g * g;
        st.m[i] = static_cast<S>(m);
        st.v[i] = static_cast<S>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        const double x = static_cast<double>(p->data[i]);
        p->data[i] = static_cast<S>(x - lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                              cfg_.weight_decay * x));
      }
    }
  }

  void step(const std::vector<std::pair<std::string, TensorT<S>*>>& params) {
    step(params, cfg_.lr);
  }

  int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::unordered_map<std::string, State> state_;
};

using AdamW = AdamWT<float>;

/// Scales all gradients by clip/||g|| when the global norm exceeds clip.
/// Returns the pre-clip norm. clip <= 0 disables.
template <class S>
double clip_global_norm(const std::vector<std::pair<std::string, TensorT<S>*>>& params,
                        double clip) {
  double total = 0.0;
  for (const auto& [name, p] : params)
    for (S g : p->grad) total += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(total);
  if (clip > 0.0 && norm > clip) {
    const double scale = clip / norm;
    for (const auto& [name, p] : params)
      for (S& g : p->grad) g = static_cast<S>(static_cast<double>(g) * scale);
  }
  return norm;
}

/// Linear warmup to peak, then cosine annealing to final over the remaining
/// steps; lr(0) = 0, lr(warmup) = peak, lr(steps-1) = final.
inline double lr_at(int64_t step, int64_t steps, int64_t warmup_steps, double peak_lr,
                    double final_lr) {
  require(steps > 0 && step >= 0 && step < steps, ErrorKind::Config, "lr_at: step out of range");
  require(warmup_steps < steps, ErrorKind::Config, "lr_at: warmup_steps must be < steps");
  if (step < warmup_steps) return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (steps - 1 == warmup_steps) return peak_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(steps - 1 - warmup_steps);
  return final_lr + (peak_lr - final_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace mvmol
