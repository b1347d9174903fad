#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polytx/encoder.hpp"

namespace polytx {

enum class OptimizerKind { AdamW, Lamb };
enum class Schedule { WarmupDecay, Constant };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);
Schedule parse_schedule(std::string_view name);
std::string_view schedule_name(Schedule s);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

inline constexpr double kTrustRatioMin = 0.01;
inline constexpr double kTrustRatioMax = 10.0;

template <typename T>
struct MomentState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t t = 0;
};

/// Decoupled weight decay Adam with bias-corrected moments.
template <typename T>
void step_adamw(std::span<T> param, std::span<const T> grad, MomentState<T>& state, double lr, const AdamHyper& hp);

/// LAMB: the Adam ratio (plus decay) rescaled per tensor by the trust ratio
/// ||param|| / ||update||, clamped to [0.01, 10], and 1 when either norm
/// is zero. Returns the trust ratio applied.
template <typename T>
double step_lamb(std::span<T> param, std::span<const T> grad, MomentState<T>& state, double lr, const AdamHyper& hp);

/// Linear ramp 0 -> peak over the first round(warmup_ratio * total) steps,
/// then linear decay to 0 at total. Constant returns peak for every step.
double lr_at(std::uint64_t step, std::uint64_t total_steps, double peak_lr, double warmup_ratio,
             Schedule schedule = Schedule::WarmupDecay);

/// Per-tensor optimizer state over a model's named parameters.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, AdamHyper hyper) : kind_(kind), hyper_(hyper) {}

  /// Applies one update from the accumulated grads. Throws
  /// NonFiniteGradient (naming the tensor) before touching any parameter.
  void step(std::span<const NamedParam<T>> params, double lr);

  OptimizerKind kind() const noexcept { return kind_; }
  const AdamHyper& hyper() const noexcept { return hyper_; }
  std::uint64_t steps_taken() const noexcept { return steps_; }
  const std::map<std::string, double>& last_trust_ratios() const noexcept { return trust_; }

  std::vector<NamedArray> export_state() const;
  void import_state(std::span<const NamedArray> arrays, std::span<const NamedParam<T>> params);

 private:
  OptimizerKind kind_;
  AdamHyper hyper_;
  std::uint64_t steps_ = 0;
  std::map<std::string, MomentState<T>> state_;
  std::map<std::string, double> trust_;
};

}  // namespace polytx
