#include "polytx/optim.hpp"

#include <cmath>

#include "polytx/error.hpp"

namespace polytx {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adamw" || name == "AdamW") return OptimizerKind::AdamW;
  if (name == "lamb" || name == "LAMB") return OptimizerKind::Lamb;
  fail(ErrorCode::BadConfig, "unknown optimizer '" + std::string(name) + "' (expected lamb|adamw)");
}

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::AdamW ? "adamw" : "lamb"; }

Schedule parse_schedule(std::string_view name) {
  if (name == "warmup_decay") return Schedule::WarmupDecay;
  if (name == "constant") return Schedule::Constant;
  fail(ErrorCode::BadConfig, "unknown schedule '" + std::string(name) + "' (expected warmup_decay|constant)");
}

std::string_view schedule_name(Schedule s) { return s == Schedule::WarmupDecay ? "warmup_decay" : "constant"; }

namespace {

template <typename T>
void ensure_state(MomentState<T>& s, std::size_t n) {
  if (s.m.size() != n) {
    s.m.assign(n, T(0));
    s.v.assign(n, T(0));
    s.t = 0;
  }
}

template <typename T>
void check_sizes(std::span<T> param, std::span<const T> grad) {
  if (param.size() != grad.size()) {
    fail(ErrorCode::ShapeMismatch, "optimizer: parameter has " + std::to_string(param.size()) + " entries, gradient " +
                                       std::to_string(grad.size()));
  }
}

}  // namespace

template <typename T>
void step_adamw(std::span<T> param, std::span<const T> grad, MomentState<T>& state, double lr, const AdamHyper& hp) {
  check_sizes(param, grad);
  ensure_state(state, param.size());
  ++state.t;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    const double v = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    double p = param[i];
    p -= lr * hp.weight_decay * p;
    p -= lr * (m / bc1) / (std::sqrt(v / bc2) + hp.eps);
    param[i] = static_cast<T>(p);
  }
}

template <typename T>
double step_lamb(std::span<T> param, std::span<const T> grad, MomentState<T>& state, double lr, const AdamHyper& hp) {
  check_sizes(param, grad);
  ensure_state(state, param.size());
  ++state.t;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  std::vector<double> update(param.size());
  double param_sq = 0.0;
  double update_sq = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    const double v = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double p = param[i];
    update[i] = (m / bc1) / (std::sqrt(v / bc2) + hp.eps) + hp.weight_decay * p;
    param_sq += p * p;
    update_sq += update[i] * update[i];
  }
  const double pn = std::sqrt(param_sq);
  const double un = std::sqrt(update_sq);
  double trust = 1.0;
  if (pn > 0.0 && un > 0.0) trust = std::clamp(pn / un, kTrustRatioMin, kTrustRatioMax);
  for (std::size_t i = 0; i < param.size(); ++i) param[i] = static_cast<T>(param[i] - lr * trust * update[i]);
  return trust;
}

double lr_at(std::uint64_t step, std::uint64_t total_steps, double peak_lr, double warmup_ratio, Schedule schedule) {
  if (step > total_steps) {
    fail(ErrorCode::BadStep, "step " + std::to_string(step) + " beyond total " + std::to_string(total_steps));
  }
  if (schedule == Schedule::Constant) return peak_lr;
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) fail(ErrorCode::BadConfig, "warmup_ratio must be in [0,1]");
  const auto warmup = static_cast<std::uint64_t>(std::llround(warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup) return peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total_steps == warmup) return peak_lr;
  return peak_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

template <typename T>
void Optimizer<T>::step(std::span<const NamedParam<T>> params, double lr) {
  for (const auto& p : params) {
    if (!p.tensor->has_grad()) continue;
    for (auto g : p.tensor->grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        fail(ErrorCode::NonFiniteGradient, "non-finite gradient in tensor '" + p.name + "'");
      }
    }
  }
  ++steps_;
  trust_.clear();
  for (const auto& p : params) {
    if (!p.tensor->has_grad()) continue;
    auto& s = state_[p.name];
    if (kind_ == OptimizerKind::AdamW) {
      step_adamw<T>(p.tensor->data(), p.tensor->grad(), s, lr, hyper_);
    } else {
      trust_[p.name] = step_lamb<T>(p.tensor->data(), p.tensor->grad(), s, lr, hyper_);
    }
  }
}

template <typename T>
std::vector<NamedArray> Optimizer<T>::export_state() const {
  std::vector<NamedArray> out;
  for (const auto& [name, s] : state_) {
    NamedArray m{"optim/m/" + name, {s.m.size()}, std::vector<float>(s.m.begin(), s.m.end())};
    NamedArray v{"optim/v/" + name, {s.v.size()}, std::vector<float>(s.v.begin(), s.v.end())};
    NamedArray t{"optim/t/" + name, {1}, {static_cast<float>(s.t)}};
    out.push_back(std::move(m));
    out.push_back(std::move(v));
    out.push_back(std::move(t));
  }
  out.push_back(NamedArray{"optim/steps", {1}, {static_cast<float>(steps_)}});
  return out;
}

template <typename T>
void Optimizer<T>::import_state(std::span<const NamedArray> arrays, std::span<const NamedParam<T>> params) {
  std::map<std::string, std::size_t> sizes;
  for (const auto& p : params) sizes[p.name] = p.tensor->numel();
  state_.clear();
  for (const auto& a : arrays) {
    if (a.name == "optim/steps") {
      steps_ = static_cast<std::uint64_t>(a.values.at(0));
      continue;
    }
    for (std::string_view prefix : {"optim/m/", "optim/v/", "optim/t/"}) {
      if (!a.name.starts_with(prefix)) continue;
      const std::string name = a.name.substr(prefix.size());
      auto it = sizes.find(name);
      if (it == sizes.end()) fail(ErrorCode::BadFormat, "optimizer state for unknown tensor '" + name + "'");
      auto& s = state_[name];
      if (prefix == "optim/t/") {
        s.t = static_cast<std::uint64_t>(a.values.at(0));
        continue;
      }
      if (a.values.size() != it->second) {
        fail(ErrorCode::BadFormat, "optimizer state for '" + name + "' has " + std::to_string(a.values.size()) +
                                       " entries, parameter has " + std::to_string(it->second));
      }
      auto& dst = prefix == "optim/m/" ? s.m : s.v;
      dst.assign(a.values.begin(), a.values.end());
    }
  }
}

template void step_adamw<float>(std::span<float>, std::span<const float>, MomentState<float>&, double, const AdamHyper&);
template void step_adamw<double>(std::span<double>, std::span<const double>, MomentState<double>&, double, const AdamHyper&);
template double step_lamb<float>(std::span<float>, std::span<const float>, MomentState<float>&, double, const AdamHyper&);
template double step_lamb<double>(std::span<double>, std::span<const double>, MomentState<double>&, double, const AdamHyper&);
template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace polytx
