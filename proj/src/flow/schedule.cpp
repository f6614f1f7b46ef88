#include "epo/flow/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace epo::flow {

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::LinearOT ? "linear-ot" : "trig"; }

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear-ot" || name == "linear") return ScheduleKind::LinearOT;
  if (name == "trig") return ScheduleKind::Trig;
  throw std::invalid_argument("unknown schedule '" + std::string(name) + "' (expected linear-ot or trig)");
}

namespace {
constexpr double kHalfPi = std::numbers::pi / 2.0;
}

double Schedule::alpha(double t) const { return kind_ == ScheduleKind::LinearOT ? t : std::sin(kHalfPi * t); }

double Schedule::sigma(double t) const {
  // cos(pi/2) is not exactly zero in floating point; pin the endpoint.
  if (kind_ == ScheduleKind::LinearOT) return 1.0 - t;
  return t == 1.0 ? 0.0 : std::cos(kHalfPi * t);
}

double Schedule::alpha_dot(double t) const {
  return kind_ == ScheduleKind::LinearOT ? 1.0 : kHalfPi * std::cos(kHalfPi * t);
}

double Schedule::sigma_dot(double t) const {
  return kind_ == ScheduleKind::LinearOT ? -1.0 : -kHalfPi * std::sin(kHalfPi * t);
}

PathPoint path_point(std::span<const double> x0, std::span<const double> x1, double t, const Schedule& sched) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("path_point: t=" + std::to_string(t) + " outside [0, 1]");
  if (x0.size() != x1.size()) throw std::invalid_argument("path_point: x0 and x1 differ in dimension");
  const double a = sched.alpha(t), s = sched.sigma(t), ad = sched.alpha_dot(t), sd = sched.sigma_dot(t);
  PathPoint p;
  p.x.resize(x0.size());
  p.velocity.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    p.x[i] = a * x1[i] + s * x0[i];
    p.velocity[i] = ad * x1[i] + sd * x0[i];
  }
  return p;
}

}  // namespace epo::flow
