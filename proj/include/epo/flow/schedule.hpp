#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace epo::flow {

enum class ScheduleKind { LinearOT, Trig };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

/// Interpolant x_t = alpha(t) x1 + sigma(t) x0 between a prior draw x0 and a
/// data point x1.
///   linear-ot: alpha = t,          sigma = 1 - t
///   trig:      alpha = sin(pi t/2), sigma = cos(pi t/2)
class Schedule {
 public:
  explicit Schedule(ScheduleKind kind = ScheduleKind::LinearOT) : kind_(kind) {}

  ScheduleKind kind() const { return kind_; }
  double alpha(double t) const;
  double sigma(double t) const;
  double alpha_dot(double t) const;
  double sigma_dot(double t) const;
  /// alpha_dot * sigma - alpha * sigma_dot; nonzero on (0, 1).
  double denominator(double t) const { return alpha_dot(t) * sigma(t) - alpha(t) * sigma_dot(t); }

  friend bool operator==(const Schedule&, const Schedule&) = default;

 private:
  ScheduleKind kind_;
};

struct PathPoint {
  std::vector<double> x;
  std::vector<double> velocity;
};

/// Position and velocity of the interpolant at time t. Throws
/// std::domain_error for t outside [0, 1].
PathPoint path_point(std::span<const double> x0, std::span<const double> x1, double t, const Schedule& sched);

}  // namespace epo::flow
