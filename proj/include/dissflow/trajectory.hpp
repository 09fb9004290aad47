#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dissflow/measures.hpp"

namespace dissflow {

/// Time series logged along a flow and consumed by the monitor.
struct TrajectoryLog {
  std::vector<double> times;
  /// W2(rho_t, target).
  std::vector<double> w2_to_target;
  /// Lyapunov / functional value V(rho_t).
  std::vector<double> lyapunov;
  /// (1/N) sum |zeta_u(x_i)|^2 (or its diffusion analogue).
  std::vector<double> pert_norm;
  std::vector<double> u;
  /// Certified bound; NaN until filled by the monitor.
  std::vector<double> bound;

  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> warnings;
  /// Positions at every logged time when snapshots were requested.
  std::vector<Points> snapshots;

  std::size_t size() const { return times.size(); }
  void append(double t, double w2, double v, double pert, double u_t);
  /// Throws unless times strictly increase, all series have equal length and
  /// W2 / Lyapunov values are nonnegative.
  void validate() const;
};

/// CSV with columns t, W2_to_target, F_value, pert_norm, u_t, bound_value,
/// preceded by '#' metadata lines (seed, config hash).
void write_trajectory_csv(std::ostream& out, const TrajectoryLog& log);
TrajectoryLog read_trajectory_csv(std::istream& in);

}  // namespace dissflow
