#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsos/model.h"
#include "flowsos/poly.h"

namespace flowsos {

/// States sampled every sample_every RK4 steps, starting with a0 at t = 0.
struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  /// Index of the first step whose result was not finite; integration stops
  /// there.
  std::optional<long> blow_up_step;
};

struct IntegrateOptions {
  double dt{1e-2};
  /// Record every k-th step; the final state is always recorded.
  int sample_every{1};
};

/// Classical fixed-step RK4 for da/dt = (Lambda / Re + W) a + N(a) a over
/// [0, t_final], with round(t_final / dt) steps.
/// @throws std::invalid_argument if dt <= 0, t_final < dt, re <= 0,
/// sample_every < 1, or a0 has the wrong size.
Trajectory Integrate(const QuadraticSystem& sys, const Eigen::VectorXd& a0, double re,
                     double t_final, const IntegrateOptions& options = {});

struct DecreaseReport {
  /// Max of grad V . f over samples with |a| > min_norm (-inf if none).
  double max_vdot{0.0};
  /// Max of V(a_{k+1}) - V(a_k) over pairs with |a_k| > min_norm.
  double max_delta_v{0.0};
  /// Pairs with |a_k| > min_norm and V(a_{k+1}) >= V(a_k).
  long num_increases{0};
  /// Samples with grad V . f >= 0 and |a| > min_norm.
  long num_nonnegative_vdot{0};
  long num_checked{0};
};

/// Checks V along a trajectory of the system at the given Re.
/// @throws std::invalid_argument if V has the wrong number of variables.
DecreaseReport CheckDecrease(const MultiPoly& v, const QuadraticSystem& sys, double re,
                             const Trajectory& traj, double min_norm = 1e-6);

/// Merges reports of several trajectories.
DecreaseReport Combine(const DecreaseReport& a, const DecreaseReport& b);

/// Initial condition with uniformly random direction and norm uniform in
/// (0, radius].
Eigen::VectorXd RandomInitialCondition(int n, double radius, std::uint64_t seed);

struct ProbeOptions {
  double t_final{1000.0};
  double dt{1e-2};
  /// Initial norms are uniform in (0, radius].
  double radius{2.0};
  /// A trajectory converges when |a(T)| < this.
  double tolerance{1e-4};
  std::uint64_t seed{1};
  /// Worker threads; 0 uses the hardware concurrency.
  int threads{0};
};

struct ProbeRow {
  double re{0.0};
  int samples{0};
  int converged{0};
  int blow_ups{0};
  double fraction() const { return samples > 0 ? static_cast<double>(converged) / samples : 0.0; }
};

struct ProbeReport {
  std::uint64_t seed{0};
  double t_final{0.0};
  double dt{0.0};
  double radius{0.0};
  double tolerance{0.0};
  std::vector<ProbeRow> rows;
};

/// Fraction of random trajectories with |a(T)| < tolerance at each Re.
/// Sample k at every Re starts from RandomInitialCondition(n, radius,
/// seed + k), so results do not depend on the thread count. Blow-ups count
/// as not converged.
/// @throws std::invalid_argument if samples_per_re < 0 or an Re is not
/// positive.
ProbeReport StabilityProbe(const QuadraticSystem& sys, const std::vector<double>& re_grid,
                           int samples_per_re, const ProbeOptions& options = {});

/// Probe report text (format tag "probe-v1").
std::string ProbeReportToJson(const ProbeReport& report);

/// Ratio |a_dt(T) - a_ref(T)| / |a_{dt/2}(T) - a_ref(T)| with a_ref from a
/// step of dt / 64; about 16 for a fourth-order method.
double Rk4ErrorRatio(const QuadraticSystem& sys, const Eigen::VectorXd& a0, double re,
                     double t_final, double dt);

}  // namespace flowsos
