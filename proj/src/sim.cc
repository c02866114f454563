#include "flowsos/sim.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include "json_util.h"

namespace flowsos {

namespace {

/// (Lambda / Re + W) a + N(a) a with the nonzero entries of the Q^j listed.
class FastRhs {
 public:
  FastRhs(const QuadraticSystem& sys, double re)
      : linear_(sys.lambda_mat / re + sys.w_mat) {
    for (int j = 0; j < sys.n; ++j) {
      for (int i = 0; i < sys.n; ++i) {
        for (int k = 0; k < sys.n; ++k) {
          const double c = sys.q_tensors[j](i, k);
          if (c != 0.0) terms_.push_back({i, j, k, c});
        }
      }
    }
  }

  void operator()(const Eigen::VectorXd& a, Eigen::VectorXd* out) const {
    out->noalias() = linear_ * a;
    for (const Term& t : terms_) (*out)[t.i] += t.c * a[t.j] * a[t.k];
  }

 private:
  struct Term {
    int i, j, k;
    double c;
  };
  Eigen::MatrixXd linear_;
  std::vector<Term> terms_;
};

/// Polynomial evaluation through a table of variable powers.
class CompiledPoly {
 public:
  explicit CompiledPoly(const MultiPoly& p) : n_(p.num_vars()), max_degree_(std::max(p.degree(), 0)) {
    for (const auto& [m, c] : p.terms()) {
      coefficients_.push_back(c);
      std::vector<int> index;
      for (int i = 0; i < n_; ++i) {
        if (m.exponent(i) > 0) index.push_back(i * (max_degree_ + 1) + m.exponent(i));
      }
      factors_.push_back(std::move(index));
    }
  }

  double operator()(const Eigen::VectorXd& x, std::vector<double>* powers) const {
    const int stride = max_degree_ + 1;
    powers->resize(static_cast<size_t>(n_) * stride);
    for (int i = 0; i < n_; ++i) {
      double v = 1.0;
      for (int e = 0; e <= max_degree_; ++e) {
        (*powers)[i * stride + e] = v;
        v *= x[i];
      }
    }
    double sum = 0.0;
    for (size_t t = 0; t < coefficients_.size(); ++t) {
      double term = coefficients_[t];
      for (const int idx : factors_[t]) term *= (*powers)[idx];
      sum += term;
    }
    return sum;
  }

 private:
  int n_;
  int max_degree_;
  std::vector<double> coefficients_;
  std::vector<std::vector<int>> factors_;
};

}  // namespace

Trajectory Integrate(const QuadraticSystem& sys, const Eigen::VectorXd& a0, double re,
                     double t_final, const IntegrateOptions& options) {
  ValidateSystem(sys);
  const double dt = options.dt;
  if (!(dt > 0.0)) throw std::invalid_argument("Integrate: dt must be positive");
  if (!(t_final >= dt)) throw std::invalid_argument("Integrate: T must be at least dt");
  if (!(re > 0.0)) throw std::invalid_argument("Integrate: Re must be positive");
  if (options.sample_every < 1) throw std::invalid_argument("Integrate: sample_every must be >= 1");
  if (a0.size() != sys.n) throw std::invalid_argument("Integrate: a0 has the wrong size");
  const FastRhs f(sys, re);
  const long steps = std::lround(t_final / dt);
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(a0);
  Eigen::VectorXd a = a0, k1(sys.n), k2(sys.n), k3(sys.n), k4(sys.n), tmp(sys.n);
  for (long s = 1; s <= steps; ++s) {
    f(a, &k1);
    tmp = a + 0.5 * dt * k1;
    f(tmp, &k2);
    tmp = a + 0.5 * dt * k2;
    f(tmp, &k3);
    tmp = a + dt * k3;
    f(tmp, &k4);
    a += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!a.allFinite()) {
      traj.blow_up_step = s;
      return traj;
    }
    if (s % options.sample_every == 0 || s == steps) {
      traj.times.push_back(s * dt);
      traj.states.push_back(a);
    }
  }
  return traj;
}

DecreaseReport CheckDecrease(const MultiPoly& v, const QuadraticSystem& sys, double re,
                             const Trajectory& traj, double min_norm) {
  if (v.num_vars() != sys.n) throw std::invalid_argument("CheckDecrease: V has the wrong size");
  const FastRhs f(sys, re);
  const CompiledPoly value(v);
  std::vector<CompiledPoly> grad;
  for (const auto& g : Gradient(v)) grad.emplace_back(g);
  std::vector<double> powers;
  Eigen::VectorXd fa(sys.n);
  DecreaseReport rep;
  rep.max_vdot = rep.max_delta_v = -std::numeric_limits<double>::infinity();
  double v_prev = 0.0;
  for (size_t k = 0; k < traj.states.size(); ++k) {
    const Eigen::VectorXd& a = traj.states[k];
    const double vk = value(a, &powers);
    if (k > 0 && traj.states[k - 1].norm() > min_norm) {
      const double delta = vk - v_prev;
      rep.max_delta_v = std::max(rep.max_delta_v, delta);
      if (delta >= 0.0) ++rep.num_increases;
    }
    v_prev = vk;
    if (a.norm() <= min_norm) continue;
    f(a, &fa);
    double vdot = 0.0;
    for (int i = 0; i < sys.n; ++i) vdot += grad[i](a, &powers) * fa[i];
    rep.max_vdot = std::max(rep.max_vdot, vdot);
    if (vdot >= 0.0) ++rep.num_nonnegative_vdot;
    ++rep.num_checked;
  }
  return rep;
}

DecreaseReport Combine(const DecreaseReport& a, const DecreaseReport& b) {
  DecreaseReport r;
  r.max_vdot = std::max(a.max_vdot, b.max_vdot);
  r.max_delta_v = std::max(a.max_delta_v, b.max_delta_v);
  r.num_increases = a.num_increases + b.num_increases;
  r.num_nonnegative_vdot = a.num_nonnegative_vdot + b.num_nonnegative_vdot;
  r.num_checked = a.num_checked + b.num_checked;
  return r;
}

Eigen::VectorXd RandomInitialCondition(int n, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  Eigen::VectorXd a(n);
  do {
    for (auto& x : a) x = normal(rng);
  } while (a.norm() == 0.0);
  return a.normalized() * (radius * (1.0 - unit(rng)));
}

ProbeReport StabilityProbe(const QuadraticSystem& sys, const std::vector<double>& re_grid,
                           int samples_per_re, const ProbeOptions& options) {
  ValidateSystem(sys);
  if (samples_per_re < 0) throw std::invalid_argument("StabilityProbe: samples must be >= 0");
  for (const double re : re_grid) {
    if (!(re > 0.0)) throw std::invalid_argument("StabilityProbe: Re must be positive");
  }
  ProbeReport rep;
  rep.seed = options.seed;
  rep.t_final = options.t_final;
  rep.dt = options.dt;
  rep.radius = options.radius;
  rep.tolerance = options.tolerance;
  const int num_tasks = static_cast<int>(re_grid.size()) * samples_per_re;
  // 0 converged, 1 not converged, 2 blow-up.
  std::vector<int> outcome(num_tasks, 1);
  std::atomic<int> next{0};
  IntegrateOptions io;
  io.dt = options.dt;
  io.sample_every = std::numeric_limits<int>::max();
  auto worker = [&]() {
    for (int t = next++; t < num_tasks; t = next++) {
      const double re = re_grid[t / samples_per_re];
      const int k = t % samples_per_re;
      const Eigen::VectorXd a0 = RandomInitialCondition(sys.n, options.radius, options.seed + k);
      const Trajectory traj = Integrate(sys, a0, re, options.t_final, io);
      if (traj.blow_up_step) {
        outcome[t] = 2;
      } else {
        outcome[t] = traj.states.back().norm() < options.tolerance ? 0 : 1;
      }
    }
  };
  int threads = options.threads > 0 ? options.threads
                                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, num_tasks));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (size_t r = 0; r < re_grid.size(); ++r) {
    ProbeRow row;
    row.re = re_grid[r];
    row.samples = samples_per_re;
    for (int k = 0; k < samples_per_re; ++k) {
      const int o = outcome[r * samples_per_re + k];
      if (o == 0) ++row.converged;
      if (o == 2) ++row.blow_ups;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

std::string ProbeReportToJson(const ProbeReport& report) {
  internal::Json j;
  j["format"] = "probe-v1";
  j["seed"] = report.seed;
  j["t_final"] = report.t_final;
  j["dt"] = report.dt;
  j["radius"] = report.radius;
  j["tolerance"] = report.tolerance;
  internal::Json rows = internal::Json::array();
  for (const ProbeRow& r : report.rows) {
    internal::Json row;
    row["re"] = r.re;
    row["samples"] = r.samples;
    row["converged"] = r.converged;
    row["fraction"] = r.fraction();
    row["blow_ups"] = r.blow_ups;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

double Rk4ErrorRatio(const QuadraticSystem& sys, const Eigen::VectorXd& a0, double re,
                     double t_final, double dt) {
  auto endpoint = [&](double h) {
    IntegrateOptions io;
    io.dt = h;
    io.sample_every = std::numeric_limits<int>::max();
    const Trajectory traj = Integrate(sys, a0, re, t_final, io);
    if (traj.blow_up_step) throw std::runtime_error("Rk4ErrorRatio: trajectory blew up");
    return traj.states.back();
  };
  const Eigen::VectorXd ref = endpoint(dt / 64.0);
  return (endpoint(dt) - ref).norm() / (endpoint(dt / 2.0) - ref).norm();
}

}  // namespace flowsos
