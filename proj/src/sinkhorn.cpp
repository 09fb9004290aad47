#include "dissflow/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

namespace dissflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Largest stabilized exponent stored in single precision.
constexpr double kMaxExponent = 80.0;

double safe_log(double w) { return w > 0.0 ? std::log(w) : kNegInf; }

Vector log_weights(const Vector& w) {
  Vector out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = safe_log(w[i]);
  return out;
}

std::vector<double> epsilon_schedule(const SinkhornOptions& o) {
  std::vector<double> eps;
  double e = o.epsilon * std::max(1.0, o.scaling_start);
  while (e > o.epsilon * (1.0 + 1e-12)) {
    eps.push_back(e);
    e *= 0.5;
  }
  eps.push_back(o.epsilon);
  return eps;
}

void validate(const DiscreteMeasure& a, const DiscreteMeasure& b, const SinkhornOptions& o) {
  if (!(o.epsilon > 0.0)) throw InvalidArgument("sinkhorn: epsilon must be positive");
  if (!(o.tol > 0.0)) throw InvalidArgument("sinkhorn: tol must be positive");
  if (!(o.relaxation == 0.0 || (o.relaxation >= 1.0 && o.relaxation < 2.0)))
    throw InvalidArgument("sinkhorn: relaxation must be 0 (adaptive) or lie in [1, 2)");
  if (!(o.truncation > 0.0)) throw InvalidArgument("sinkhorn: truncation must be positive");
  if (a.dim() != b.dim()) throw InvalidArgument("sinkhorn: measures live in different dimensions");
  if (a.size() == 0 || b.size() == 0) throw InvalidArgument("sinkhorn: empty measure");
  for (const auto* m : {&a, &b}) {
    if (m->weights.size() != m->size()) throw InvalidArgument("sinkhorn: weight count does not match support");
    if ((m->weights.array() < 0.0).any()) throw InvalidArgument("sinkhorn: negative weights");
    if (std::abs(m->weights.sum() - 1.0) > 1e-9) throw InvalidArgument("sinkhorn: weights must sum to one");
  }
}

// ---------------------------------------------------------------------------
// Point clouds: stabilized kernel K_ij = exp((f_i + g_j - c_ij) / eps), kept
// in CSR form with entries below exp(-truncation) dropped, and scaling
// vectors u, v that are absorbed into (f, g) whenever they grow.

class PointEngine {
 public:
  PointEngine(const DiscreteMeasure& a, const DiscreteMeasure& b) : x_(a.support), y_(b.support) {}

  double cost(Eigen::Index i, Eigen::Index j) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < x_.cols(); ++k) {
      const double d = x_(i, k) - y_(j, k);
      s += d * d;
    }
    return s;
  }

  // Row i of the cost matrix.
  void cost_row(Eigen::Index i, Vector& c) const {
    c.resize(y_.rows());
    c.setZero();
    for (Eigen::Index k = 0; k < x_.cols(); ++k) c.array() += (y_.col(k).array() - x_(i, k)).square();
  }

  // Stores the truncated kernel. Rows whose exponents all lie far from zero
  // are re-centered by shifting f_i; columns left without any entry trigger
  // a shift of g_j and a rebuild. The symmetric solve needs f = g, so it
  // skips the re-centering (its potentials stay close to zero anyway).
  void build(Vector& f, Vector& g, double eps, double truncation, bool symmetric = false) {
    const Eigen::Index n = x_.rows(), m = y_.rows();
    const double limit = 0.25 * truncation;
    Vector c, e;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const std::size_t previous = col_.size();
      row_start_.assign(n + 1, 0);
      col_.clear();
      val_.clear();
      col_.reserve(previous);
      val_.reserve(previous);
      Vector colmax = Vector::Constant(m, kNegInf);
      for (Eigen::Index i = 0; i < n; ++i) {
        cost_row(i, c);
        e = (g.array() - c.array() + f[i]) / eps;
        const double mx = e.maxCoeff();
        if (!symmetric && (mx < -limit || mx > limit)) {
          f[i] -= eps * mx;
          e.array() -= mx;
        }
        colmax = colmax.cwiseMax(e);
        if (mx > kMaxExponent) throw NumericalError("sinkhorn: stabilized kernel overflows; potentials diverged");
        for (Eigen::Index j = 0; j < m; ++j)
          if (e[j] > -truncation) col_.push_back(static_cast<std::int32_t>(j));
        for (std::size_t p = static_cast<std::size_t>(row_start_[i]); p < col_.size(); ++p)
          val_.push_back(static_cast<float>(std::exp(e[col_[p]])));
        row_start_[i + 1] = static_cast<Eigen::Index>(col_.size());
      }
      bool shifted = false;
      if (!symmetric) {
        for (Eigen::Index j = 0; j < m; ++j) {
          if (colmax[j] < -limit) {
            g[j] -= eps * colmax[j];
            shifted = true;
          }
        }
      }
      if (!shifted) return;
    }
  }

  // Plain Gibbs kernel exp(-c / eps) without stabilization.
  void build_plain(double eps) {
    const Eigen::Index n = x_.rows(), m = y_.rows();
    row_start_.assign(n + 1, 0);
    col_.clear();
    val_.clear();
    std::vector<char> col_seen(m, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const float k = static_cast<float>(std::exp(-cost(i, j) / eps));
        if (k > 0.0f) {
          col_.push_back(static_cast<std::int32_t>(j));
          val_.push_back(k);
          col_seen[j] = 1;
        }
      }
      row_start_[i + 1] = static_cast<Eigen::Index>(col_.size());
      if (row_start_[i + 1] == row_start_[i]) underflow(eps);
    }
    for (char s : col_seen)
      if (!s) underflow(eps);
  }

  [[noreturn]] static void underflow(double eps) {
    std::ostringstream msg;
    msg << "sinkhorn: Gibbs kernel underflows at epsilon = " << eps
        << "; enable log-domain stabilization (SinkhornOptions::log_domain)";
    throw NumericalError(msg.str());
  }

  // out = K x
  void mul(const Vector& x, Vector& out) const {
    const Eigen::Index n = static_cast<Eigen::Index>(row_start_.size()) - 1;
    out.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index p = row_start_[i]; p < row_start_[i + 1]; ++p) s += val_[p] * x[col_[p]];
      out[i] = s;
    }
  }

  // out = K^T y
  void mul_t(const Vector& y, Eigen::Index m, Vector& out) const {
    out = Vector::Zero(m);
    const Eigen::Index n = static_cast<Eigen::Index>(row_start_.size()) - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double yi = y[i];
      if (yi == 0.0) continue;
      for (Eigen::Index p = row_start_[i]; p < row_start_[i + 1]; ++p) out[col_[p]] += val_[p] * yi;
    }
  }

  // Primal cost sum_ij a_i b_j u_i v_j K_ij c_ij and the plan's marginals.
  double primal(const Vector& au, const Vector& bv, Vector& rows, Vector& cols) const {
    const Eigen::Index n = static_cast<Eigen::Index>(row_start_.size()) - 1;
    rows = Vector::Zero(n);
    cols = Vector::Zero(y_.rows());
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index p = row_start_[i]; p < row_start_[i + 1]; ++p) {
        const Eigen::Index j = col_[p];
        const double pij = au[i] * bv[j] * val_[p];
        rows[i] += pij;
        cols[j] += pij;
        total += pij * cost(i, j);
      }
    }
    return total;
  }

 private:
  const Points& x_;
  const Points& y_;
  std::vector<Eigen::Index> row_start_;
  std::vector<std::int32_t> col_;
  // Single precision halves the memory traffic of the matrix-vector
  // products; sums are accumulated in double.
  std::vector<float> val_;
};

double max_abs_log(const Vector& s) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > 0.0) m = std::max(m, std::abs(std::log(s[i])));
  return m;
}

// Scaling vectors are absorbed once |log u| or |log v| exceeds this fraction
// of the truncation depth, so dropped entries stay negligible.
constexpr double kAbsorbFraction = 0.25;

// Picks the over-relaxation exponent from the observed contraction rate of
// plain Sinkhorn: omega = 2 / (1 + sqrt(1 - rate)). Falls back to omega = 1
// for the rest of the stage if the violation blows up.
class RelaxationTuner {
 public:
  explicit RelaxationTuner(bool adaptive) : adaptive_(adaptive) {}

  double next(double err, double omega) {
    if (!std::isfinite(err)) return omega;
    best_ = std::min(best_, err);
    if (omega > 1.0 && err > 100.0 * best_) {
      adaptive_ = false;
      return 1.0;
    }
    if (!adaptive_ || tuned_) return omega;
    history_.push_back(err);
    constexpr std::size_t kWarmup = 30, kWindow = 30;
    if (history_.size() < kWarmup + kWindow) return omega;
    const double rate = std::pow(history_.back() / history_[history_.size() - 1 - kWindow], 1.0 / kWindow);
    tuned_ = true;
    if (!(rate > 0.0 && rate < 1.0)) return omega;
    return std::min(1.9, 2.0 / (1.0 + std::sqrt(1.0 - rate)));
  }

 private:
  bool adaptive_;
  bool tuned_ = false;
  double best_ = std::numeric_limits<double>::infinity();
  std::vector<double> history_;
};

EntropicPotentials solve_points(const DiscreteMeasure& a, const DiscreteMeasure& b, const SinkhornOptions& o,
                                const EntropicPotentials* warm, bool symmetric) {
  const Eigen::Index n = a.size(), m = b.size();
  PointEngine engine(a, b);
  EntropicPotentials out;
  out.f = Vector::Zero(n);
  out.g = Vector::Zero(m);
  std::vector<double> schedule = epsilon_schedule(o);
  if (warm && warm->f.size() == n && warm->g.size() == m) {
    out.f = warm->f;
    out.g = warm->g;
    schedule = {o.epsilon};
  }
  if (!o.log_domain) schedule = {o.epsilon};

  const Vector& wa = a.weights;
  const Vector& wb = b.weights;
  Vector u = Vector::Ones(n), v = Vector::Ones(m), tmp, ku;
  double omega = 1.0;
  auto relax = [&omega](double old, double update) {
    return omega == 1.0 ? update : std::exp((1.0 - omega) * std::log(old) + omega * std::log(update));
  };
  int iter = 0;
  double err = std::numeric_limits<double>::infinity();

  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const double eps = schedule[s];
    const bool last = s + 1 == schedule.size();
    const double stage_tol = last ? o.tol : std::max(o.tol, 1e-3);
    if (o.log_domain) {
      engine.build(out.f, out.g, eps, o.truncation, symmetric);
    } else {
      engine.build_plain(eps);
    }
    u.setOnes();
    v.setOnes();
    double col_err = std::numeric_limits<double>::infinity();
    omega = o.relaxation > 0.0 ? o.relaxation : 1.0;
    RelaxationTuner tuner(o.relaxation == 0.0);
    while (iter < o.max_iter) {
      if (symmetric) {
        engine.mul(wa.cwiseProduct(u), ku);
        err = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) err += wa[i] * std::abs(u[i] * ku[i] - 1.0);
        err *= 2.0;
        if (err < stage_tol) break;
        for (Eigen::Index i = 0; i < n; ++i) u[i] = ku[i] > 0.0 ? std::sqrt(u[i] / ku[i]) : u[i];
        v = u;
      } else {
        // Total violation of the current (u, v): the column part was measured
        // during the previous v-update.
        engine.mul(wb.cwiseProduct(v), ku);
        err = col_err;
        for (Eigen::Index i = 0; i < n; ++i) err += wa[i] * std::abs(u[i] * ku[i] - 1.0);
        if (err < stage_tol) break;
        omega = tuner.next(err, omega);
        for (Eigen::Index i = 0; i < n; ++i)
          if (ku[i] > 0.0) u[i] = relax(u[i], 1.0 / ku[i]);
        engine.mul_t(wa.cwiseProduct(u), m, tmp);
        col_err = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
          if (tmp[j] > 0.0) v[j] = relax(v[j], 1.0 / tmp[j]);
          col_err += wb[j] * std::abs(v[j] * tmp[j] - 1.0);
        }
      }
      ++iter;
      if (!u.allFinite() || !v.allFinite()) throw NumericalError("sinkhorn: scaling vectors became non-finite");
      if (o.log_domain && (max_abs_log(u) > kAbsorbFraction * o.truncation || max_abs_log(v) > kAbsorbFraction * o.truncation)) {
        for (Eigen::Index i = 0; i < n; ++i) out.f[i] += eps * std::log(u[i]);
        for (Eigen::Index j = 0; j < m; ++j) out.g[j] += eps * std::log(v[j]);
        engine.build(out.f, out.g, eps, o.truncation, symmetric);
        u.setOnes();
        v.setOnes();
        col_err = std::numeric_limits<double>::infinity();
      }
    }
    if (last) {
      Vector rows, cols;
      out.primal_cost = engine.primal(wa.cwiseProduct(u), wb.cwiseProduct(v), rows, cols);
      if (o.log_domain) {
        for (Eigen::Index i = 0; i < n; ++i) out.f[i] += eps * std::log(u[i]);
        for (Eigen::Index j = 0; j < m; ++j) out.g[j] += eps * std::log(v[j]);
      } else {
        for (Eigen::Index i = 0; i < n; ++i) out.f[i] = eps * std::log(u[i]);
        for (Eigen::Index j = 0; j < m; ++j) out.g[j] = eps * std::log(v[j]);
      }
      err = (rows - wa).lpNorm<1>() + (cols - wb).lpNorm<1>();
      double reg = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (rows[i] > 0.0) reg += out.f[i] * rows[i];
      for (Eigen::Index j = 0; j < m; ++j)
        if (cols[j] > 0.0) reg += out.g[j] * cols[j];
      out.regularized_cost = reg;
    } else if (o.log_domain) {
      for (Eigen::Index i = 0; i < n; ++i) out.f[i] += eps * std::log(u[i]);
      for (Eigen::Index j = 0; j < m; ++j) out.g[j] += eps * std::log(v[j]);
    }
  }
  if (symmetric) out.g = out.f;
  out.epsilon = o.epsilon;
  out.iterations = iter;
  out.marginal_error = err;
  out.converged = err < o.tol;
  return out;
}

// ---------------------------------------------------------------------------
// Grid-to-grid: log-domain updates with the Gaussian kernel applied one axis
// at a time.

enum class AxisFactor { none, position, squared_gap };

// out[i] = LSE_j ( in[j] - |x_i - y_j|^2 / eps [+ log factor on one axis] )
// with `in` laid out on grid `from` and `out` on grid `to`.
struct AxisKernel {
  GridLayout from, to;
  int axis = 0;
  double eps = 0.0;
  AxisFactor factor = AxisFactor::none;
  Eigen::MatrixXd log_kernel;
  Eigen::MatrixXd kernel;
};

// The per-axis kernels depend only on the grids, the axis and epsilon, so
// repeated Sinkhorn iterations reuse them.
const AxisKernel& axis_kernel(const GridLayout& from, const GridLayout& to, int k, double eps, AxisFactor factor) {
  constexpr std::size_t kSlots = 8;
  thread_local std::vector<AxisKernel> cache;
  for (const auto& c : cache)
    if (c.axis == k && c.eps == eps && c.factor == factor && c.from == from && c.to == to) return c;
  const int nj = from.cells(k), ni = to.cells(k);
  AxisKernel c{from, to, k, eps, factor, Eigen::MatrixXd(ni, nj), Eigen::MatrixXd()};
  for (int i = 0; i < ni; ++i) {
    const double xi = to.axis_center(k, i);
    for (int j = 0; j < nj; ++j) {
      const double yj = from.axis_center(k, j);
      double e = -(xi - yj) * (xi - yj) / eps;
      if (factor == AxisFactor::position) e += std::log(yj - from.domain().lower(k));
      if (factor == AxisFactor::squared_gap) e += safe_log((xi - yj) * (xi - yj));
      c.log_kernel(i, j) = e;
    }
  }
  c.kernel = c.log_kernel.array().exp().matrix();
  if (cache.size() == kSlots) cache.erase(cache.begin());
  cache.push_back(std::move(c));
  return cache.back();
}

Vector separable_lse(const Vector& in, const GridLayout& from, const GridLayout& to, double eps,
                     int factor_axis = -1, AxisFactor factor = AxisFactor::none) {
  const int d = from.dim();
  std::vector<int> shape = from.resolution();
  Vector cur = in;
  for (int k = 0; k < d; ++k) {
    const int nj = shape[k];
    const int ni = to.cells(k);
    const AxisKernel& ak = axis_kernel(from, to, k, eps, factor_axis == k ? factor : AxisFactor::none);
    const Eigen::MatrixXd& kern = ak.log_kernel;
    const Eigen::MatrixXd& kexp = ak.kernel;
    Eigen::Index outer = 1, inner = 1;
    for (int q = 0; q < k; ++q) outer *= shape[q];
    for (int q = k + 1; q < d; ++q) inner *= shape[q];
    Vector next(outer * ni * inner);
    Vector fiber(nj), scaled(nj), sums(ni);
    for (Eigen::Index o = 0; o < outer; ++o) {
      for (Eigen::Index r = 0; r < inner; ++r) {
        double fmax = kNegInf;
        for (int j = 0; j < nj; ++j) {
          fiber[j] = cur[(o * nj + j) * inner + r];
          fmax = std::max(fmax, fiber[j]);
        }
        if (fmax == kNegInf) {
          for (int i = 0; i < ni; ++i) next[(o * ni + i) * inner + r] = kNegInf;
          continue;
        }
        // Shifted mat-vec; rows whose sum falls into the range where dropped
        // (underflowed) terms could matter are redone exactly.
        for (int j = 0; j < nj; ++j) scaled[j] = std::exp(fiber[j] - fmax);
        sums.noalias() = kexp * scaled;
        for (int i = 0; i < ni; ++i) {
          double value;
          if (sums[i] > 1e-200) {
            value = fmax + std::log(sums[i]);
          } else {
            double mx = kNegInf;
            for (int j = 0; j < nj; ++j) mx = std::max(mx, fiber[j] + kern(i, j));
            double sum = 0.0;
            if (mx > kNegInf)
              for (int j = 0; j < nj; ++j) {
                const double z = fiber[j] + kern(i, j) - mx;
                if (z > -746.0) sum += std::exp(z);
              }
            value = mx > kNegInf ? mx + std::log(sum) : kNegInf;
          }
          next[(o * ni + i) * inner + r] = value;
        }
      }
    }
    cur = std::move(next);
    shape[k] = ni;
  }
  return cur;
}

EntropicPotentials solve_grids(const DiscreteMeasure& a, const DiscreteMeasure& b, const SinkhornOptions& o,
                               const EntropicPotentials* warm, bool symmetric) {
  const GridLayout& ga = *a.grid;
  const GridLayout& gb = *b.grid;
  const Eigen::Index n = a.size(), m = b.size();
  const Vector la = log_weights(a.weights), lb = log_weights(b.weights);
  EntropicPotentials out;
  out.f = Vector::Zero(n);
  out.g = Vector::Zero(m);
  std::vector<double> schedule = epsilon_schedule(o);
  if (warm && warm->f.size() == n && warm->g.size() == m) {
    out.f = warm->f;
    out.g = warm->g;
    schedule = {o.epsilon};
  }
  int iter = 0;
  double err = std::numeric_limits<double>::infinity();
  Vector rows = a.weights;

  auto f_update = [&](double eps) {
    Vector in = lb + out.g / eps;
    return Vector(-eps * separable_lse(in, gb, ga, eps));
  };
  auto g_update = [&](double eps) {
    Vector in = la + out.f / eps;
    return Vector(-eps * separable_lse(in, ga, gb, eps));
  };

  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const double eps = schedule[s];
    const bool last = s + 1 == schedule.size();
    const double stage_tol = last ? o.tol : std::max(o.tol, 1e-3);
    int stage_iter = 0;
    double omega = o.relaxation > 0.0 ? o.relaxation : 1.0;
    RelaxationTuner tuner(o.relaxation == 0.0 && !symmetric);
    double col_err = 0.0;
    while (iter < o.max_iter) {
      Vector fnew = f_update(eps);
      if (stage_iter > 0) {
        // Row marginal of the current plan; the column part was measured at
        // the previous g-update (zero without relaxation).
        err = col_err;
        for (Eigen::Index i = 0; i < n; ++i) {
          rows[i] = a.weights[i] * std::exp((out.f[i] - fnew[i]) / eps);
          err += std::abs(rows[i] - a.weights[i]);
        }
        if (err < stage_tol) break;
        omega = tuner.next(err, omega);
      }
      if (symmetric) {
        out.f = 0.5 * (out.f + fnew);
        if (!out.f.allFinite()) throw NumericalError("sinkhorn: non-finite potentials");
        out.g = out.f;
        ++iter;
        ++stage_iter;
        continue;
      }
      out.f = (omega == 1.0 || stage_iter == 0) ? fnew : Vector((1.0 - omega) * out.f + omega * fnew);
      Vector gnew = g_update(eps);
      col_err = 0.0;
      if (omega != 1.0 && stage_iter > 0) {
        for (Eigen::Index j = 0; j < m; ++j)
          col_err += b.weights[j] * std::abs(std::exp((out.g[j] - gnew[j]) / eps) - 1.0);
        out.g = (1.0 - omega) * out.g + omega * gnew;
      } else {
        out.g = gnew;
      }
      if (!out.f.allFinite() || !out.g.allFinite()) throw NumericalError("sinkhorn: non-finite potentials");
      ++iter;
      ++stage_iter;
    }
  }
  const double eps = o.epsilon;
  // Column marginal after the final g-update is exact up to rounding; for the
  // symmetric solve both marginals equal `rows`.
  Vector cols = symmetric ? rows : b.weights;
  if (symmetric) err *= 2.0;
  out.regularized_cost = out.f.cwiseProduct(rows).sum() + out.g.cwiseProduct(cols).sum();
  // Primal cost: one extra separable pass per axis with the squared gap on
  // that axis folded into the kernel.
  double primal = 0.0;
  const Vector in = lb + out.g / eps;
  for (int k = 0; k < ga.dim(); ++k) {
    const Vector lse = separable_lse(in, gb, ga, eps, k, AxisFactor::squared_gap);
    for (Eigen::Index i = 0; i < n; ++i)
      if (a.weights[i] > 0.0) primal += a.weights[i] * std::exp(out.f[i] / eps + lse[i]);
  }
  out.primal_cost = primal;
  out.epsilon = eps;
  out.iterations = iter;
  out.marginal_error = err;
  out.converged = err < o.tol;
  return out;
}

bool both_grids(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  return a.grid.has_value() && b.grid.has_value();
}

}  // namespace

DiscreteMeasure DiscreteMeasure::from_ensemble(const ParticleEnsemble& ensemble) {
  DiscreteMeasure m;
  m.support = ensemble.positions;
  m.weights = Vector::Constant(ensemble.size(), 1.0 / static_cast<double>(ensemble.size()));
  return m;
}

DiscreteMeasure DiscreteMeasure::from_grid(const GridDensity& density) {
  DiscreteMeasure m;
  m.support = density.layout.centers();
  m.weights = density.cell_masses();
  const double total = m.weights.sum();
  if (!(total > 0.0)) throw InvalidArgument("DiscreteMeasure::from_grid: zero mass");
  m.weights /= total;
  m.grid = density.layout;
  return m;
}

EntropicPotentials sinkhorn(const DiscreteMeasure& a, const DiscreteMeasure& b, const SinkhornOptions& options,
                            const EntropicPotentials* warm_start) {
  validate(a, b, options);
  if (both_grids(a, b) && options.log_domain) return solve_grids(a, b, options, warm_start, false);
  return solve_points(a, b, options, warm_start, false);
}

void require_converged(const EntropicPotentials& p, const char* context) {
  if (p.converged) return;
  std::ostringstream msg;
  msg << context << ": Sinkhorn did not converge (marginal error " << p.marginal_error << " after " << p.iterations
      << " iterations at epsilon " << p.epsilon << ")";
  throw NumericalError(msg.str());
}

SinkhornDivergence sinkhorn_divergence(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                       const SinkhornOptions& options) {
  validate(a, b, options);
  SinkhornDivergence out;
  const bool grids = both_grids(a, b) && options.log_domain;
  out.ab = grids ? solve_grids(a, b, options, nullptr, false) : solve_points(a, b, options, nullptr, false);
  out.aa = grids ? solve_grids(a, a, options, nullptr, true) : solve_points(a, a, options, nullptr, true);
  out.bb = grids ? solve_grids(b, b, options, nullptr, true) : solve_points(b, b, options, nullptr, true);
  out.divergence = out.ab.regularized_cost - 0.5 * (out.aa.regularized_cost + out.bb.regularized_cost);
  return out;
}

namespace {

// Row sums of the implied plan and the barycentric projection at points x.
void project_rows(const Points& x, const Vector* source_weights, const EntropicPotentials& p,
                  const DiscreteMeasure& target, Vector* row_sums, Points* projection) {
  const Eigen::Index n = x.rows(), m = target.size();
  const int d = target.dim();
  if (x.cols() != d) throw InvalidArgument("sinkhorn projection: dimension mismatch");
  if (p.g.size() != m) throw InvalidArgument("sinkhorn projection: potentials do not match the target");
  if (row_sums && (!source_weights || p.f.size() != n))
    throw InvalidArgument("sinkhorn projection: potentials do not match the source");
  const double eps = p.epsilon;
  const Vector lb = log_weights(target.weights);
  if (row_sums) row_sums->resize(n);
  if (projection) projection->resize(n, d);
  std::vector<double> e(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = kNegInf;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double c = (x.row(i) - target.support.row(j)).squaredNorm();
      e[j] = lb[j] + (p.g[j] - c) / eps;
      mx = std::max(mx, e[j]);
    }
    double s = 0.0;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double w = std::exp(e[j] - mx);
      s += w;
      if (projection) acc += w * target.support.row(j);
    }
    if (row_sums) (*row_sums)[i] = (*source_weights)[i] * std::exp(p.f[i] / eps + mx) * s;
    if (projection) projection->row(i) = acc / s;
  }
}

}  // namespace

Vector plan_row_sums(const Points& x, const Vector& source_weights, const EntropicPotentials& potentials,
                     const DiscreteMeasure& target) {
  Vector rows;
  project_rows(x, &source_weights, potentials, target, &rows, nullptr);
  return rows;
}

Points barycentric_projection(const Points& x, const EntropicPotentials& potentials, const DiscreteMeasure& target) {
  Points t;
  project_rows(x, nullptr, potentials, target, nullptr, &t);
  return t;
}

Points sinkhorn_velocity(const Points& x, const EntropicPotentials& potentials, const DiscreteMeasure& target,
                         double stale_tol) {
  const Vector w = Vector::Constant(x.rows(), 1.0 / static_cast<double>(x.rows()));
  Vector rows;
  Points t;
  project_rows(x, &w, potentials, target, &rows, &t);
  const double err = (rows - w).lpNorm<1>();
  if (!(err <= stale_tol)) {
    std::ostringstream msg;
    msg << "sinkhorn_velocity: potentials are stale for these positions (source marginal error " << err
        << " > " << stale_tol << "); re-solve";
    throw NumericalError(msg.str());
  }
  return t - x;
}

Points grid_barycentric_projection(const DiscreteMeasure& source, const EntropicPotentials& p,
                                   const DiscreteMeasure& target) {
  if (!source.grid || !target.grid) throw InvalidArgument("grid_barycentric_projection: both measures must be grids");
  const GridLayout& ga = *source.grid;
  const GridLayout& gb = *target.grid;
  const double eps = p.epsilon;
  const Vector in = log_weights(target.weights) + p.g / eps;
  const Vector den = separable_lse(in, gb, ga, eps);
  Points t(source.size(), ga.dim());
  for (int k = 0; k < ga.dim(); ++k) {
    const Vector num = separable_lse(in, gb, ga, eps, k, AxisFactor::position);
    for (Eigen::Index i = 0; i < source.size(); ++i) t(i, k) = gb.domain().lower(k) + std::exp(num[i] - den[i]);
  }
  return t;
}

TransportPlan dense_plan(const DiscreteMeasure& a, const DiscreteMeasure& b, const EntropicPotentials& p) {
  TransportPlan plan;
  plan.form = TransportPlan::Form::dense;
  plan.epsilon = p.epsilon;
  plan.coupling.resize(a.size(), b.size());
  double cost = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double c = (a.support.row(i) - b.support.row(j)).squaredNorm();
      const double pij = a.weights[i] * b.weights[j] * std::exp((p.f[i] + p.g[j] - c) / p.epsilon);
      plan.coupling(i, j) = pij;
      cost += pij * c;
    }
  }
  plan.cost = cost;
  return plan;
}

void write_potentials(std::ostream& out, const EntropicPotentials& p) {
  out << std::setprecision(17);
  out << "# epsilon=" << p.epsilon << " iterations=" << p.iterations << " marginalError=" << p.marginal_error << '\n';
  out << "index,f,g\n";
  const Eigen::Index n = std::max(p.f.size(), p.g.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    out << i << ',';
    if (i < p.f.size()) out << p.f[i];
    out << ',';
    if (i < p.g.size()) out << p.g[i];
    out << '\n';
  }
}

}  // namespace dissflow
