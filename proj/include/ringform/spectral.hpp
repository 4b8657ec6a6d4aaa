#pragma once

#include "ringform/common.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace ringform {

enum class Strategy { S1, S2 };

inline const char* to_string(Strategy s) { return s == Strategy::S1 ? "S1" : "S2"; }

/// Gain alpha and sampling interval dt of the chain controllers.
struct EstimationParams {
  double alpha = 0.5;
  double dt = 0.01;

  EstimationParams() = default;
  EstimationParams(double alpha_, double dt_) : alpha(alpha_), dt(dt_) {
    require(alpha > 0.0 && std::isfinite(alpha), "alpha must be positive");
    require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
  }

  /// Composite parameter alpha*dt/2 that all closed forms depend on.
  double beta() const noexcept { return alpha * dt / 2.0; }
  double alpha_dt() const noexcept { return alpha * dt; }
};

inline void require_beta(double beta) {
  require(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1), got " + std::to_string(beta));
}

enum class MatrixKind { A, Ar, Af, As };

/// Dense state matrix plus its input map.
///   A, A_r : input is b (last velocity slot 0.5), driven by the virtual robot's velocity.
///   A_f    : input is B_f (2n x 3), driven by u_f = [q_anchor, v_anchor, l*].
///   A_s    : no input map (cascade of m chains).
struct SystemMatrices {
  MatrixKind kind = MatrixKind::A;
  std::size_t order = 0;  // n' for A/A_r, robots per chain for A_f/A_s
  std::size_t chains = 1;
  Matrix dense;
  Matrix input;
  EstimationParams params;
};

namespace detail {

inline Matrix tridiag(std::size_t n, double diag, double off) {
  Matrix t = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    t(i, i) = diag;
    if (i + 1 < n) t(i, i + 1) = t(i + 1, i) = off;
  }
  return t;
}

}  // namespace detail

/// Position-coupling block: -1 on the diagonal, 0.5 off-diagonal.
inline Matrix chain_a21(std::size_t n) { return detail::tridiag(n, -1.0, 0.5); }
/// Velocity-averaging block: 0 on the diagonal, 0.5 off-diagonal.
inline Matrix chain_a22(std::size_t n) { return detail::tridiag(n, 0.0, 0.5); }

/// State matrix of the latest-measurement estimator, s = [q_1..q_n', v_1..v_n'].
inline SystemMatrices build_A(std::size_t n_prime, const EstimationParams& p) {
  require(n_prime >= 1, "chain order n' must be at least 1");
  const auto n = static_cast<Eigen::Index>(n_prime);
  SystemMatrices out;
  out.kind = MatrixKind::A;
  out.order = n_prime;
  out.params = p;
  out.dense = Matrix::Zero(2 * n, 2 * n);
  out.dense.topLeftCorner(n, n).setIdentity();
  out.dense.topRightCorner(n, n) = p.dt * Matrix::Identity(n, n);
  out.dense.bottomLeftCorner(n, n) = p.alpha * chain_a21(n_prime);
  out.dense.bottomRightCorner(n, n) = chain_a22(n_prime);
  out.input = Matrix::Zero(2 * n, 1);
  out.input(2 * n - 1, 0) = 0.5;
  return out;
}

/// State matrix of the two-instant estimator, s_r = [q, v(k-1), v(k)].
inline SystemMatrices build_Ar(std::size_t n_prime, const EstimationParams& p) {
  require(n_prime >= 1, "chain order n' must be at least 1");
  const auto n = static_cast<Eigen::Index>(n_prime);
  SystemMatrices out;
  out.kind = MatrixKind::Ar;
  out.order = n_prime;
  out.params = p;
  out.dense = Matrix::Zero(3 * n, 3 * n);
  out.dense.block(0, 0, n, n).setIdentity();
  out.dense.block(0, 2 * n, n, n) = p.dt * Matrix::Identity(n, n);
  out.dense.block(n, 2 * n, n, n).setIdentity();
  out.dense.block(2 * n, 0, n, n) = p.alpha * chain_a21(n_prime);
  out.dense.block(2 * n, n, n, n) = chain_a22(n_prime);
  out.input = Matrix::Zero(3 * n, 1);
  out.input(3 * n - 1, 0) = 0.5;
  return out;
}

/// The nilpotent correction A_d that turns A into the formation chain matrix.
inline Matrix formation_correction(std::size_t n_robots, const EstimationParams& p) {
  const auto n = static_cast<Eigen::Index>(n_robots);
  Matrix d = Matrix::Zero(2 * n, 2 * n);
  d(2 * n - 1, n - 2) = 0.5 * p.alpha;
  d(2 * n - 1, 2 * n - 2) = 0.5;
  return d;
}

/// Formation chain matrix A_f = A + A_d with input map B_f for u_f = [q_anchor, v_anchor, l*].
inline SystemMatrices build_Af(std::size_t n_robots, const EstimationParams& p) {
  require(n_robots >= 2, "formation chain needs at least 2 robots");
  const auto n = static_cast<Eigen::Index>(n_robots);
  SystemMatrices out = build_A(n_robots, p);
  out.kind = MatrixKind::Af;
  out.dense += formation_correction(n_robots, p);
  out.input = Matrix::Zero(2 * n, 3);
  out.input(n, 0) = 0.5 * p.alpha;
  out.input(n, 1) = 0.5;
  out.input(2 * n - 1, 2) = -p.alpha;
  return out;
}

/// Coupling from chain i's terminal vertex into chain i+1's first follower.
inline Matrix cascade_coupling(std::size_t n_robots, const EstimationParams& p) {
  const auto n = static_cast<Eigen::Index>(n_robots);
  Matrix c = Matrix::Zero(2 * n, 2 * n);
  c(n, n - 1) = 0.5 * p.alpha;
  c(n, 2 * n - 1) = 0.5;
  return c;
}

/// Whole-ring cascade: block lower triangular, A_f on the diagonal.
inline SystemMatrices build_As(std::size_t n_robots, std::size_t m, const EstimationParams& p) {
  require(m >= 1, "cascade needs at least one chain");
  const Matrix af = build_Af(n_robots, p).dense;
  const Matrix sd = cascade_coupling(n_robots, p);
  const auto b = static_cast<Eigen::Index>(2 * n_robots);
  SystemMatrices out;
  out.kind = MatrixKind::As;
  out.order = n_robots;
  out.chains = m;
  out.params = p;
  out.dense = Matrix::Zero(b * static_cast<Eigen::Index>(m), b * static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m); ++i) {
    out.dense.block(i * b, i * b, b, b) = af;
    if (i > 0) out.dense.block(i * b, (i - 1) * b, b, b) = sd;
  }
  return out;
}

namespace detail {

// Tarjan's algorithm on the nonzero pattern. Returned components are the
// irreducible diagonal blocks of a symmetric permutation to block triangular form.
inline std::vector<std::vector<Eigen::Index>> strongly_connected_blocks(const Matrix& a) {
  const Eigen::Index n = a.rows();
  std::vector<Eigen::Index> index(n, -1), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<Eigen::Index> stack;
  std::vector<std::vector<Eigen::Index>> comps;
  Eigen::Index counter = 0;

  struct Frame {
    Eigen::Index v;
    Eigen::Index next;
  };
  std::vector<Frame> call;

  for (Eigen::Index root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      bool descended = false;
      while (f.next < n) {
        const Eigen::Index w = f.next++;
        if (w == f.v || a(f.v, w) == 0.0) continue;
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) low[f.v] = std::min(low[f.v], index[w]);
      }
      if (descended) continue;
      const Eigen::Index v = f.v;
      if (low[v] == index[v]) {
        std::vector<Eigen::Index> comp;
        Eigen::Index w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
      }
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
    }
  }
  return comps;
}

}  // namespace detail

/// All (complex) eigenvalues of a square real matrix.
///
/// The matrix is first split into its irreducible blocks (strongly connected
/// components of the nonzero pattern); each block is reduced to real Schur form
/// by Eigen's Hessenberg-QR iteration. Splitting keeps defective cascades such as
/// A_s accurate: their repeated eigenvalues come from separate blocks instead of
/// a perturbed Jordan cluster.
inline std::vector<std::complex<double>> eigenvalues(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw InvalidArgument("eigenvalues: matrix is " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + ", not square");
  }
  if (!a.allFinite()) throw InvalidArgument("eigenvalues: non-finite entry");

  std::vector<std::complex<double>> out;
  out.reserve(static_cast<std::size_t>(a.rows()));
  for (const auto& comp : detail::strongly_connected_blocks(a)) {
    const auto k = static_cast<Eigen::Index>(comp.size());
    if (k == 1) {
      out.emplace_back(a(comp[0], comp[0]), 0.0);
      continue;
    }
    Matrix block(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) block(i, j) = a(comp[i], comp[j]);
    Eigen::EigenSolver<Matrix> solver(block, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
      throw NumericalError("eigenvalues: QR iteration did not converge on a block of order " +
                           std::to_string(k));
    }
    for (Eigen::Index i = 0; i < k; ++i) out.push_back(solver.eigenvalues()(i));
  }
  return out;
}

inline double spectral_radius(const Matrix& a) {
  double rho = 0.0;
  for (const auto& l : eigenvalues(a)) rho = std::max(rho, std::abs(l));
  return rho;
}

/// Sufficient bound on alpha*dt for rho(A) < 1 (S1) or rho(A_r) < 1 (S2).
inline double stability_bound(std::size_t n_prime, Strategy s) {
  require(n_prime >= 1, "chain order n' must be at least 1");
  const double c = std::cos(std::numbers::pi / static_cast<double>(n_prime + 1));
  const double c2 = c * c;
  return s == Strategy::S1 ? (1.0 - c2) / (3.0 - c2) : (1.0 - c2) / (5.0 + c2);
}

inline bool satisfies_bound(std::size_t n_prime, const EstimationParams& p, Strategy s) {
  return p.alpha_dt() < stability_bound(n_prime, s);
}

// ---------------------------------------------------------------------------
// Closed forms for the steady-state readout.
//
// M(d)   : leading d x d block of I + A22 - beta*A21   (diag 1+beta, off (1-beta)/2)
// M_r(d) : tridiagonal Toeplitz with diag 1-beta, off (1-beta)/2
// f(d), g(d) are the last diagonal entries of M(d)^-1 and M_r(d)^-1.
// ---------------------------------------------------------------------------

/// Fixed points of the f recursion, rho_1 > rho_2.
inline std::pair<double, double> f_fixed_points(double beta) {
  require_beta(beta);
  const double sq = std::sqrt(beta);
  const double den = (1.0 - beta) * (1.0 - beta);
  return {(2.0 * (1.0 + beta) + 4.0 * sq) / den, (2.0 * (1.0 + beta) - 4.0 * sq) / den};
}

inline double f_recursive(std::size_t d, double beta) {
  require(d >= 1, "order d must be at least 1");
  require_beta(beta);
  const double c = (1.0 - beta) * (1.0 - beta) / 4.0;
  double f = 1.0 / (1.0 + beta);
  for (std::size_t i = 2; i <= d; ++i) f = 1.0 / (1.0 + beta - c * f);
  return f;
}

/// Mobius coordinate (f - rho_1)/(f - rho_2), geometric in d.
inline double f_bar(double f, double beta) {
  const auto [r1, r2] = f_fixed_points(beta);
  return (f - r1) / (f - r2);
}

inline double f_closed(std::size_t d, double beta) {
  require(d >= 1, "order d must be at least 1");
  require_beta(beta);
  const auto [r1, r2] = f_fixed_points(beta);
  const double f1 = 1.0 / (1.0 + beta);
  const double f2 = (1.0 + beta) / ((1.0 + beta) * (1.0 + beta) - (1.0 - beta) * (1.0 - beta) / 4.0);
  const double b1 = f_bar(f1, beta);
  const double b2 = f_bar(f2, beta);
  const double bd = b1 * std::pow(b2 / b1, static_cast<double>(d - 1));
  return (r1 - bd * r2) / (1.0 - bd);
}

inline double g_recursive(std::size_t d, double beta) {
  require(d >= 1, "order d must be at least 1");
  require_beta(beta);
  const double c = (1.0 - beta) * (1.0 - beta) / 4.0;
  double g = 1.0 / (1.0 - beta);
  for (std::size_t i = 2; i <= d; ++i) g = 1.0 / (1.0 - beta - c * g);
  return g;
}

inline double g_closed(std::size_t d, double beta) {
  require(d >= 1, "order d must be at least 1");
  require_beta(beta);
  const double dd = static_cast<double>(d);
  return 2.0 * dd / ((dd + 1.0) * (1.0 - beta));
}

enum class MVariant { M, Mr };

inline Matrix build_M(std::size_t d, double beta, MVariant v) {
  require(d >= 1, "order d must be at least 1");
  require_beta(beta);
  return v == MVariant::M ? detail::tridiag(d, 1.0 + beta, (1.0 - beta) / 2.0)
                          : detail::tridiag(d, 1.0 - beta, (1.0 - beta) / 2.0);
}

/// Three-term determinant recursion with |M(0)| = 1.
inline double det_M_recursive(std::size_t d, double beta, MVariant v) {
  require(d >= 1, "order d must be at least 1");
  require_beta(beta);
  const double diag = v == MVariant::M ? 1.0 + beta : 1.0 - beta;
  const double c = (1.0 - beta) * (1.0 - beta) / 4.0;
  double prev = 1.0;
  double cur = diag;
  for (std::size_t i = 2; i <= d; ++i) {
    const double next = diag * cur - c * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

inline double det_M_closed(std::size_t d, double beta, MVariant v) {
  require(d >= 1, "order d must be at least 1");
  require_beta(beta);
  const double dd = static_cast<double>(d);
  if (v == MVariant::Mr) return (dd + 1.0) * std::pow((1.0 - beta) / 2.0, dd);
  const double sq = std::sqrt(beta);
  const double m1 = (2.0 * sq + beta + 1.0) / (4.0 * sq) * std::pow((1.0 + beta) / 2.0 + sq, dd);
  const double m2 = (2.0 * sq - beta - 1.0) / (4.0 * sq) * std::pow((1.0 + beta) / 2.0 - sq, dd);
  return m1 + m2;
}

/// Steady ||v_n'|| / ||v_{n'+1}|| under the latest-measurement estimator.
inline double steady_ratio_s1(std::size_t n_prime, double beta) { return f_closed(n_prime, beta) / 2.0; }

/// Steady ||v_n'|| / ||v_{n'+1}|| under the two-instant estimator. The Schur
/// block of (I + A_r)^-1 is tridiagonal with diag 1+beta and off-diagonal
/// -(1+beta)/2, hence n'/((n'+1)(1+beta)).
inline double steady_ratio_s2(std::size_t n_prime, double beta) {
  require(n_prime >= 1, "chain order n' must be at least 1");
  require_beta(beta);
  const double n = static_cast<double>(n_prime);
  return n / ((n + 1.0) * (1.0 + beta));
}

inline double steady_ratio(std::size_t n_prime, double beta, Strategy s) {
  return s == Strategy::S1 ? steady_ratio_s1(n_prime, beta) : steady_ratio_s2(n_prime, beta);
}

/// Converged positions/velocities of one formation chain.
struct ChainEquilibrium {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
};

/// Solves (I - A_f) s = B_f u_f per axis. Throws InvalidArgument if A_f is not Schur.
inline ChainEquilibrium equilibrium_limit(const SystemMatrices& af, const Vec2& anchor_q,
                                          const Vec2& anchor_v, const Vec2& l_star) {
  require(af.kind == MatrixKind::Af, "equilibrium_limit expects an A_f system");
  const double rho = spectral_radius(af.dense);
  if (!(rho < 1.0)) {
    throw InvalidArgument("A_f is not Schur (spectral radius " + std::to_string(rho) + ")");
  }
  const auto n = static_cast<Eigen::Index>(af.order);
  const Matrix lhs = Matrix::Identity(2 * n, 2 * n) - af.dense;
  Eigen::PartialPivLU<Matrix> lu(lhs);
  ChainEquilibrium eq;
  eq.positions.assign(af.order, Vec2::Zero());
  eq.velocities.assign(af.order, Vec2::Zero());
  for (int axis = 0; axis < 2; ++axis) {
    Vector u(3);
    u << anchor_q[axis], anchor_v[axis], l_star[axis];
    const Vector s = lu.solve(af.input * u);
    for (Eigen::Index j = 0; j < n; ++j) {
      eq.positions[j][axis] = s(j);
      eq.velocities[j][axis] = s(n + j);
    }
  }
  return eq;
}

}  // namespace ringform
