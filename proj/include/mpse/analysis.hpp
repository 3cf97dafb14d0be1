#ifndef MPSE_ANALYSIS_HPP
#define MPSE_ANALYSIS_HPP

#include <atomic>
#include <thread>
#include <vector>

#include "mpse/matrix_ops.hpp"
#include "mpse/process_sim.hpp"
#include "mpse/protocol.hpp"

namespace mpse {

inline Matrix stacked_C(const std::vector<PartyModel>& parties) {
  Eigen::Index m = 0, n = parties.at(0).C.cols();
  for (const auto& p : parties) m += p.m();
  Matrix C(m, n);
  Eigen::Index row = 0;
  for (const auto& p : parties) {
    C.middleRows(row, p.m()) = p.C;
    row += p.m();
  }
  return C;
}

inline Matrix stacked_R(const std::vector<PartyModel>& parties) {
  Eigen::Index m = 0;
  for (const auto& p : parties) m += p.m();
  Matrix R = Matrix::Zero(m, m);
  Eigen::Index row = 0;
  for (const auto& p : parties) {
    R.block(row, row, p.m(), p.m()) = p.R;
    row += p.m();
  }
  return R;
}

/// 0/1 selector with B_i y = y_i for the stacked measurement vector.
inline Matrix selector_B(const std::vector<PartyModel>& parties, std::size_t i) {
  Eigen::Index m = 0;
  for (const auto& p : parties) m += p.m();
  Eigen::Index offset = 0;
  for (std::size_t j = 0; j < i; ++j) offset += parties[j].m();
  Matrix B = Matrix::Zero(parties.at(i).m(), m);
  B.block(0, offset, parties[i].m(), parties[i].m()).setIdentity();
  return B;
}

inline Matrix error_map_M(const PartyModel& party) {
  if (!party.K) throw ContractError("error_map_M: gain not set");
  Eigen::Index n = party.C.cols();
  return Matrix::Identity(n, n) - (*party.K) * party.C;
}

inline Matrix noise_gain_S(const PartyModel& party) {
  if (!party.K) throw ContractError("noise_gain_S: gain not set");
  return (*party.K) * party.R * party.K->transpose();
}

/// Stability functional of the fused estimator: ρ((1/N) Σ (I - K_i C_i) A).
inline double stability_margin(const std::vector<PartyModel>& parties, const Matrix& A) {
  Matrix sum = Matrix::Zero(A.rows(), A.cols());
  for (const auto& p : parties) sum += error_map_M(p);
  return spectral_radius(sum * A / static_cast<double>(parties.size()));
}

struct CovarianceReport {
  std::vector<double> tr_deterministic;  // index k, k = 0..T
  std::vector<double> tr_empirical;      // index k, k = 0..T (empty if no MC requested)
  int runs = 0;
  std::uint64_t seed = 0;
};

/// Error-covariance recursion of the fused estimate:
/// P̄(k) = (1/N²)(ΣM_i)(A P̄(k-1) Aᵀ + Q)(ΣM_iᵀ) + (1/N²) ΣS_i.
inline std::vector<Matrix> covariance_recursion_matrices(const Matrix& P0,
                                                         const std::vector<PartyModel>& parties,
                                                         const Matrix& A, const Matrix& Q, int T) {
  require_symmetric(P0, "covariance_recursion.P0");
  const double N = static_cast<double>(parties.size());
  Matrix Msum = Matrix::Zero(A.rows(), A.cols());
  Matrix Ssum = Matrix::Zero(A.rows(), A.cols());
  for (const auto& p : parties) {
    Msum += error_map_M(p);
    Ssum += noise_gain_S(p);
  }
  std::vector<Matrix> seq;
  seq.reserve(static_cast<std::size_t>(T) + 1);
  Matrix P = symmetrize(P0);
  seq.push_back(P);
  for (int k = 1; k <= T; ++k) {
    P = (Msum * (A * P * A.transpose() + Q) * Msum.transpose() + Ssum) / (N * N);
    P = symmetrize(P);
    seq.push_back(P);
  }
  return seq;
}

inline CovarianceReport covariance_recursion(const Matrix& P0,
                                             const std::vector<PartyModel>& parties,
                                             const Matrix& A, const Matrix& Q, int T) {
  CovarianceReport rep;
  for (const auto& P : covariance_recursion_matrices(P0, parties, A, Q, T))
    rep.tr_deterministic.push_back(P.trace());
  return rep;
}

/// φ(Y, X) = (A - AYC) X (A - AYC)ᵀ + Q + AYRYᵀAᵀ.
inline Matrix phi(const Matrix& Y, const Matrix& X, const Matrix& A, const Matrix& Q,
                  const Matrix& C, const Matrix& R) {
  Matrix F = A - A * Y * C;
  return symmetrize(F * X * F.transpose() + Q + A * Y * R * Y.transpose() * A.transpose());
}

struct DareSolution {
  Matrix P_pri;     // positive definite DARE fixed point
  Matrix K_star;    // optimal steady-state Kalman gain
  double residual;  // ||g(P_pri) - P_pri||_F
  int iterations;
};

inline Matrix dare_step(const Matrix& X, const Matrix& A, const Matrix& C, const Matrix& Q,
                        const Matrix& R) {
  Matrix inner = C * X * C.transpose() + R;
  Matrix gain = X * C.transpose() * inner.inverse();
  return symmetrize(A * X * A.transpose() + Q - A * gain * C * X * A.transpose());
}

inline DareSolution dare_solve(const Matrix& A, const Matrix& C, const Matrix& Q, const Matrix& R,
                               double tol = 1e-12, int max_iters = 100000) {
  Matrix X = symmetrize(Q);
  int it = 0;
  for (; it < max_iters; ++it) {
    Matrix next = dare_step(X, A, C, Q, R);
    double diff = (next - X).norm();
    X = next;
    if (diff < tol) break;
  }
  if (it >= max_iters)
    throw NumericError("dare_solve: no convergence (pair may not be detectable)");
  DareSolution sol;
  sol.P_pri = X;
  sol.K_star = X * C.transpose() * (C * X * C.transpose() + R).inverse();
  sol.residual = (dare_step(X, A, C, Q, R) - X).norm();
  sol.iterations = it + 1;
  return sol;
}

struct Lemma1Result {
  Matrix Upsilon;  // X̃⁻¹ A K̃
  Matrix Delta;    // X̃⁻¹
  Matrix lmi;      // the 4-block certificate matrix
  double lmi_min_eigenvalue;
};

/// Certificate transform: X̃ ⪰ φ(K̃, X̃) with X̃ ≻ 0 holds iff the
/// returned block matrix is PSD (with Δ̃ = X̃⁻¹, Υ̃ = X̃⁻¹AK̃).
inline Lemma1Result lemma1_transform(const Matrix& K, const Matrix& X, const Matrix& A,
                                     const Matrix& Q, const Matrix& C, const Matrix& R) {
  require_symmetric(X, "lemma1_transform.X");
  if (!is_positive_definite(X, 0.0)) throw ContractError("lemma1_transform: X must be PD");
  if (std::abs(A.determinant()) < 1e-300)
    throw ContractError("lemma1_transform: A must be nonsingular");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = C.rows();
  Matrix Delta = X.inverse();
  Matrix Upsilon = Delta * A * K;
  Matrix sqrtR = sqrt_psd(R);
  Matrix sqrtQ = sqrt_psd(Q);
  Matrix W = Matrix::Zero(3 * n + m, 3 * n + m);
  W.block(0, 0, n, n) = Delta;
  W.block(0, n, n, n) = Delta * A - Upsilon * C;
  W.block(0, 2 * n, n, m) = Upsilon * sqrtR;
  W.block(0, 2 * n + m, n, n) = Delta * sqrtQ;
  W.block(n, n, n, n) = Delta;
  W.block(2 * n, 2 * n, m, m) = Matrix::Identity(m, m);
  W.block(2 * n + m, 2 * n + m, n, n) = Matrix::Identity(n, n);
  W.block(n, 0, n, n) = W.block(0, n, n, n).transpose();
  W.block(2 * n, 0, m, n) = W.block(0, 2 * n, n, m).transpose();
  W.block(2 * n + m, 0, n, n) = W.block(0, 2 * n + m, n, n).transpose();
  Lemma1Result out{Upsilon, Delta, W, min_eigenvalue(W)};
  return out;
}

/// Monte-Carlo estimation error: average over runs of ||x(k) - x̄(k)||²
/// at every k, using the plaintext protocol mode.
inline CovarianceReport monte_carlo_eval(const SimConfig& config, int runs, int workers = 0) {
  config.validate();
  if (runs < 1) throw ContractError("monte_carlo_eval: runs must be >= 1");
  for (const auto& p : config.parties)
    if (!p.K) throw ContractError("monte_carlo_eval: gains must be set");
  if (workers <= 0)
    workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, runs);

  NoiseShaper shaper(config);
  const int T = config.horizon;
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(workers),
                                           std::vector<double>(static_cast<std::size_t>(T) + 1));
  std::atomic<int> next_run{0};
  auto worker_fn = [&](int w) {
    std::vector<PartyState> states(config.parties.size());
    for (;;) {
      int run = next_run.fetch_add(1);
      if (run >= runs) break;
      Realization real = sample_realization(config, shaper, static_cast<std::uint64_t>(run));
      // plaintext fusion loop, inlined to skip per-run trace storage
      for (std::size_t i = 0; i < config.parties.size(); ++i)
        states[i] = {&config.parties[i], real.xhat0, Vector()};
      partial[static_cast<std::size_t>(w)][0] += (real.x0 - real.xhat0).squaredNorm();
      Vector xbar;
      for (int k = 1; k <= T; ++k) {
        xbar = Vector::Zero(config.system.n());
        for (std::size_t i = 0; i < states.size(); ++i)
          xbar += local_predict_update(states[i],
                                       real.y[static_cast<std::size_t>(k - 1)][i],
                                       config.system.A);
        xbar /= static_cast<double>(states.size());
        for (auto& st : states) st.xhat = xbar;
        partial[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)] +=
            (real.x[static_cast<std::size_t>(k - 1)] - xbar).squaredNorm();
      }
    }
  };
  std::vector<std::thread> threads;
  for (int w = 1; w < workers; ++w) threads.emplace_back(worker_fn, w);
  worker_fn(0);
  for (auto& t : threads) t.join();

  CovarianceReport rep;
  rep.runs = runs;
  rep.seed = config.seed;
  rep.tr_empirical.resize(static_cast<std::size_t>(T) + 1, 0.0);
  for (const auto& p : partial)
    for (std::size_t k = 0; k < p.size(); ++k) rep.tr_empirical[k] += p[k] / runs;
  return rep;
}

}  // namespace mpse

#endif  // MPSE_ANALYSIS_HPP
