#ifndef MPSE_GAIN_DESIGN_HPP
#define MPSE_GAIN_DESIGN_HPP

#include <optional>
#include <string>
#include <vector>

#include "mpse/analysis.hpp"
#include "mpse/matrix_ops.hpp"
#include "mpse/process_sim.hpp"
#include "mpse/protocol.hpp"
#include "mpse/sdp_kernel.hpp"

namespace mpse {

enum class NormChoice { Frobenius, Spectral };

enum class DesignMethod { NormRelax, AdmmStabilize, AdmmMmse };

struct DesignResult {
  DesignMethod method = DesignMethod::NormRelax;
  std::vector<Matrix> gains;           // K_i per party
  Matrix K;                            // (1/N) [K_1 ... K_N]
  double rho = 0.0;                    // achieved ρ((1/N) Σ M_i A)
  bool accepted = false;
  std::vector<double> history;         // ρ per iteration, or ||K^t - K*||_F per iteration
  double average_norm = 0.0;           // norm-relaxation: secure average of ||M_i A||
  std::vector<double> party_norms;     // norm-relaxation: per-party ||M_i A||
  Matrix final_H;                      // ADMM methods: last cloud H (MMSE: P = H⁻¹)
};

inline Matrix concat_gains(const std::vector<Matrix>& gains) {
  Eigen::Index n = gains.at(0).rows();
  Eigen::Index m = 0;
  for (const auto& g : gains) m += g.cols();
  Matrix K(n, m);
  Eigen::Index col = 0;
  for (const auto& g : gains) {
    K.middleCols(col, g.cols()) = g;
    col += g.cols();
  }
  return K / static_cast<double>(gains.size());
}

inline double achieved_rho(const std::vector<PartyModel>& parties,
                           const std::vector<Matrix>& gains, const Matrix& A) {
  Matrix sum = Matrix::Zero(A.rows(), A.cols());
  for (std::size_t i = 0; i < parties.size(); ++i)
    sum += Matrix::Identity(A.rows(), A.cols()) - gains[i] * parties[i].C;
  return spectral_radius(sum * A / static_cast<double>(parties.size()));
}

// --- norm relaxation (per-party local step of Design Method I) ---

namespace detail {

/// Feasibility of || (I - X C) A ||_2 <= t as the LMI
/// [ tI, (I-XC)A ; *, tI ] >= 0, decided by the barrier kernel's
/// phase-1 search for a strictly interior point.
inline std::optional<Matrix> spectral_norm_feasible(const Matrix& A, const Matrix& C, double t) {
  const Eigen::Index n = A.rows();
  AffinePsdProblem prob;
  prob.blocks.push_back({"X", n, C.rows(), false});
  prob.targets.push_back({"X", Matrix::Zero(n, C.rows()), 1e-8});
  AffineConstraint con;
  con.name = "norm-bound";
  con.size = 2 * n;
  con.margin = 0.0;
  con.expr = [A, C, t, n](const BlockValues& v) {
    Matrix M = (Matrix::Identity(n, n) - v.at("X") * C) * A;
    Matrix W = Matrix::Zero(2 * n, 2 * n);
    W.block(0, 0, n, n) = t * Matrix::Identity(n, n);
    W.block(n, n, n, n) = t * Matrix::Identity(n, n);
    W.block(0, n, n, n) = M;
    W.block(n, 0, n, n) = M.transpose();
    return W;
  };
  prob.constraints.push_back(std::move(con));
  PsdKernel kernel(std::move(prob));
  KernelOptions opts;
  opts.max_iters = 4000;
  try {
    KernelSolution sol = kernel.solve(opts);
    if (kernel.is_member(sol.values, 1e-9)) return sol.values.at("X");
  } catch (const NumericError&) {
    // phase 1 found no interior point: treat as infeasible at this t
  }
  return std::nullopt;
}

}  // namespace detail

/// K_i = argmin_X ||(I - X C_i) A|| for the chosen norm. The Frobenius
/// case is the closed-form row-space least squares; the spectral case
/// bisects the norm bound t over LMI feasibility.
inline Matrix norm_relax_gain(const PartyModel& party, const Matrix& A, NormChoice norm,
                              bool* degenerate = nullptr) {
  require_square(A, "norm_relax_gain");
  if (party.C.cols() != A.rows()) throw DimensionError("norm_relax_gain: C column count");
  if (norm == NormChoice::Frobenius) return solve_min_frobenius(A, party.C * A, degenerate);

  if (degenerate) {
    solve_min_frobenius(A, party.C * A, degenerate);  // report rank status either way
  }
  double lo = 0.0, hi = spectral_norm(A) * (1.0 + 1e-9) + 1e-12;
  Matrix best = Matrix::Zero(A.rows(), party.C.rows());  // X = 0 attains hi
  for (int it = 0; it < 60 && hi - lo > 1e-7 * std::max(1.0, hi); ++it) {
    double mid = 0.5 * (lo + hi);
    if (auto x = detail::spectral_norm_feasible(A, party.C, mid)) {
      hi = mid;
      best = *x;
    } else {
      lo = mid;
    }
  }
  return best;
}

/// Design Method I: local norm-relaxation gains plus a secure average of
/// the norm values; accepted iff the average is below 1.
inline DesignResult stabilization_method_1(const std::vector<PartyModel>& parties, const Matrix& A,
                                           NormChoice norm, const CryptoContext* crypto = nullptr,
                                           std::vector<RoundMessage>* log = nullptr) {
  DesignResult res;
  res.method = DesignMethod::NormRelax;
  const Eigen::Index n = A.rows();
  for (const auto& p : parties) {
    Matrix K = norm_relax_gain(p, A, norm);
    Matrix MA = (Matrix::Identity(n, n) - K * p.C) * A;
    res.party_norms.push_back(norm == NormChoice::Frobenius ? MA.norm() : spectral_norm(MA));
    res.gains.push_back(std::move(K));
  }
  if (crypto) {
    res.average_norm = secure_scalar_average(res.party_norms, *crypto, 0, log);
  } else {
    double s = 0.0;
    for (double v : res.party_norms) s += v;
    res.average_norm = s / static_cast<double>(parties.size());
  }
  res.K = concat_gains(res.gains);
  res.rho = achieved_rho(parties, res.gains, A);
  res.accepted = res.average_norm < 1.0;
  return res;
}

// --- Design Method II: two-block ADMM over the stabilization LMI set ---

namespace detail {

/// The stabilization cone, with its strict inequalities realized at
/// margin 1: the zero-initialized ADMM trajectory scales linearly in
/// the margin while every extracted gain H^{-1} Z_i is invariant, so a
/// well-scaled margin costs nothing and keeps the inner solves accurate.
inline AffinePsdProblem make_stabilize_problem(const std::vector<PartyModel>& parties,
                                               const Matrix& A, double gamma, double margin) {
  const Eigen::Index n = A.rows();
  const auto N = static_cast<double>(parties.size());
  AffinePsdProblem prob;
  prob.blocks.push_back({"H", n, n, true});
  for (std::size_t i = 0; i < parties.size(); ++i)
    prob.blocks.push_back({"U" + std::to_string(i), n, n, false});
  for (std::size_t i = 0; i < parties.size(); ++i)
    prob.targets.push_back({"U" + std::to_string(i), Matrix::Zero(n, n), gamma});

  AffineConstraint cone;
  cone.name = "U0";
  cone.size = 2 * n;
  cone.margin = margin;
  cone.expr = [A, n, N, count = parties.size()](const BlockValues& v) {
    const Matrix& H = v.at("H");
    Matrix W = Matrix::Zero(2 * n, 2 * n);
    W.block(0, 0, n, n) = N * H;
    W.block(n, n, n, n) = N * H;
    Matrix HA = N * H * A;
    for (std::size_t i = 0; i < count; ++i) HA -= v.at("U" + std::to_string(i));
    W.block(0, n, n, n) = HA;
    W.block(n, 0, n, n) = HA.transpose();
    return W;
  };
  prob.constraints.push_back(std::move(cone));

  AffineConstraint hpos;
  hpos.name = "H";
  hpos.size = n;
  hpos.margin = margin;
  hpos.expr = [](const BlockValues& v) { return v.at("H"); };
  prob.constraints.push_back(std::move(hpos));
  return prob;
}

}  // namespace detail

/// Design Method II: ADMM stabilization. Parties contribute only the
/// products Z_i C_i A; the cloud holds the LMI blocks and multipliers.
/// `rate` prescribes a convergence rate by running the identical
/// program on A/rate.
inline DesignResult stabilization_method_2(const std::vector<PartyModel>& parties,
                                           const Matrix& A_in, double gamma, int iterations,
                                           std::optional<double> rate = std::nullopt,
                                           std::vector<RoundMessage>* log = nullptr) {
  if (gamma <= 0) throw ContractError("stabilization_method_2: gamma must be positive");
  if (iterations < 1) throw ContractError("stabilization_method_2: iterations must be >= 1");
  Matrix A = A_in;
  if (rate) {
    if (*rate <= 0) throw ContractError("stabilization_method_2: rate must be positive");
    A = A_in / *rate;
  }
  const Eigen::Index n = A.rows();
  const auto nparties = parties.size();
  const double margin = 1.0;

  PsdKernel kernel(detail::make_stabilize_problem(parties, A, gamma, margin));

  BlockValues fallback;
  fallback["H"] = 2.0 * margin * Matrix::Identity(n, n);
  for (std::size_t i = 0; i < nparties; ++i)
    fallback["U" + std::to_string(i)] = 2.0 * margin * A;

  std::vector<Matrix> Z(nparties, Matrix()), Lambda(nparties, Matrix::Zero(n, n));
  std::vector<Matrix> G;  // C_i A, the party-side row space
  for (const auto& p : parties) G.push_back(p.C * A);
  std::vector<Matrix> product(nparties, Matrix::Zero(n, n));  // Z_i C_i A, zero-initialized

  DesignResult res;
  res.method = DesignMethod::AdmmStabilize;
  KernelOptions opts;
  opts.max_iters = 6000;
  BlockValues warm = fallback;
  Matrix H = fallback.at("H");

  for (int t = 1; t <= iterations; ++t) {
    // cloud step: project targets T_i = Z_i C_i A - Λ_i/γ onto the cone set
    for (std::size_t i = 0; i < nparties; ++i)
      kernel.update_target("U" + std::to_string(i), product[i] - Lambda[i] / gamma);
    KernelSolution sol = kernel.solve(opts, &warm, &fallback);
    warm = sol.values;
    H = sol.values.at("H");

    // party step + cloud multiplier step
    for (std::size_t i = 0; i < nparties; ++i) {
      const Matrix& U = sol.values.at("U" + std::to_string(i));
      Matrix feedback = U + Lambda[i] / gamma;
      if (log) log->push_back({MessageKind::CloudFeedback, t, cloud_role(), matrix_to_json(feedback)});
      Z[i] = solve_min_frobenius(feedback, G[i]);
      product[i] = Z[i] * G[i];
      if (log)
        log->push_back({MessageKind::PartyProduct, t, party_role(static_cast<int>(i) + 1),
                        matrix_to_json(product[i])});
      Lambda[i] -= gamma * (product[i] - U);
    }

    std::vector<Matrix> gains;
    Eigen::LDLT<Matrix> hld(H);
    for (std::size_t i = 0; i < nparties; ++i) gains.push_back(hld.solve(Z[i]));
    res.history.push_back(achieved_rho(parties, gains, A));
    res.gains = std::move(gains);
  }

  res.K = concat_gains(res.gains);
  res.rho = res.history.back();
  res.accepted = res.rho < 1.0;
  res.final_H = H;
  return res;
}

// --- Design Method III: ADMM toward the asymptotic-MMSE gain ---

namespace detail {

inline AffinePsdProblem make_mmse_problem(const std::vector<PartyModel>& parties, const Matrix& A,
                                          const Matrix& Q, double gamma, double margin) {
  const Eigen::Index n = A.rows();
  Eigen::Index m = 0;
  for (const auto& p : parties) m += p.m();
  const auto N = static_cast<double>(parties.size());
  Matrix sqrtQ = sqrt_psd(Q);

  AffinePsdProblem prob;
  prob.blocks.push_back({"H", n, n, true});
  for (std::size_t i = 0; i < parties.size(); ++i) {
    prob.blocks.push_back({"U" + std::to_string(i), n, n, false});
    prob.blocks.push_back({"V" + std::to_string(i), n, m, false});
  }
  prob.linear_costs.push_back({"H", -Matrix::Identity(n, n)});  // minimize -Tr(H)
  for (std::size_t i = 0; i < parties.size(); ++i) {
    prob.targets.push_back({"U" + std::to_string(i), Matrix::Zero(n, n), gamma});
    prob.targets.push_back({"V" + std::to_string(i), Matrix::Zero(n, m), gamma});
  }

  AffineConstraint cone;
  cone.name = "W";
  cone.size = 3 * n + m;
  cone.margin = 0.0;
  cone.expr = [A, sqrtQ, n, m, N, count = parties.size()](const BlockValues& v) {
    const Matrix& H = v.at("H");
    Matrix W = Matrix::Zero(3 * n + m, 3 * n + m);
    W.block(0, 0, n, n) = N * H;
    W.block(n, n, n, n) = N * H;
    W.block(2 * n, 2 * n, m, m) = N * Matrix::Identity(m, m);
    W.block(2 * n + m, 2 * n + m, n, n) = N * Matrix::Identity(n, n);
    Matrix b21 = N * A.transpose() * H;
    Matrix b31 = Matrix::Zero(m, n);
    for (std::size_t i = 0; i < count; ++i) {
      b21 -= v.at("U" + std::to_string(i)).transpose();
      b31 += v.at("V" + std::to_string(i)).transpose();
    }
    W.block(n, 0, n, n) = b21;
    W.block(0, n, n, n) = b21.transpose();
    W.block(2 * n, 0, m, n) = b31;
    W.block(0, 2 * n, n, m) = b31.transpose();
    W.block(2 * n + m, 0, n, n) = N * sqrtQ * H;
    W.block(0, 2 * n + m, n, n) = (N * sqrtQ * H).transpose();
    return W;
  };
  prob.constraints.push_back(std::move(cone));

  AffineConstraint hpos;
  hpos.name = "H";
  hpos.size = n;
  hpos.margin = margin;
  hpos.expr = [](const BlockValues& v) { return v.at("H"); };
  prob.constraints.push_back(std::move(hpos));
  return prob;
}

}  // namespace detail

/// Design Method III: ADMM converging to the optimal steady-state
/// Kalman gain. Parties contribute only Z̄_i C_i and Z̄_i √R_i B_i; the
/// cloud holds the SDP blocks. `reference` (e.g. the DARE gain from an
/// analysis run) is only used to fill the per-iteration history.
inline DesignResult mmse_method(const std::vector<PartyModel>& parties, const Matrix& A,
                                const Matrix& Q, double gamma, int iterations,
                                const Matrix* reference_K = nullptr,
                                std::vector<RoundMessage>* log = nullptr) {
  if (gamma <= 0) throw ContractError("mmse_method: gamma must be positive");
  require_square(A, "mmse_method.A");
  if (std::abs(A.determinant()) < 1e-300) throw ContractError("mmse_method: A must be nonsingular");
  if (!is_positive_definite(Q, 0.0)) throw ContractError("mmse_method: Q must be PD");

  const Eigen::Index n = A.rows();
  Eigen::Index m = 0;
  for (const auto& p : parties) m += p.m();
  const auto nparties = parties.size();
  const double margin = 1e-6;

  PsdKernel kernel(detail::make_mmse_problem(parties, A, Q, gamma, margin));

  BlockValues fallback;
  fallback["H"] = 0.01 * Matrix::Identity(n, n);
  for (std::size_t i = 0; i < nparties; ++i) {
    fallback["U" + std::to_string(i)] = 0.01 * A;
    fallback["V" + std::to_string(i)] = Matrix::Zero(n, m);
  }

  // party-side row spaces G_i = [C_i, sqrt(R_i) B_i]; the Gram matrix
  // C_i C_iᵀ + R_i is nonsingular because R_i is PD
  std::vector<Matrix> G;
  for (std::size_t i = 0; i < nparties; ++i) {
    Matrix g(parties[i].m(), n + m);
    g.leftCols(n) = parties[i].C;
    g.rightCols(m) = sqrt_psd(parties[i].R) * selector_B(parties, i);
    G.push_back(std::move(g));
  }

  std::vector<Matrix> Z(nparties), Lambda(nparties, Matrix::Zero(n, n + m));
  std::vector<Matrix> product(nparties, Matrix::Zero(n, n + m));  // Z̄_i G_i

  DesignResult res;
  res.method = DesignMethod::AdmmMmse;
  KernelOptions opts;
  opts.max_iters = 8000;
  opts.mu_min = 1e-9;
  BlockValues warm = fallback;
  Matrix H = fallback.at("H");

  for (int t = 1; t <= iterations; ++t) {
    for (std::size_t i = 0; i < nparties; ++i) {
      Matrix target = product[i] - Lambda[i] / gamma;
      kernel.update_target("U" + std::to_string(i), target.leftCols(n));
      kernel.update_target("V" + std::to_string(i), target.rightCols(m));
    }
    KernelSolution sol = kernel.solve(opts, &warm, &fallback);
    warm = sol.values;
    H = sol.values.at("H");

    for (std::size_t i = 0; i < nparties; ++i) {
      Matrix UV(n, n + m);
      UV.leftCols(n) = sol.values.at("U" + std::to_string(i));
      UV.rightCols(m) = sol.values.at("V" + std::to_string(i));
      Matrix feedback = UV + Lambda[i] / gamma;
      if (log) log->push_back({MessageKind::CloudFeedback, t, cloud_role(), matrix_to_json(feedback)});
      Z[i] = solve_min_frobenius(feedback, G[i]);
      product[i] = Z[i] * G[i];
      if (log)
        log->push_back({MessageKind::PartyProduct, t, party_role(static_cast<int>(i) + 1),
                        matrix_to_json(product[i])});
      Lambda[i] -= gamma * (product[i] - UV);
    }

    // K_i = A⁻¹ H̄⁻¹ Z̄_i, i.e. (H̄ A) K_i = Z̄_i
    std::vector<Matrix> gains;
    Eigen::PartialPivLU<Matrix> ha((H * A).eval());
    for (std::size_t i = 0; i < nparties; ++i) gains.push_back(ha.solve(Z[i]));
    res.gains = std::move(gains);
    res.K = concat_gains(res.gains);
    if (reference_K) res.history.push_back((res.K - *reference_K).norm());
  }

  res.rho = achieved_rho(parties, res.gains, A);
  res.accepted = res.rho < 1.0;
  res.final_H = H;
  return res;
}

/// §III-B admission test for a joining party: the newcomer picks its
/// norm-relaxation gain; the combined averaged-norm test decides
/// between admit and full redesign.
struct AdmissionDecision {
  bool admit = false;
  double test_value = 0.0;
  Matrix new_gain;
};

inline AdmissionDecision check_new_party(const DesignResult& existing,
                                         const std::vector<PartyModel>& existing_parties,
                                         const PartyModel& new_party, const Matrix& A,
                                         NormChoice norm) {
  const Eigen::Index n = A.rows();
  auto norm_of = [&](const Matrix& M) {
    return norm == NormChoice::Frobenius ? M.norm() : spectral_norm(M);
  };
  AdmissionDecision dec;
  dec.new_gain = norm_relax_gain(new_party, A, norm);
  double new_norm = norm_of((Matrix::Identity(n, n) - dec.new_gain * new_party.C) * A);
  const auto N = static_cast<double>(existing_parties.size());
  if (existing.method == DesignMethod::AdmmStabilize) {
    Matrix sum = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < existing_parties.size(); ++i)
      sum += (Matrix::Identity(n, n) - existing.gains[i] * existing_parties[i].C) * A;
    dec.test_value = (norm_of(sum) + new_norm) / (N + 1.0);
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < existing_parties.size(); ++i)
      s += norm_of((Matrix::Identity(n, n) - existing.gains[i] * existing_parties[i].C) * A);
    dec.test_value = (s + new_norm) / (N + 1.0);
  }
  dec.admit = dec.test_value < 1.0;
  return dec;
}

}  // namespace mpse

#endif  // MPSE_GAIN_DESIGN_HPP
