#ifndef MPSE_PROCESS_SIM_HPP
#define MPSE_PROCESS_SIM_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "mpse/matrix_ops.hpp"
#include "mpse/rng.hpp"

namespace mpse {

struct SystemModel {
  Matrix A;  // n x n dynamics
  Matrix Q;  // n x n process-noise covariance, PSD

  Eigen::Index n() const { return A.rows(); }

  void validate() const {
    require_square(A, "SystemModel.A");
    require_finite(A, "SystemModel.A");
    require_symmetric(Q, "SystemModel.Q");
    if (Q.rows() != A.rows()) throw DimensionError("SystemModel: Q size must match A");
    if (min_eigenvalue(Q) < -1e-9) throw ContractError("SystemModel: Q not PSD");
  }
};

struct PartyModel {
  int id = 0;                // 1-based
  Matrix C;                  // m_i x n observation matrix
  Matrix R;                  // m_i x m_i measurement-noise covariance, PD
  std::optional<Matrix> K;   // n x m_i estimator gain, set by gain design

  Eigen::Index m() const { return C.rows(); }

  void validate(Eigen::Index n) const {
    if (C.cols() != n) throw DimensionError("PartyModel: C column count must equal n");
    require_symmetric(R, "PartyModel.R");
    if (R.rows() != C.rows()) throw DimensionError("PartyModel: R size must match C rows");
    if (!is_positive_definite(R, 1e-12)) throw ContractError("PartyModel: R not positive definite");
    if (K && (K->rows() != n || K->cols() != C.rows()))
      throw DimensionError("PartyModel: K shape must be n x m_i");
  }
};

struct SimConfig {
  SystemModel system;
  std::vector<PartyModel> parties;
  Matrix Pi0;      // initial state covariance
  Matrix PiHat0;   // initial estimate covariance
  int horizon = 0;
  std::uint64_t seed = 0;

  void validate() const {
    system.validate();
    if (parties.empty()) throw ContractError("SimConfig: at least one party required");
    for (const auto& p : parties) p.validate(system.n());
    require_symmetric(Pi0, "SimConfig.Pi0");
    require_symmetric(PiHat0, "SimConfig.PiHat0");
    if (min_eigenvalue(Pi0) < -1e-9 || min_eigenvalue(PiHat0) < -1e-9)
      throw ContractError("SimConfig: initial covariances must be PSD");
  }

  static SimConfig with_defaults(SystemModel sys, std::vector<PartyModel> ps, int horizon,
                                 std::uint64_t seed) {
    SimConfig c;
    c.Pi0 = Matrix::Identity(sys.n(), sys.n());
    c.PiHat0 = c.Pi0;
    c.system = std::move(sys);
    c.parties = std::move(ps);
    c.horizon = horizon;
    c.seed = seed;
    return c;
  }
};

inline Vector sample_gaussian_vector(const Matrix& cov, GaussianStream& rng) {
  require_symmetric(cov, "sample_gaussian_vector");
  if (min_eigenvalue(cov) < -1e-9) throw ContractError("sample_gaussian_vector: cov not PSD");
  return sqrt_psd(cov) * rng.normal_vector(cov.rows());
}

inline Vector step_process(const Vector& x, const SystemModel& model, GaussianStream& rng) {
  if (x.size() != model.n()) throw DimensionError("step_process: state dimension mismatch");
  return model.A * x + sample_gaussian_vector(model.Q, rng);
}

inline Vector measure(const PartyModel& party, const Vector& x, GaussianStream& rng) {
  if (x.size() != party.C.cols()) throw DimensionError("measure: state dimension mismatch");
  return party.C * x + sample_gaussian_vector(party.R, rng);
}

/// Independent per-role noise streams for one simulation run. Party
/// streams are keyed by party id, so reordering parties does not change
/// any party's noise sequence.
struct RunStreams {
  GaussianStream process;
  GaussianStream init_state;
  GaussianStream init_estimate;
  std::vector<GaussianStream> per_party;

  RunStreams(std::uint64_t seed, const std::vector<PartyModel>& parties, std::uint64_t run = 0)
      : process(derive_seed(seed, stream_role::process, 0, run)),
        init_state(derive_seed(seed, stream_role::init_state, 0, run)),
        init_estimate(derive_seed(seed, stream_role::init_estimate, 0, run)) {
    per_party.reserve(parties.size());
    for (const auto& p : parties)
      per_party.emplace_back(
          derive_seed(seed, stream_role::party, static_cast<std::uint64_t>(p.id), run));
  }
};

}  // namespace mpse

#endif  // MPSE_PROCESS_SIM_HPP
