#ifndef MPSE_SDP_KERNEL_HPP
#define MPSE_SDP_KERNEL_HPP

#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mpse/matrix_ops.hpp"

namespace mpse {

using BlockValues = std::map<std::string, Matrix>;

struct VariableBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool symmetric = false;  // symmetric blocks expose only the upper triangle as free parameters
};

struct QuadraticTarget {
  std::string block;
  Matrix target;
  double weight = 1.0;  // contributes weight/2 * ||X - target||_F^2
};

struct LinearCost {
  std::string block;
  Matrix coeff;  // contributes Tr(coeff^T X)
};

struct AffineConstraint {
  std::string name;
  Eigen::Index size = 0;
  double margin = 0.0;  // expression required >= margin * I
  std::function<Matrix(const BlockValues&)> expr;  // affine in the blocks, symmetric output
};

struct AffinePsdProblem {
  std::vector<VariableBlock> blocks;
  std::vector<QuadraticTarget> targets;
  std::vector<LinearCost> linear_costs;
  std::vector<AffineConstraint> constraints;
};

struct KernelSolution {
  BlockValues values;
  double primal_residual = 0.0;  // max over constraints of (margin - min eig)_+
  int iterations = 0;            // total Newton steps
  bool converged = false;
};

struct KernelOptions {
  double tol = 1e-7;
  int max_iters = 20000;
  double mu_init = 1e-2;
  double mu_factor = 0.15;
  double mu_min = 1e-8;
  std::function<bool(const BlockValues&)> early_stop;  // optional (phase-1 use)
};

/// Inner solver for the cloud-side convex subproblems: minimize a
/// diagonal quadratic-plus-linear objective over affine PSD-cone
/// constraints, by log-barrier Newton path following. Constraint
/// linearizations are compiled once at construction; per-iteration
/// target updates are cheap, which is what the outer ADMM loops need.
class PsdKernel {
 public:
  explicit PsdKernel(AffinePsdProblem problem) : problem_(std::move(problem)) { compile(); }

  const AffinePsdProblem& problem() const { return problem_; }

  void update_target(const std::string& block, const Matrix& target) {
    bool found = false;
    for (auto& t : problem_.targets)
      if (t.block == block) {
        if (t.target.rows() != target.rows() || t.target.cols() != target.cols())
          throw DimensionError("update_target: shape mismatch for block " + block);
        t.target = target;
        found = true;
      }
    if (!found) throw ContractError("update_target: no quadratic target on block " + block);
    build_objective();
  }

  /// Minimum eigenvalue of every constraint expression at the given
  /// point (membership iff each is >= its margin).
  std::vector<double> check_membership(const BlockValues& values) const {
    std::vector<double> out;
    for (const auto& c : problem_.constraints) out.push_back(min_eigenvalue(c.expr(values)));
    return out;
  }

  bool is_member(const BlockValues& values, double slack_tol = 0.0) const {
    auto eigs = check_membership(values);
    for (std::size_t i = 0; i < eigs.size(); ++i)
      if (eigs[i] < problem_.constraints[i].margin - slack_tol) return false;
    return true;
  }

  /// warm: starting point (repaired toward `fallback` if infeasible);
  /// fallback: a known strictly feasible point (required when no
  /// feasible warm start is available — otherwise phase 1 runs).
  KernelSolution solve(const KernelOptions& opts, const BlockValues* warm = nullptr,
                       const BlockValues* fallback = nullptr) {
    Vector x = choose_start(opts, warm, fallback);
    KernelSolution sol;
    int total_newton = 0;

    for (double mu = opts.mu_init; mu >= opts.mu_min * (1.0 - 1e-12); mu *= opts.mu_factor) {
      for (int it = 0; it < opts.max_iters; ++it) {
        if (total_newton >= opts.max_iters) break;
        Vector grad = pdiag_.cwiseProduct(x) - qlin_;
        Matrix hess = Matrix(pdiag_.asDiagonal());
        bool ok = add_barrier_terms(x, mu, grad, hess);
        if (!ok) throw NumericError("sdp kernel: iterate left the feasible region");
        // Tikhonov guard for rank-deficient objective blocks at tiny mu
        double reg = 1e-12 * std::max(1.0, hess.trace() / static_cast<double>(nx_));
        hess.diagonal().array() += reg;
        Eigen::LDLT<Matrix> ldlt(hess);
        Vector dx = ldlt.solve(-grad);
        double decrement = -grad.dot(dx);
        ++total_newton;
        if (!(decrement > 0) || 0.5 * decrement < mu * 1e-4) break;
        double ms0 = min_slack(x);
        double step = 1.0;
        int halvings = 0;
        while (min_slack(x + step * dx) <= 0.01 * ms0 && halvings < 60) {
          step *= 0.5;
          ++halvings;
        }
        if (halvings >= 60) break;
        x += step * dx;
        if (opts.early_stop && opts.early_stop(unpack(x))) {
          sol.values = unpack(x);
          sol.iterations = total_newton;
          sol.converged = true;
          sol.primal_residual = residual(x);
          return sol;
        }
      }
      if (total_newton >= opts.max_iters) break;
    }

    sol.values = unpack(x);
    sol.iterations = total_newton;
    sol.primal_residual = residual(x);
    sol.converged = sol.primal_residual <= opts.tol && total_newton < opts.max_iters;
    return sol;
  }

  Vector pack(const BlockValues& values) const {
    Vector x = Vector::Zero(nx_);
    for (const auto& b : layout_) {
      auto it = values.find(b.name);
      if (it == values.end()) continue;
      const Matrix& m = it->second;
      if (m.rows() != b.rows || m.cols() != b.cols)
        throw DimensionError("pack: shape mismatch for block " + b.name);
      Eigen::Index idx = b.offset;
      if (b.symmetric) {
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = i; j < b.cols; ++j) x(idx++) = 0.5 * (m(i, j) + m(j, i));
      } else {
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = 0; j < b.cols; ++j) x(idx++) = m(i, j);
      }
    }
    return x;
  }

  BlockValues unpack(const Vector& x) const {
    BlockValues values;
    for (const auto& b : layout_) {
      Matrix m(b.rows, b.cols);
      Eigen::Index idx = b.offset;
      if (b.symmetric) {
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = i; j < b.cols; ++j) {
            m(i, j) = x(idx);
            m(j, i) = x(idx);
            ++idx;
          }
      } else {
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = 0; j < b.cols; ++j) m(i, j) = x(idx++);
      }
      values[b.name] = std::move(m);
    }
    return values;
  }

 private:
  struct BlockLayout {
    std::string name;
    Eigen::Index rows, cols, offset, size;
    bool symmetric;
  };
  struct CompiledConstraint {
    Eigen::Index size;
    double margin;
    Matrix w0;                                        // expression at x = 0
    std::vector<std::pair<Eigen::Index, Matrix>> e;  // per participating variable
  };

  void compile() {
    nx_ = 0;
    layout_.clear();
    for (const auto& b : problem_.blocks) {
      if (b.rows < 1 || b.cols < 1) throw DimensionError("block " + b.name + ": empty shape");
      if (b.symmetric && b.rows != b.cols)
        throw DimensionError("block " + b.name + ": symmetric block must be square");
      Eigen::Index size = b.symmetric ? b.rows * (b.rows + 1) / 2 : b.rows * b.cols;
      layout_.push_back({b.name, b.rows, b.cols, nx_, size, b.symmetric});
      nx_ += size;
    }
    build_objective();

    // linearize each affine constraint by probing unit coordinates
    compiled_.clear();
    Vector zero = Vector::Zero(nx_);
    BlockValues zv = unpack(zero);
    for (const auto& c : problem_.constraints) {
      CompiledConstraint cc;
      cc.size = c.size;
      cc.margin = c.margin;
      cc.w0 = symmetrize(c.expr(zv));
      if (cc.w0.rows() != c.size)
        throw DimensionError("constraint " + c.name + ": expression size mismatch");
      for (Eigen::Index j = 0; j < nx_; ++j) {
        Vector e = Vector::Zero(nx_);
        e(j) = 1.0;
        Matrix ej = symmetrize(c.expr(unpack(e))) - cc.w0;
        if (ej.cwiseAbs().maxCoeff() > 0) cc.e.emplace_back(j, std::move(ej));
      }
      compiled_.push_back(std::move(cc));
    }
  }

  void build_objective() {
    pdiag_ = Vector::Zero(nx_);
    qlin_ = Vector::Zero(nx_);
    for (const auto& t : problem_.targets) {
      const BlockLayout& b = find_block(t.block);
      if (t.target.rows() != b.rows || t.target.cols() != b.cols)
        throw DimensionError("target shape mismatch for block " + t.block);
      Eigen::Index idx = b.offset;
      if (b.symmetric) {
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = i; j < b.cols; ++j) {
            double mult = (i == j) ? 1.0 : 2.0;  // off-diagonal parameter covers two entries
            pdiag_(idx) += mult * t.weight;
            qlin_(idx) += mult * t.weight * 0.5 * (t.target(i, j) + t.target(j, i));
            ++idx;
          }
      } else {
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = 0; j < b.cols; ++j) {
            pdiag_(idx) += t.weight;
            qlin_(idx) += t.weight * t.target(i, j);
            ++idx;
          }
      }
    }
    for (const auto& lc : problem_.linear_costs) {
      const BlockLayout& b = find_block(lc.block);
      if (lc.coeff.rows() != b.rows || lc.coeff.cols() != b.cols)
        throw DimensionError("linear cost shape mismatch for block " + lc.block);
      Eigen::Index idx = b.offset;
      if (b.symmetric) {
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = i; j < b.cols; ++j) {
            qlin_(idx) -= (i == j) ? lc.coeff(i, i) : (lc.coeff(i, j) + lc.coeff(j, i));
            ++idx;
          }
      } else {
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = 0; j < b.cols; ++j) qlin_(idx++) -= lc.coeff(i, j);
      }
    }
  }

  const BlockLayout& find_block(const std::string& name) const {
    for (const auto& b : layout_)
      if (b.name == name) return b;
    throw ContractError("unknown block: " + name);
  }

  Matrix constraint_value(const CompiledConstraint& cc, const Vector& x) const {
    Matrix w = cc.w0;
    for (const auto& [j, ej] : cc.e) w += x(j) * ej;
    return w;
  }

  double min_slack(const Vector& x) const {
    double ms = std::numeric_limits<double>::infinity();
    for (const auto& cc : compiled_) {
      Matrix s = constraint_value(cc, x);
      s.diagonal().array() -= cc.margin;
      ms = std::min(ms, min_eigenvalue(s));
    }
    return ms;
  }

  double residual(const Vector& x) const {
    double r = 0.0;
    for (const auto& cc : compiled_) {
      Matrix s = constraint_value(cc, x);
      s.diagonal().array() -= cc.margin;
      r = std::max(r, std::max(0.0, -min_eigenvalue(s)));
    }
    return r;
  }

  bool add_barrier_terms(const Vector& x, double mu, Vector& grad, Matrix& hess) const {
    for (const auto& cc : compiled_) {
      Matrix s = constraint_value(cc, x);
      s.diagonal().array() -= cc.margin;
      Eigen::SelfAdjointEigenSolver<Matrix> es(s);
      if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0) return false;
      Matrix sinv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                    es.eigenvectors().transpose();
      std::vector<Matrix> g;
      g.reserve(cc.e.size());
      for (const auto& [j, ej] : cc.e) {
        g.push_back(sinv * ej * sinv);
        grad(j) -= mu * (sinv.cwiseProduct(ej)).sum();
      }
      for (std::size_t a = 0; a < cc.e.size(); ++a)
        for (std::size_t b = 0; b <= a; ++b) {
          double h = mu * (g[a].cwiseProduct(cc.e[b].second)).sum();
          hess(cc.e[a].first, cc.e[b].first) += h;
          if (a != b) hess(cc.e[b].first, cc.e[a].first) += h;
        }
    }
    return true;
  }

  Vector choose_start(const KernelOptions& opts, const BlockValues* warm,
                      const BlockValues* fallback) {
    if (warm) {
      Vector x = pack(*warm);
      if (min_slack(x) > 1e-9) return x;
      if (fallback) {
        // infeasible or boundary-grazing warm start: blend toward the
        // known interior point until strictly feasible
        Vector xf = pack(*fallback);
        for (double t : {1e-3, 1e-2, 0.1, 0.3, 0.6, 1.0}) {
          Vector xt = (1.0 - t) * x + t * xf;
          if (min_slack(xt) > 1e-9) return xt;
        }
      }
    }
    if (fallback) {
      Vector x = pack(*fallback);
      if (min_slack(x) > 1e-9) return x;
    }
    return phase_one(opts);
  }

  // Minimize auxiliary slack s with constraints W_c(x) + s I >= margin_c I
  // until the point is strictly feasible for the original cones.
  Vector phase_one(const KernelOptions& opts) {
    AffinePsdProblem aux;
    aux.blocks = problem_.blocks;
    aux.blocks.push_back({"..phase1_s", 1, 1, false});
    aux.linear_costs.push_back({"..phase1_s", Matrix::Ones(1, 1)});
    // mild proximal pull keeps the Newton system well conditioned
    for (const auto& b : problem_.blocks)
      aux.targets.push_back({b.name, Matrix::Zero(b.rows, b.cols), 1e-6});
    for (const auto& c : problem_.constraints) {
      AffineConstraint ac;
      ac.name = c.name + "+slack";
      ac.size = c.size;
      ac.margin = c.margin;
      ac.expr = [inner = c.expr, size = c.size](const BlockValues& v) {
        Matrix w = inner(v);
        w.diagonal().array() += v.at("..phase1_s")(0, 0);
        return w;
      };
      aux.constraints.push_back(std::move(ac));
    }
    PsdKernel solver(std::move(aux));
    BlockValues start = unpack(Vector::Zero(nx_));
    double worst = 0.0;
    for (const auto& cc : compiled_) {
      Matrix s = cc.w0;
      s.diagonal().array() -= cc.margin;
      worst = std::min(worst, min_eigenvalue(s));
    }
    start["..phase1_s"] = Matrix::Constant(1, 1, -worst + 1.0);
    KernelOptions aux_opts = opts;
    aux_opts.early_stop = [](const BlockValues& v) {
      return v.at("..phase1_s")(0, 0) < -1e-6;
    };
    KernelSolution aux_sol = solver.solve(aux_opts, &start);
    Vector x = pack(aux_sol.values);
    if (min_slack(x) <= 0)
      throw NumericError("sdp kernel: phase 1 found no strictly feasible point");
    return x;
  }

  AffinePsdProblem problem_;
  std::vector<BlockLayout> layout_;
  std::vector<CompiledConstraint> compiled_;
  Eigen::Index nx_ = 0;
  Vector pdiag_;
  Vector qlin_;
};

}  // namespace mpse

#endif  // MPSE_SDP_KERNEL_HPP
