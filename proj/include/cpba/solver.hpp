#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cpba/problem.hpp"

namespace cpba {

/// Gauss-Newton normal equations H dx = g over the free blocks of a problem,
/// stored block-sparse. rows[i][j] holds H_ij for every structurally non-zero
/// pair, both (i, j) and (j, i).
struct NormalEquations {
  BlockLayout layout;
  std::vector<std::map<int, Eigen::MatrixXd>> rows;
  Eigen::VectorXd gradient;  // -sum J^T w Lambda r
  double cost = 0.0;
  int evaluated_edges = 0;
  int skipped_edges = 0;

  Eigen::MatrixXd to_dense() const;
};

NormalEquations build_normal_equations(const Problem& problem, const State& state);

struct CostEvaluation {
  double cost = 0.0;
  int evaluated_edges = 0;
  int skipped_edges = 0;
};

/// Sum of robust costs over evaluable edges. Edges that throw kBehindCamera,
/// kDegenerateProjection or kRayParallelToPlane are skipped and counted.
CostEvaluation evaluate_cost(const Problem& problem, const State& state);

/// Eliminates landmark blocks, then plane blocks, from the normal equations
/// and keeps the reduced pose system for a dense Cholesky solve.
class SchurSolver {
 public:
  /// damping adds damping * max(H_ii, 1e-9) to every diagonal entry.
  explicit SchurSolver(const NormalEquations& neq, double damping = 0.0);

  /// Full step in layout order. Throws kRankDeficient when the reduced pose
  /// system or an eliminated block cannot be factorised.
  Eigen::VectorXd solve() const;

  const Eigen::MatrixXd& reduced_pose_system() const { return reduced_; }

 private:
  const NormalEquations& neq_;
  double damping_;
  // per eliminated landmark: inverse of its (damped) diagonal block
  std::vector<Eigen::MatrixXd> landmark_inverse_;
  Eigen::MatrixXd reduced_;       // pose system after eliminating everything
  Eigen::VectorXd reduced_rhs_;
  Eigen::MatrixXd pose_plane_;    // pose x plane coupling after landmark elimination
  Eigen::MatrixXd plane_inverse_; // inverse of the plane system after landmark elimination
  Eigen::VectorXd plane_rhs_;
};

/// Convenience wrapper: eliminate and solve in one call.
Eigen::VectorXd schur_solve(const NormalEquations& neq, double damping = 0.0);

/// Adds a tangent step (layout order) to every free block of the state.
void apply_step(State& state, const BlockLayout& layout, const Eigen::VectorXd& step);

enum class SolverMode { kGaussNewton, kLevenbergMarquardt };

struct SolverOptions {
  int max_iterations = 10;
  SolverMode mode = SolverMode::kGaussNewton;
  double relative_cost_tolerance = 1e-9;
  double initial_lambda = 1e-4;
};

struct StageTimes {
  double linearize = 0.0;
  double schur = 0.0;
  double solve = 0.0;
  double update = 0.0;

  double total() const { return linearize + schur + solve + update; }
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> iteration_costs;  // cost after each applied step
  StageTimes times;                     // seconds
  int item_count = 0;
  int parameter_count = 0;              // sum of free-block tangent dims
  int skipped_edges = 0;                // behind-camera and similar, summed over evaluations
  bool converged = false;
};

/// GN applies a fixed budget of undamped steps; LM damps and only accepts
/// steps that lower the cost. Both stop early once the relative cost decrease
/// falls below options.relative_cost_tolerance.
SolveReport optimize(const Problem& problem, State& state, const SolverOptions& options = {});

struct ItemCount {
  int items = 0;
  int parameters = 0;

  friend bool operator==(const ItemCount&, const ItemCount&) = default;
};

/// Variable blocks updated by the optimiser: every pose, every landmark with
/// its own parameters and every plane. Co-planar landmarks add nothing.
ItemCount count_items_parameters(const Problem& problem, const State& state);

/// Structural block pattern of the Hessian over all variable blocks (fixed
/// poses included), in order poses, landmarks, planes.
struct HessianPattern {
  std::vector<int> block_dims;
  std::vector<std::pair<int, int>> nonzero_blocks;  // sorted, symmetric

  int total_dim() const;
  long long scalar_nonzeros() const;
  long long offdiagonal_scalar_nonzeros() const;
  bool contains(int i, int j) const;
};

HessianPattern hessian_pattern(const Problem& problem, const State& state);

/// "rows cols" header followed by one "row col" line per structurally
/// non-zero scalar. Lines starting with '#' are comments.
void write_hessian_pattern(std::ostream& os, const HessianPattern& pattern,
                           const std::string& comment = {});

struct PatternFileSummary {
  int rows = 0;
  int cols = 0;
  long long entries = 0;
  long long offdiagonal_entries = 0;
};

PatternFileSummary read_hessian_pattern_summary(std::istream& is);

}  // namespace cpba
