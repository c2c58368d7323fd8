#include "cpba/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include <Eigen/Dense>

namespace cpba {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

RobustLoss loss_for(const Problem& problem, const ResidualEdge& edge) {
  if (edge.kind == EdgeKind::kPointReproj || edge.kind == EdgeKind::kLineReproj) return problem.loss;
  return RobustLoss::none();
}

bool state_is_finite(const State& state) {
  for (const auto& p : state.poses) {
    if (!p.rotation.coeffs().allFinite() || !p.translation.allFinite()) return false;
  }
  for (const auto& pl : state.planes) {
    if (!pl.normal.allFinite() || !std::isfinite(pl.offset)) return false;
  }
  for (const auto& lm : state.landmarks) {
    const bool ok = std::visit(
        [](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, EuclideanPoint>) return x.position.allFinite();
          if constexpr (std::is_same_v<T, InverseDepthPoint>) return x.anchor_pixel.allFinite() && std::isfinite(x.inverse_depth);
          if constexpr (std::is_same_v<T, OrthonormalLine>) return x.frame.allFinite() && std::isfinite(x.angle);
          if constexpr (std::is_same_v<T, CoPlanarPoint>) return x.anchor_pixel.allFinite();
          if constexpr (std::is_same_v<T, CoPlanarLine>) return x.anchor_endpoints[0].allFinite() && x.anchor_endpoints[1].allFinite();
        },
        lm);
    if (!ok) return false;
  }
  return true;
}

bool is_skippable(const Error& e) {
  return e.code() == ErrorCode::kBehindCamera || e.code() == ErrorCode::kDegenerateProjection ||
         e.code() == ErrorCode::kRayParallelToPlane;
}

Eigen::MatrixXd& block_at(std::map<int, Eigen::MatrixXd>& row, int col, int rows, int cols) {
  auto it = row.find(col);
  if (it == row.end()) it = row.emplace(col, Eigen::MatrixXd::Zero(rows, cols)).first;
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------

NormalEquations build_normal_equations(const Problem& problem, const State& state) {
  NormalEquations neq;
  neq.layout = make_layout(problem, state);
  const BlockLayout& layout = neq.layout;
  neq.rows.resize(layout.blocks.size());
  neq.gradient = Eigen::VectorXd::Zero(layout.total_dim);

  std::array<int, 4> slots{};
  std::array<Eigen::MatrixXd, 4> JtW;
  for (const auto& edge : problem.edges) {
    EdgeLinearization lin;
    try {
      lin = edge_jacobians(edge, problem.camera, state);
    } catch (const Error& e) {
      if (!is_skippable(e)) throw;
      ++neq.skipped_edges;
      continue;
    }
    ++neq.evaluated_edges;
    const auto& r = lin.residual;
    const double s = r.dot(edge.information * r);
    const RobustEvaluation rho = robust_weight(loss_for(problem, edge), s);
    neq.cost += rho.cost;
    const Eigen::MatrixXd W = rho.weight * edge.information;

    for (int a = 0; a < lin.num_blocks; ++a) {
      const auto& ja = lin.blocks[static_cast<std::size_t>(a)];
      slots[static_cast<std::size_t>(a)] = layout.slot(ja.block);
      if (slots[static_cast<std::size_t>(a)] < 0) continue;
      JtW[static_cast<std::size_t>(a)] = ja.jacobian.transpose() * W;
      neq.gradient.segment(layout.offsets[static_cast<std::size_t>(slots[static_cast<std::size_t>(a)])], ja.jacobian.cols()) -=
          JtW[static_cast<std::size_t>(a)] * r;
    }
    for (int a = 0; a < lin.num_blocks; ++a) {
      const int sa = slots[static_cast<std::size_t>(a)];
      if (sa < 0) continue;
      for (int b = 0; b < lin.num_blocks; ++b) {
        const int sb = slots[static_cast<std::size_t>(b)];
        if (sb < 0) continue;
        const auto& jb = lin.blocks[static_cast<std::size_t>(b)].jacobian;
        Eigen::MatrixXd& H = block_at(neq.rows[static_cast<std::size_t>(sa)], sb,
                                      layout.dims[static_cast<std::size_t>(sa)],
                                      layout.dims[static_cast<std::size_t>(sb)]);
        H.noalias() += JtW[static_cast<std::size_t>(a)] * jb;
      }
    }
  }
  if (neq.evaluated_edges == 0) {
    throw Error(ErrorCode::kEmptyProblem, "no edge could be evaluated");
  }
  return neq;
}

Eigen::MatrixXd NormalEquations::to_dense() const {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(layout.total_dim, layout.total_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [j, block] : rows[i]) {
      H.block(layout.offsets[i], layout.offsets[static_cast<std::size_t>(j)], block.rows(), block.cols()) = block;
    }
  }
  return H;
}

CostEvaluation evaluate_cost(const Problem& problem, const State& state) {
  CostEvaluation out;
  for (const auto& edge : problem.edges) {
    ResidualVec r;
    try {
      r = edge_residual(edge, problem.camera, state);
    } catch (const Error& e) {
      if (!is_skippable(e)) throw;
      ++out.skipped_edges;
      continue;
    }
    ++out.evaluated_edges;
    out.cost += robust_weight(loss_for(problem, edge), r.dot(edge.information * r)).cost;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Contiguous run of kept (pose or plane) coordinates touched by a landmark.
struct Run {
  int kept_offset;
  int stacked_offset;
  int length;
};

struct LandmarkCoupling {
  Eigen::MatrixXd stacked;  // rows: neighbour coordinates, cols: landmark dim
  std::vector<Run> runs;
};

}  // namespace

SchurSolver::SchurSolver(const NormalEquations& neq, double damping) : neq_(neq), damping_(damping) {
  const BlockLayout& layout = neq.layout;
  const int num_blocks = static_cast<int>(layout.blocks.size());
  const int pose_dim = layout.pose_dim;

  int plane_dim = 0;
  for (const auto& b : layout.blocks) plane_dim += b.type == BlockType::kPlane ? 3 : 0;
  const int kept_dim = pose_dim + plane_dim;

  // Position of every kept block inside the pose+plane system.
  std::vector<int> kept_offset(static_cast<std::size_t>(num_blocks), -1);
  {
    int plane_cursor = pose_dim;
    for (int s = 0; s < num_blocks; ++s) {
      const auto& b = layout.blocks[static_cast<std::size_t>(s)];
      if (b.type == BlockType::kPose) kept_offset[static_cast<std::size_t>(s)] = layout.offsets[static_cast<std::size_t>(s)];
      if (b.type == BlockType::kPlane) {
        kept_offset[static_cast<std::size_t>(s)] = plane_cursor;
        plane_cursor += 3;
      }
    }
  }

  auto damp = [&](Eigen::MatrixXd& M) {
    if (damping_ <= 0.0) return;
    for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, i) += damping_ * std::max(M(i, i), 1e-9);
  };

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(kept_dim, kept_dim);
  Eigen::VectorXd rhs(kept_dim);
  for (int s = 0; s < num_blocks; ++s) {
    const int ks = kept_offset[static_cast<std::size_t>(s)];
    if (ks < 0) continue;
    rhs.segment(ks, layout.dims[static_cast<std::size_t>(s)]) =
        neq.gradient.segment(layout.offsets[static_cast<std::size_t>(s)], layout.dims[static_cast<std::size_t>(s)]);
    for (const auto& [t, H] : neq.rows[static_cast<std::size_t>(s)]) {
      const int kt = kept_offset[static_cast<std::size_t>(t)];
      if (kt < 0) continue;
      M.block(ks, kt, H.rows(), H.cols()) = H;
    }
  }
  damp(M);

  // Landmark elimination.
  landmark_inverse_.assign(static_cast<std::size_t>(num_blocks), Eigen::MatrixXd());
  for (int l = 0; l < num_blocks; ++l) {
    if (layout.blocks[static_cast<std::size_t>(l)].type != BlockType::kLandmark) continue;
    const auto& row = neq.rows[static_cast<std::size_t>(l)];
    auto diag = row.find(l);
    const int dl = layout.dims[static_cast<std::size_t>(l)];
    Eigen::MatrixXd D = diag != row.end() ? diag->second : Eigen::MatrixXd::Zero(dl, dl);
    damp(D);
    Eigen::LLT<Eigen::MatrixXd> llt(D);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kRankDeficient, "landmark block is not positive definite");
    }
    Eigen::MatrixXd Dinv = llt.solve(Eigen::MatrixXd::Identity(dl, dl));

    LandmarkCoupling c;
    int stacked_rows = 0;
    for (const auto& [t, H] : row) {
      if (t == l) continue;
      if (kept_offset[static_cast<std::size_t>(t)] < 0) {
        throw Error(ErrorCode::kInvalidInput, "landmark blocks may not be coupled to each other");
      }
      stacked_rows += static_cast<int>(H.cols());
    }
    c.stacked.resize(stacked_rows, dl);
    int cursor = 0;
    for (const auto& [t, H] : row) {
      if (t == l) continue;
      const int kt = kept_offset[static_cast<std::size_t>(t)];
      const int len = static_cast<int>(H.cols());
      c.stacked.middleRows(cursor, len) = H.transpose();
      if (!c.runs.empty() && c.runs.back().kept_offset + c.runs.back().length == kt) {
        c.runs.back().length += len;
      } else {
        c.runs.push_back({kt, cursor, len});
      }
      cursor += len;
    }
    if (stacked_rows > 0) {
      const Eigen::MatrixXd Y = c.stacked * Dinv;
      const Eigen::MatrixXd U = Y * c.stacked.transpose();
      const Eigen::VectorXd u = Y * neq.gradient.segment(layout.offsets[static_cast<std::size_t>(l)], dl);
      for (const Run& a : c.runs) {
        rhs.segment(a.kept_offset, a.length) -= u.segment(a.stacked_offset, a.length);
        for (const Run& b : c.runs) {
          M.block(a.kept_offset, b.kept_offset, a.length, b.length) -=
              U.block(a.stacked_offset, b.stacked_offset, a.length, b.length);
        }
      }
    }
    landmark_inverse_[static_cast<std::size_t>(l)] = std::move(Dinv);
  }

  // Plane elimination.
  if (plane_dim > 0) {
    const Eigen::MatrixXd C = M.bottomRightCorner(plane_dim, plane_dim);
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kRankDeficient, "plane system is not positive definite");
    }
    plane_inverse_ = llt.solve(Eigen::MatrixXd::Identity(plane_dim, plane_dim));
    pose_plane_ = M.topRightCorner(pose_dim, plane_dim);
    plane_rhs_ = rhs.tail(plane_dim);
    const Eigen::MatrixXd Y = pose_plane_ * plane_inverse_;
    reduced_ = M.topLeftCorner(pose_dim, pose_dim);
    reduced_.noalias() -= Y * pose_plane_.transpose();
    reduced_rhs_ = rhs.head(pose_dim) - Y * plane_rhs_;
  } else {
    reduced_ = M.topLeftCorner(pose_dim, pose_dim);
    reduced_rhs_ = rhs.head(pose_dim);
  }
}

Eigen::VectorXd SchurSolver::solve() const {
  const BlockLayout& layout = neq_.layout;
  const int pose_dim = layout.pose_dim;
  Eigen::VectorXd step = Eigen::VectorXd::Zero(layout.total_dim);

  Eigen::VectorXd dp = Eigen::VectorXd::Zero(pose_dim);
  if (pose_dim > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(reduced_);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kRankDeficient, "reduced camera system is not positive definite");
    }
    dp = llt.solve(reduced_rhs_);
    if (!dp.allFinite()) throw Error(ErrorCode::kRankDeficient, "reduced camera system solve is not finite");
  }
  step.head(pose_dim) = dp;

  const int plane_dim = static_cast<int>(plane_inverse_.rows());
  Eigen::VectorXd dplane;
  if (plane_dim > 0) {
    dplane = plane_inverse_ * (plane_rhs_ - pose_plane_.transpose() * dp);
  }

  // Kept (pose + plane) step, indexed like the reduced system.
  Eigen::VectorXd kept(pose_dim + plane_dim);
  kept.head(pose_dim) = dp;
  if (plane_dim > 0) kept.tail(plane_dim) = dplane;

  int plane_cursor = 0;
  const int num_blocks = static_cast<int>(layout.blocks.size());
  std::vector<int> kept_offset(static_cast<std::size_t>(num_blocks), -1);
  for (int s = 0; s < num_blocks; ++s) {
    const auto& b = layout.blocks[static_cast<std::size_t>(s)];
    if (b.type == BlockType::kPose) kept_offset[static_cast<std::size_t>(s)] = layout.offsets[static_cast<std::size_t>(s)];
    if (b.type == BlockType::kPlane) {
      kept_offset[static_cast<std::size_t>(s)] = pose_dim + plane_cursor;
      step.segment(layout.offsets[static_cast<std::size_t>(s)], 3) = dplane.segment(plane_cursor, 3);
      plane_cursor += 3;
    }
  }

  for (int l = 0; l < num_blocks; ++l) {
    if (layout.blocks[static_cast<std::size_t>(l)].type != BlockType::kLandmark) continue;
    const int dl = layout.dims[static_cast<std::size_t>(l)];
    Eigen::VectorXd rhs = neq_.gradient.segment(layout.offsets[static_cast<std::size_t>(l)], dl);
    for (const auto& [t, H] : neq_.rows[static_cast<std::size_t>(l)]) {
      if (t == l) continue;
      rhs.noalias() -= H * kept.segment(kept_offset[static_cast<std::size_t>(t)], H.cols());
    }
    step.segment(layout.offsets[static_cast<std::size_t>(l)], dl) = landmark_inverse_[static_cast<std::size_t>(l)] * rhs;
  }
  return step;
}

Eigen::VectorXd schur_solve(const NormalEquations& neq, double damping) {
  return SchurSolver(neq, damping).solve();
}

void apply_step(State& state, const BlockLayout& layout, const Eigen::VectorXd& step) {
  for (std::size_t s = 0; s < layout.blocks.size(); ++s) {
    apply_block_increment(state, layout.blocks[s], step.segment(layout.offsets[s], layout.dims[s]));
  }
}

// ---------------------------------------------------------------------------

SolveReport optimize(const Problem& problem, State& state, const SolverOptions& options) {
  validate_problem(problem, state);
  SolveReport report;
  const BlockLayout layout = make_layout(problem, state);
  report.item_count = static_cast<int>(layout.blocks.size());
  report.parameter_count = layout.total_dim;

  if (!state_is_finite(state)) throw Error(ErrorCode::kInvalidInitialization, "initial state is not finite");
  const CostEvaluation initial = evaluate_cost(problem, state);
  if (!std::isfinite(initial.cost) || initial.evaluated_edges == 0) {
    throw Error(ErrorCode::kInvalidInitialization, "initial cost is not finite");
  }
  report.initial_cost = initial.cost;
  report.skipped_edges += initial.skipped_edges;
  double cost = initial.cost;

  auto converged_between = [&](double before, double after) {
    return std::abs(before - after) <= options.relative_cost_tolerance * before || after == 0.0;
  };

  if (options.mode == SolverMode::kGaussNewton) {
    for (int it = 0; it < options.max_iterations; ++it) {
      auto t0 = Clock::now();
      const NormalEquations neq = build_normal_equations(problem, state);
      report.times.linearize += seconds_since(t0);

      Eigen::VectorXd step;
      double damping = 0.0;
      for (int attempt = 0;; ++attempt) {
        try {
          t0 = Clock::now();
          SchurSolver solver(neq, damping);
          report.times.schur += seconds_since(t0);
          t0 = Clock::now();
          step = solver.solve();
          report.times.solve += seconds_since(t0);
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kRankDeficient || attempt >= 3) throw;
          damping = damping == 0.0 ? 1e-9 : damping * 1e3;
        }
      }

      t0 = Clock::now();
      apply_step(state, neq.layout, step);
      const CostEvaluation after = evaluate_cost(problem, state);
      report.times.update += seconds_since(t0);
      report.skipped_edges += neq.skipped_edges;
      ++report.iterations;
      report.iteration_costs.push_back(after.cost);
      const double before = cost;
      cost = after.cost;
      if (!std::isfinite(cost)) break;
      if (converged_between(before, cost)) {
        report.converged = true;
        break;
      }
    }
  } else {
    double lambda = options.initial_lambda;
    for (int it = 0; it < options.max_iterations; ++it) {
      auto t0 = Clock::now();
      const NormalEquations neq = build_normal_equations(problem, state);
      report.times.linearize += seconds_since(t0);
      report.skipped_edges += neq.skipped_edges;

      bool accepted = false;
      double new_cost = cost;
      for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
        Eigen::VectorXd step;
        try {
          t0 = Clock::now();
          SchurSolver solver(neq, lambda);
          report.times.schur += seconds_since(t0);
          t0 = Clock::now();
          step = solver.solve();
          report.times.solve += seconds_since(t0);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kRankDeficient) throw;
          lambda *= 10.0;
          continue;
        }
        t0 = Clock::now();
        State candidate = state;
        apply_step(candidate, neq.layout, step);
        const CostEvaluation eval = evaluate_cost(problem, candidate);
        report.times.update += seconds_since(t0);
        if (std::isfinite(eval.cost) && eval.cost < cost) {
          state = std::move(candidate);
          new_cost = eval.cost;
          accepted = true;
          lambda = std::max(lambda / 3.0, 1e-12);
        } else {
          lambda *= 4.0;
        }
      }
      if (!accepted) {
        report.converged = true;
        break;
      }
      ++report.iterations;
      report.iteration_costs.push_back(new_cost);
      const double before = cost;
      cost = new_cost;
      if (converged_between(before, cost)) {
        report.converged = true;
        break;
      }
    }
  }
  report.final_cost = cost;
  return report;
}

// ---------------------------------------------------------------------------

ItemCount count_items_parameters(const Problem& /*problem*/, const State& state) {
  ItemCount c;
  c.items = static_cast<int>(state.poses.size());
  c.parameters = 6 * c.items;
  for (const auto& lm : state.landmarks) {
    const int dim = landmark_tangent_dim(lm);
    if (dim == 0) continue;
    ++c.items;
    c.parameters += dim;
  }
  c.items += static_cast<int>(state.planes.size());
  c.parameters += 3 * static_cast<int>(state.planes.size());
  return c;
}

int HessianPattern::total_dim() const {
  int n = 0;
  for (int d : block_dims) n += d;
  return n;
}

long long HessianPattern::scalar_nonzeros() const {
  long long n = 0;
  for (const auto& [i, j] : nonzero_blocks) {
    n += static_cast<long long>(block_dims[static_cast<std::size_t>(i)]) * block_dims[static_cast<std::size_t>(j)];
  }
  return n;
}

long long HessianPattern::offdiagonal_scalar_nonzeros() const {
  long long n = scalar_nonzeros();
  for (const auto& [i, j] : nonzero_blocks) {
    if (i == j) n -= block_dims[static_cast<std::size_t>(i)];
  }
  return n;
}

bool HessianPattern::contains(int i, int j) const {
  return std::binary_search(nonzero_blocks.begin(), nonzero_blocks.end(), std::make_pair(i, j));
}

HessianPattern hessian_pattern(const Problem& problem, const State& state) {
  HessianPattern pattern;
  std::vector<int> pose_idx(state.poses.size()), landmark_idx(state.landmarks.size(), -1),
      plane_idx(state.planes.size());
  for (std::size_t i = 0; i < state.poses.size(); ++i) {
    pose_idx[i] = static_cast<int>(pattern.block_dims.size());
    pattern.block_dims.push_back(6);
  }
  for (std::size_t i = 0; i < state.landmarks.size(); ++i) {
    const int dim = landmark_tangent_dim(state.landmarks[i]);
    if (dim == 0) continue;
    landmark_idx[i] = static_cast<int>(pattern.block_dims.size());
    pattern.block_dims.push_back(dim);
  }
  for (std::size_t i = 0; i < state.planes.size(); ++i) {
    plane_idx[i] = static_cast<int>(pattern.block_dims.size());
    pattern.block_dims.push_back(3);
  }
  std::set<std::pair<int, int>> pairs;
  for (const auto& edge : problem.edges) {
    std::vector<int> ids;
    for (const auto& ref : incident_blocks(edge, state)) {
      const auto k = static_cast<std::size_t>(ref.index);
      switch (ref.type) {
        case BlockType::kPose: ids.push_back(pose_idx.at(k)); break;
        case BlockType::kLandmark: ids.push_back(landmark_idx.at(k)); break;
        case BlockType::kPlane: ids.push_back(plane_idx.at(k)); break;
      }
    }
    for (int a : ids) {
      for (int b : ids) pairs.emplace(a, b);
    }
  }
  pattern.nonzero_blocks.assign(pairs.begin(), pairs.end());
  return pattern;
}

void write_hessian_pattern(std::ostream& os, const HessianPattern& pattern, const std::string& comment) {
  if (!comment.empty()) os << "# " << comment << '\n';
  const int n = pattern.total_dim();
  os << n << ' ' << n << '\n';
  std::vector<int> offsets(pattern.block_dims.size(), 0);
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] = offsets[i - 1] + pattern.block_dims[i - 1];

  std::size_t k = 0;
  while (k < pattern.nonzero_blocks.size()) {
    const int bi = pattern.nonzero_blocks[k].first;
    std::size_t end = k;
    while (end < pattern.nonzero_blocks.size() && pattern.nonzero_blocks[end].first == bi) ++end;
    const auto ubi = static_cast<std::size_t>(bi);
    for (int r = 0; r < pattern.block_dims[ubi]; ++r) {
      const int row = offsets[ubi] + r;
      for (std::size_t q = k; q < end; ++q) {
        const auto bj = static_cast<std::size_t>(pattern.nonzero_blocks[q].second);
        for (int c = 0; c < pattern.block_dims[bj]; ++c) os << row << ' ' << offsets[bj] + c << '\n';
      }
    }
    k = end;
  }
}

PatternFileSummary read_hessian_pattern_summary(std::istream& is) {
  PatternFileSummary s;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long a = 0, b = 0;
    if (!(ls >> a >> b)) throw Error(ErrorCode::kInvalidInput, "malformed pattern line: " + line);
    if (!have_header) {
      s.rows = static_cast<int>(a);
      s.cols = static_cast<int>(b);
      have_header = true;
      continue;
    }
    if (a < 0 || b < 0 || a >= s.rows || b >= s.cols) {
      throw Error(ErrorCode::kInvalidInput, "pattern entry outside the declared dimensions: " + line);
    }
    ++s.entries;
    if (a != b) ++s.offdiagonal_entries;
  }
  if (!have_header) throw Error(ErrorCode::kInvalidInput, "pattern file has no header");
  return s;
}

}  // namespace cpba
