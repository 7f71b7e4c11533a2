#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfrec/milp.hpp"

namespace cfrec {

struct LpOptions {
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  /// Consecutive degenerate pivots before switching to Bland's rule.
  int degeneracy_stall = 50;
  int refactor_interval = 100;
  int max_iterations = 200000;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> values;  // one per model variable
  double objective = 0.0;
  int iterations = 0;
};

/// LP relaxation of the model (integrality dropped) by a bounded-variable
/// primal simplex on a dense tableau. Phase 1 minimizes the sum of bound
/// infeasibilities. Fixed variables and rows that cannot bind are removed
/// before the tableau is built. Throws Error(Numeric) on a singular basis
/// or when the iteration limit is hit.
LpResult solve_lp(const MilpModel& model, const LpOptions& options = {});

/// Same, with the variable bounds replaced by `lower`/`upper`.
LpResult solve_lp(const MilpModel& model, std::span<const double> lower,
                  std::span<const double> upper, const LpOptions& options = {});

struct SolveLimits {
  double time_limit_seconds = 600.0;
  double absolute_gap = 1e-6;
  double relative_gap = 1e-6;
  std::int64_t node_limit = -1;  // negative: unlimited
  std::uint64_t seed = 0;
  double integrality_tol = 1e-6;
  double feasibility_tol = 1e-6;
  LpOptions lp;
};

enum class SolveStatus { Optimal, Feasible, Infeasible, NoSolutionTimeLimit };

std::string to_string(SolveStatus s);

struct MilpSolution {
  SolveStatus status = SolveStatus::NoSolutionTimeLimit;
  std::vector<double> values;
  double objective = 0.0;
  double best_bound = 0.0;
  std::int64_t nodes_explored = 0;
  double wall_seconds = 0.0;
  /// Global lower bound after every processed node.
  std::vector<double> bound_trace;
};

/// Best-first branch-and-bound with depth-first dives on the LP relaxation.
/// Branches on the most fractional integer variable (lowest index on ties).
MilpSolution solve(const MilpModel& model, const SolveLimits& limits = {});

/// Writes free-format MPS. Binaries are emitted as integers bounded to
/// [0,1] inside MARKER blocks. The objective constant c is written as RHS
/// -c on the objective row (objective = c^T x - rhs_obj).
void export_mps(const MilpModel& model, const std::string& path);
std::string to_mps(const MilpModel& model, const std::string& name = "CFREC");

/// Reads free-format MPS as written by export_mps (and the common subset
/// used by other tools: N/L/G/E rows, MARKER integers, RHS, RANGES,
/// UP/LO/FX/BV/LI/UI/FR/MI/PL bounds). Integer columns with bounds [0,1]
/// come back as binaries.
MilpModel import_mps(const std::string& path);
MilpModel parse_mps(const std::string& text);

/// Reads "name value" lines and returns one value per model variable.
/// Missing variables and bound violations (beyond 1e-6) are errors.
std::vector<double> import_solution(const std::string& path, const MilpModel& model);
std::vector<double> parse_solution(const std::string& text, const MilpModel& model);
void export_solution(const MilpModel& model, std::span<const double> values,
                     const std::string& path);

}  // namespace cfrec
