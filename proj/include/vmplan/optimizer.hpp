// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// VM configuration search: prune (powers of two, threshold batches, GPU
// preference, per-type batches), then either exhaustive enumeration or the
// anchor-batch approximation when the estimated simulator invocations exceed
// the gate. Candidate evaluations are independent pure sim calls.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vmplan/core.hpp"
#include "vmplan/simulator.hpp"

namespace vmplan::opt {

using SimFn = std::function<sim::SimResult(const sim::Selection&)>;

struct Options {
  std::int64_t exhaustive_gate = 10000;  // max estimated sim invocations
};

struct SearchSpaceStats {
  std::map<std::string, std::vector<Samples>> candidate_batch_sets;
  std::int64_t estimated_sim_invocations = 0;
  enum class Mode { exhaustive, anchor_approx } mode_used = Mode::exhaustive;
  std::int64_t sims_executed = 0;
};

struct PruneResult {
  SearchSpaceStats stats;
  std::vector<VmType> kept_types;  // after GPU preference
  bool feasible = true;
  std::string unsat_reason;
};

// Candidate batches per type: powers of two within [threshold_batch,
// min(memcap_batch, B_global)]. CPU-only types are dropped when any GPU type
// is present. The invocation estimate is prod_i (|batches_i| * quota_i + 1).
PruneResult prune_search_space(const TrainJob& job, const Options& options = {});

struct SolveResult {
  std::optional<Plan> plan;  // empty = UNSAT
  SearchSpaceStats stats;
  std::string unsat_reason;
  std::optional<Plan> best_infeasible;  // diagnostics when UNSAT

  bool feasible() const { return plan.has_value(); }
};

// Simulates every pruned candidate with sum(count*batch) = B_global, filters
// by T_lim/budget, returns the argmin of the job objective. Ties break on
// fewer total instances, then lexicographic entries.
SolveResult exhaustive_search(const TrainJob& job, const ModelProfile& profile,
                              const SimFn& sim, PruneResult& pruned);

// Latency-balanced batches: target L = fw+bw latency of the anchor type at
// B_anchor; every other type gets the largest power of two within its bounds
// whose predicted fw+bw latency stays <= L. Types with no such batch are
// excluded from the anchor's subproblem.
std::map<std::string, Samples> anchor_batches(Samples B_anchor,
                                              const VmType& anchor_type,
                                              std::span<const VmType> types,
                                              const ModelProfile& profile);

// Exact bounded change-making: minimize total count subject to
// sum(batches[i]*counts[i]) = B_global and counts <= quotas; ties prefer
// cheaper (then lexicographically earlier) type mixes. nullopt when no exact
// decomposition exists.
std::optional<std::map<std::string, Count>> solve_counts(
    const std::map<std::string, Samples>& batches, Samples B_global,
    const std::map<std::string, Count>& quotas,
    const std::map<std::string, double>& prices);

// Sweeps (anchor type, power-of-two B_anchor) pairs, deduplicates identical
// batch maps, solves counts for each, simulates once per subproblem, and
// returns the best feasible plan across anchors.
SolveResult approx_solve(const TrainJob& job, const ModelProfile& profile,
                         const SimFn& sim, PruneResult& pruned);

// prune -> mode select by the gate -> exhaustive or approx. The returned
// plan always passes core validate_plan.
SolveResult solve(const TrainJob& job, const ModelProfile& profile,
                  const SimFn& sim, const Options& options = {});

// N * t_iter and linearly prorated cost for a simulated selection.
Plan make_plan(const TrainJob& job, const sim::Selection& selection,
               double t_iter_mean);

}  // namespace vmplan::opt
