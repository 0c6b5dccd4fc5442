// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Live progress tracking: gradient reweighting for heterogeneous batches,
// windowed-throughput constraint projection, replanning on interference and
// preemption, and the closed loop that drives all of it against cloudsim.
// ProgressState has a single writer; decisions are emitted atomically.
#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "vmplan/cloudsim.hpp"
#include "vmplan/core.hpp"
#include "vmplan/eventlog.hpp"
#include "vmplan/netmodel.hpp"
#include "vmplan/optimizer.hpp"

namespace vmplan::rt {

struct WindowSample {
  double timestamp = 0.0;  // seconds
  double iters_per_s = 0.0;
};

struct ProgressState {
  double elapsed = 0.0;          // seconds
  double spent = 0.0;            // currency
  std::int64_t iterations_done = 0;
  std::deque<WindowSample> window;
  Plan active_plan;
  std::set<std::string> blacklisted_types;
};

// Per-type gradient weights w_i = W * batches[i] / B_global with
// W = sum(counts): under uniform mean-of-instance-gradients aggregation this
// makes every sample contribute equally. The paper-form coefficient
// batches[i]/B_global is w_i / W.
std::map<std::string, double> reweight_coefficients(const Plan& plan,
                                                    Samples B_global);

struct Throughput {
  double mean = 0.0;
  double stddev = 0.0;
  double optimistic = 0.0;  // mean + z * stddev
};

// Mean/sample-stddev of window samples no older than window_minutes before
// `now`; nullopt when the window is empty (caller defers the decision).
std::optional<Throughput> windowed_throughput(
    const std::deque<WindowSample>& window, double now,
    double window_minutes = 5.0, double z = 1.96);

struct Overheads {
  double launch_s = 150.0;
  double detach_s = 5.0;
  double switch_cost = 0.0;  // currency charged against the residual budget
};

struct SwitchDecision {
  enum class Action { keep, replan, unsat } action = Action::keep;
  std::optional<Plan> plan;
  double optimistic_throughput = 0.0;
  std::string reason;
};

// Residual solver: receives the residual job (N-n, T_lim-t-overheads,
// budget-c-switch_cost, quotas adjusted for blacklisting).
using PlanFn = std::function<opt::SolveResult(const TrainJob&)>;

// Projects completion under the optimistic windowed throughput; keeps the
// plan when both limits hold, otherwise reruns the optimizer on the
// residual job. Blacklisted types cannot be expanded: their residual quota
// is capped at the surviving count in the active plan.
SwitchDecision check_and_replan(const ProgressState& state, const TrainJob& job,
                                const PlanFn& solver,
                                const Overheads& overheads = {},
                                double window_minutes = 5.0, double z = 1.96);

// Blacklists the type (idempotent), removes the preempted instances from the
// active plan, and immediately evaluates check_and_replan over the surviving
// capacity. Preemption of a type not in the active plan is ignored with a
// warning decision.
SwitchDecision on_preemption(ProgressState& state, const std::string& type_id,
                             Count count, const TrainJob& job,
                             const PlanFn& solver,
                             const Overheads& overheads = {},
                             double window_minutes = 5.0, double z = 1.96);

struct RunOptions {
  Overheads overheads;
  double window_minutes = 5.0;
  double z = 1.96;
  std::uint64_t seed = 0;
  std::int64_t sim_iters = 100;  // sampling depth for predictions
  opt::Options optimizer;
};

// Closed loop: plan -> launch on cloudsim -> execute/monitor -> replan on
// preemption or projected violation -> repeat. The log always ends in one of
// {completed, unsat, budget-exhausted}.
EventLog run_closed_loop(const TrainJob& job, const ModelProfile& profile,
                         const netmodel::BandwidthModel& bw_model,
                         const cloudsim::CloudSpec& spec,
                         const RunOptions& options);

}  // namespace vmplan::rt
