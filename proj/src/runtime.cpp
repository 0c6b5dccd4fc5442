// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/runtime.hpp"

#include <algorithm>
#include <cmath>

#include "vmplan/errors.hpp"
#include "vmplan/rng.hpp"

namespace vmplan::rt {

std::map<std::string, double> reweight_coefficients(const Plan& plan,
                                                    Samples B_global) {
  if (B_global < 1) throw DomainError("reweight_coefficients: B_global < 1");
  Count W = 0;
  for (const auto& e : plan.entries) {
    if (e.batch < 1)
      throw DomainError("reweight_coefficients: zero batch for type " +
                        e.vm_type_id);
    W += e.count;
  }
  std::map<std::string, double> out;
  for (const auto& e : plan.entries)
    out[e.vm_type_id] = static_cast<double>(W) * static_cast<double>(e.batch) /
                        static_cast<double>(B_global);
  return out;
}

std::optional<Throughput> windowed_throughput(
    const std::deque<WindowSample>& window, double now, double window_minutes,
    double z) {
  double horizon = now - window_minutes * 60.0;
  std::vector<double> xs;
  for (const auto& s : window)
    if (s.timestamp >= horizon && s.timestamp <= now) xs.push_back(s.iters_per_s);
  if (xs.empty()) return std::nullopt;

  Throughput t;
  for (double x : xs) t.mean += x;
  t.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - t.mean) * (x - t.mean);
    t.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  t.optimistic = t.mean + z * t.stddev;
  return t;
}

namespace {

double hourly_rate(const Plan& plan, const std::vector<VmType>& types) {
  double rate = 0.0;
  for (const auto& e : plan.entries) {
    const VmType* t = find_type(types, e.vm_type_id);
    if (t == nullptr)
      throw StructuralError("plan references unknown vm_type_id '" +
                            e.vm_type_id + "'");
    rate += static_cast<double>(e.count) * t->price_per_hour;
  }
  return rate;
}

Samples plan_batch_sum(const Plan& plan) {
  Samples sum = 0;
  for (const auto& e : plan.entries) sum += e.count * e.batch;
  return sum;
}

// Residual job: remaining iterations, limits net of progress and switch
// overheads, and quotas capped at surviving counts for blacklisted types.
TrainJob residual_job(const ProgressState& state, const TrainJob& job,
                      const Overheads& overheads) {
  TrainJob res = job;
  res.N = job.N - state.iterations_done;
  if (job.T_lim)
    res.T_lim = *job.T_lim - state.elapsed - overheads.launch_s -
                overheads.detach_s;
  if (job.budget)
    res.budget = *job.budget - state.spent - overheads.switch_cost;
  for (auto& t : res.candidate_types) {
    if (!state.blacklisted_types.count(t.id)) continue;
    Count surviving = 0;
    for (const auto& e : state.active_plan.entries)
      if (e.vm_type_id == t.id) surviving += e.count;
    t.quota = std::min(t.quota, surviving);
  }
  return res;
}

}  // namespace

SwitchDecision check_and_replan(const ProgressState& state, const TrainJob& job,
                                const PlanFn& solver,
                                const Overheads& overheads,
                                double window_minutes, double z) {
  SwitchDecision decision;
  auto thr = windowed_throughput(state.window, state.elapsed, window_minutes, z);
  if (thr) decision.optimistic_throughput = thr->optimistic;

  // A plan whose surviving capacity no longer sums to B_global cannot
  // continue regardless of throughput.
  bool capacity_ok = plan_batch_sum(state.active_plan) == job.B_global;
  if (capacity_ok) {
    if (!thr) {
      decision.action = SwitchDecision::Action::keep;
      decision.reason = "no window data yet";
      return decision;
    }
    std::int64_t remaining = job.N - state.iterations_done;
    double projected_time =
        state.elapsed + static_cast<double>(remaining) / thr->optimistic;
    double burn = hourly_rate(state.active_plan, job.candidate_types) / 3600.0;
    double projected_cost =
        state.spent + burn * static_cast<double>(remaining) / thr->optimistic;
    bool time_ok = !job.T_lim || projected_time <= *job.T_lim;
    bool cost_ok = !job.budget || projected_cost <= *job.budget;
    if (time_ok && cost_ok) {
      decision.action = SwitchDecision::Action::keep;
      decision.reason = "projection within limits";
      return decision;
    }
    decision.reason = time_ok ? "projected cost exceeds budget"
                              : "projected finish exceeds T_lim";
  } else {
    decision.reason = "active capacity no longer covers B_global";
  }

  opt::SolveResult res = solver(residual_job(state, job, overheads));
  if (res.plan) {
    decision.action = SwitchDecision::Action::replan;
    decision.plan = res.plan;
  } else {
    decision.action = SwitchDecision::Action::unsat;
    decision.reason += "; residual job unsatisfiable: " + res.unsat_reason;
  }
  return decision;
}

SwitchDecision on_preemption(ProgressState& state, const std::string& type_id,
                             Count count, const TrainJob& job,
                             const PlanFn& solver, const Overheads& overheads,
                             double window_minutes, double z) {
  bool active = false;
  for (const auto& e : state.active_plan.entries)
    if (e.vm_type_id == type_id) active = true;
  if (!active) {
    SwitchDecision d;
    d.action = SwitchDecision::Action::keep;
    d.reason = "warning: preemption of inactive type '" + type_id + "' ignored";
    return d;
  }

  state.blacklisted_types.insert(type_id);  // idempotent; never regrows
  Count to_remove = count;
  auto& entries = state.active_plan.entries;
  for (auto& e : entries) {
    if (e.vm_type_id != type_id || to_remove == 0) continue;
    Count dec = std::min(e.count, to_remove);
    e.count -= dec;
    to_remove -= dec;
  }
  entries.erase(std::remove_if(entries.begin(), entries.end(),
                               [](const PlanEntry& e) { return e.count == 0; }),
                entries.end());

  return check_and_replan(state, job, solver, overheads, window_minutes, z);
}

// ----------------------------------------------------------- closed loop ----

namespace {

std::map<std::string, Count> plan_request(const Plan& plan) {
  std::map<std::string, Count> req;
  for (const auto& e : plan.entries) req[e.vm_type_id] += e.count;
  return req;
}

// Batch assignment aligned with the allocation's instance list; alive
// instances beyond the plan's counts stay idle (batch 0).
std::vector<Samples> assign_batches(const cloudsim::Allocation& alloc,
                                    const Plan& plan) {
  std::map<std::string, std::pair<Count, Samples>> want;  // count, batch
  for (const auto& e : plan.entries) {
    auto& w = want[e.vm_type_id];
    w.first += e.count;
    w.second = e.batch;
  }
  std::vector<Samples> batches(alloc.instances().size(), 0);
  for (std::size_t i = 0; i < alloc.instances().size(); ++i) {
    const auto& inst = alloc.instances()[i];
    if (!inst.alive) continue;
    auto it = want.find(inst.type_id);
    if (it == want.end() || it->second.first == 0) continue;
    batches[i] = it->second.second;
    --it->second.first;
  }
  for (const auto& [id, w] : want)
    if (w.first > 0)
      throw Error("internal: allocation lacks " + std::to_string(w.first) +
                  " instances of " + id);
  return batches;
}

double cohort_launch_overhead(const Plan& plan, const TrainJob& job,
                              const Overheads& overheads) {
  double launch = overheads.launch_s;
  for (const auto& e : plan.entries) {
    const VmType* t = find_type(job.candidate_types, e.vm_type_id);
    if (t != nullptr && t->launch_overhead > 0.0)
      launch = std::max(launch, t->launch_overhead);
  }
  return launch;
}

}  // namespace

EventLog run_closed_loop(const TrainJob& job, const ModelProfile& profile,
                         const netmodel::BandwidthModel& bw_model,
                         const cloudsim::CloudSpec& spec,
                         const RunOptions& options) {
  EventLog log;
  std::uint64_t plan_seed = derive_seed(options.seed, "plan_sim");
  opt::SimFn sim_fn = [&](const sim::Selection& sel) {
    return sim::simulate_iteration(profile, sel, bw_model, options.sim_iters,
                                   plan_seed);
  };
  PlanFn solver = [&](const TrainJob& j) {
    return opt::solve(j, profile, sim_fn, options.optimizer);
  };

  ProgressState state;
  auto initial = opt::solve(job, profile, sim_fn, options.optimizer);
  if (!initial.plan) {
    log.append(0.0, "decision",
               {{"action", "unsat"}, {"reason", initial.unsat_reason}});
    log.append(0.0, "run_end",
               {{"status", "unsat"}, {"iterations", 0}, {"spent", 0.0}});
    return log;
  }

  double wall = 0.0;
  state.active_plan = *initial.plan;
  log.append(wall, "plan_adopted",
             {{"plan", to_json(state.active_plan)},
              {"reason", "initial"},
              {"mode", initial.stats.mode_used ==
                               opt::SearchSpaceStats::Mode::exhaustive
                           ? "exhaustive"
                           : "anchor_approx"},
              {"sims_executed", initial.stats.sims_executed},
              {"reweight", reweight_coefficients(state.active_plan, job.B_global)}});

  auto alloc = cloudsim::allocate(spec, plan_request(state.active_plan),
                                  derive_seed(options.seed, "alloc"));
  wall += cohort_launch_overhead(state.active_plan, job, options.overheads);
  state.elapsed = wall;
  log.append(wall, "launch_complete", {{"request", plan_request(state.active_plan)}});

  std::uint64_t exec_counter = 0;
  int replans = 0;

  auto adopt = [&](const Plan& next) {
    // Grow/shrink the cluster to match the new plan; detach plus launch
    // overheads burn wall-clock, surviving instances keep billing.
    std::map<std::string, Count> to_launch;
    for (const auto& [id, want] : plan_request(next)) {
      Count have = alloc.alive_count(id);
      if (want > have) to_launch[id] = want - have;
    }
    for (const auto& [id, want] : plan_request(next)) {
      Count have = alloc.alive_count(id);
      if (want < have) alloc.remove_instances(id, have - want);
    }
    // Release types dropped entirely.
    for (const auto& inst : alloc.instances()) {
      if (inst.alive && !plan_request(next).count(inst.type_id))
        alloc.remove_instances(inst.type_id, alloc.alive_count(inst.type_id));
    }
    double surviving_rate = hourly_rate(state.active_plan, job.candidate_types);
    double switch_time = options.overheads.detach_s;
    if (!to_launch.empty()) {
      switch_time += cohort_launch_overhead(next, job, options.overheads);
      alloc.add_instances(to_launch);
    }
    wall += switch_time;
    state.spent += surviving_rate * switch_time / 3600.0;
    state.active_plan = next;
    state.elapsed = wall;
    state.window.clear();  // fresh hardware invalidates old samples
    ++replans;
    log.append(wall, "launch_complete", {{"request", to_launch}});
  };

  while (state.iterations_done < job.N) {
    auto batches = assign_batches(alloc, state.active_plan);
    auto outcome =
        alloc.run_iterations(spec.true_profile, batches, 1,
                             derive_seed(options.seed, exec_counter++), wall);

    if (outcome.preemption) {
      wall = outcome.end_time;
      state.elapsed = wall;
      log.append(wall, "preemption",
                 {{"type_id", outcome.preemption->type_id},
                  {"count", static_cast<double>(outcome.preemption->count)}});
      SwitchDecision d =
          on_preemption(state, outcome.preemption->type_id,
                        outcome.preemption->count, job, solver,
                        options.overheads, options.window_minutes, options.z);
      log.append(wall, "decision",
                 {{"action", d.action == SwitchDecision::Action::replan
                                 ? "replan"
                                 : d.action == SwitchDecision::Action::unsat
                                       ? "unsat"
                                       : "keep"},
                  {"reason", d.reason},
                  {"optimistic_throughput", d.optimistic_throughput}});
      if (d.action == SwitchDecision::Action::unsat) {
        log.append(wall, "run_end",
                   {{"status", "unsat"},
                    {"iterations", state.iterations_done},
                    {"spent", state.spent}});
        return log;
      }
      if (d.action == SwitchDecision::Action::replan) {
        adopt(*d.plan);
        log.append(wall, "plan_adopted",
                   {{"plan", to_json(state.active_plan)},
                    {"reason", "preemption"},
                    {"reweight",
                     reweight_coefficients(state.active_plan, job.B_global)}});
      }
      continue;
    }

    double t_iter = outcome.iteration_latencies.at(0);
    wall = outcome.end_time;
    state.elapsed = wall;
    state.iterations_done += 1;
    state.spent += hourly_rate(state.active_plan, job.candidate_types) *
                   t_iter / 3600.0;
    state.window.push_back({wall, 1.0 / t_iter});
    double horizon = wall - options.window_minutes * 60.0;
    while (!state.window.empty() && state.window.front().timestamp < horizon)
      state.window.pop_front();
    log.append(wall, "iteration",
               {{"i", state.iterations_done - 1}, {"latency_s", t_iter}});

    if (job.budget && state.spent > *job.budget) {
      log.append(wall, "run_end",
                 {{"status", "budget-exhausted"},
                  {"iterations", state.iterations_done},
                  {"spent", state.spent}});
      return log;
    }
    if (state.iterations_done >= job.N) break;

    SwitchDecision d = check_and_replan(state, job, solver, options.overheads,
                                        options.window_minutes, options.z);
    if (d.action == SwitchDecision::Action::unsat) {
      log.append(wall, "decision",
                 {{"action", "unsat"}, {"reason", d.reason}});
      log.append(wall, "run_end",
                 {{"status", "unsat"},
                  {"iterations", state.iterations_done},
                  {"spent", state.spent}});
      return log;
    }
    if (d.action == SwitchDecision::Action::replan) {
      log.append(wall, "decision",
                 {{"action", "replan"},
                  {"reason", d.reason},
                  {"optimistic_throughput", d.optimistic_throughput}});
      adopt(*d.plan);
      log.append(wall, "plan_adopted",
                 {{"plan", to_json(state.active_plan)},
                  {"reason", "projection"},
                  {"reweight",
                   reweight_coefficients(state.active_plan, job.B_global)}});
    }
  }

  log.append(wall, "run_end",
             {{"status", "completed"},
              {"iterations", state.iterations_done},
              {"spent", state.spent}});
  return log;
}

}  // namespace vmplan::rt
