// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/optimizer.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <sstream>

#include "vmplan/errors.hpp"
#include "vmplan/profiler.hpp"

namespace vmplan::opt {

namespace {

std::vector<Samples> power_of_two_batches(const VmType& t, Samples b_global) {
  std::vector<Samples> out;
  Samples hi = std::min(t.memcap_batch, b_global);
  for (Samples b = 1; b <= hi; b *= 2)
    if (b >= t.threshold_batch) out.push_back(b);
  return out;
}

double objective_of(const TrainJob& job, const Plan& p) {
  return job.objective == Objective::min_cost ? p.predicted_cost
                                              : p.predicted_time;
}

Count total_instances(const Plan& p) {
  Count n = 0;
  for (const auto& e : p.entries) n += e.count;
  return n;
}

// Deterministic total order: objective, then fewer instances, then
// lexicographic entries.
bool plan_better(const TrainJob& job, const Plan& a, const Plan& b) {
  double oa = objective_of(job, a), ob = objective_of(job, b);
  if (oa != ob) return oa < ob;
  Count ia = total_instances(a), ib = total_instances(b);
  if (ia != ib) return ia < ib;
  auto key = [](const Plan& p) {
    std::vector<std::tuple<std::string, Count, Samples>> k;
    for (const auto& e : p.entries) k.emplace_back(e.vm_type_id, e.count, e.batch);
    return k;
  };
  return key(a) < key(b);
}

bool meets_constraints(const TrainJob& job, const Plan& p) {
  if (job.T_lim && p.predicted_time > *job.T_lim) return false;
  if (job.budget && p.predicted_cost > *job.budget) return false;
  return true;
}

double fwbw_latency(const ModelProfile& profile, const VmType& t, Samples b) {
  auto it = profile.latency_models.find(t.device_kind);
  if (it == profile.latency_models.end())
    throw StructuralError("profile '" + profile.model_id +
                          "' has no latency model for device kind '" +
                          t.device_kind + "'");
  return profiler::predict_latency(it->second.fw, b) +
         profiler::predict_latency(it->second.bw, b);
}

}  // namespace

Plan make_plan(const TrainJob& job, const sim::Selection& selection,
               double t_iter_mean) {
  Plan p;
  for (const auto& e : selection.entries)
    p.entries.push_back({e.vm_type.id, e.count, e.batch});
  std::sort(p.entries.begin(), p.entries.end(),
            [](const PlanEntry& a, const PlanEntry& b) {
              return a.vm_type_id < b.vm_type_id;
            });
  p.predicted_t_iter = t_iter_mean;
  p.predicted_time = static_cast<double>(job.N) * t_iter_mean;
  double rate = 0.0;  // currency per hour
  for (const auto& e : selection.entries)
    rate += static_cast<double>(e.count) * e.vm_type.price_per_hour;
  p.predicted_cost = p.predicted_time / 3600.0 * rate;
  return p;
}

PruneResult prune_search_space(const TrainJob& job, const Options&) {
  if (job.candidate_types.empty())
    return {{}, {}, false, "no candidate types"};

  PruneResult out;
  bool any_gpu = std::any_of(
      job.candidate_types.begin(), job.candidate_types.end(),
      [](const VmType& t) { return !is_cpu_device(t.device_kind); });
  for (const auto& t : job.candidate_types) {
    if (any_gpu && is_cpu_device(t.device_kind)) continue;  // Takeaway: GPUs win
    out.kept_types.push_back(t);
  }

  __int128 estimate = 1;
  Samples max_reachable = 0;
  bool any_batches = false;
  for (const auto& t : out.kept_types) {
    auto batches = power_of_two_batches(t, job.B_global);
    if (!batches.empty()) {
      any_batches = true;
      max_reachable += batches.back() * t.quota;
    }
    estimate *= static_cast<__int128>(batches.size()) * t.quota + 1;
    if (estimate > std::numeric_limits<std::int64_t>::max())
      estimate = std::numeric_limits<std::int64_t>::max();
    out.stats.candidate_batch_sets[t.id] = std::move(batches);
  }
  out.stats.estimated_sim_invocations = static_cast<std::int64_t>(estimate);

  if (!any_batches || max_reachable < job.B_global) {
    out.feasible = false;
    out.unsat_reason = "batch bounds/quota eliminate all configurations";
  }
  return out;
}

namespace {

// DFS over (batch, count) choices per type with an exact batch-sum target.
void enumerate_candidates(const std::vector<VmType>& types,
                          const SearchSpaceStats& stats, Samples remaining,
                          std::size_t idx, sim::Selection& partial,
                          const std::function<void(const sim::Selection&)>& emit) {
  if (idx == types.size()) {
    if (remaining == 0 && !partial.entries.empty()) emit(partial);
    return;
  }
  // Option: this type absent.
  enumerate_candidates(types, stats, remaining, idx + 1, partial, emit);
  const VmType& t = types[idx];
  for (Samples b : stats.candidate_batch_sets.at(t.id)) {
    for (Count k = 1; k <= t.quota && k * b <= remaining; ++k) {
      partial.entries.push_back({t, k, b});
      enumerate_candidates(types, stats, remaining - k * b, idx + 1, partial,
                           emit);
      partial.entries.pop_back();
    }
  }
}

struct BestTracker {
  std::optional<Plan> best;          // feasible
  std::optional<Plan> best_any;      // ignoring T_lim/budget, for diagnostics

  void offer(const TrainJob& job, const Plan& p) {
    if (!best_any || plan_better(job, p, *best_any)) best_any = p;
    if (meets_constraints(job, p) && (!best || plan_better(job, p, *best)))
      best = p;
  }
};

}  // namespace

SolveResult exhaustive_search(const TrainJob& job, const ModelProfile&,
                              const SimFn& sim, PruneResult& pruned) {
  pruned.stats.mode_used = SearchSpaceStats::Mode::exhaustive;
  BestTracker tracker;
  sim::Selection partial;
  enumerate_candidates(pruned.kept_types, pruned.stats, job.B_global, 0,
                       partial, [&](const sim::Selection& sel) {
                         sim::SimResult r = sim(sel);
                         ++pruned.stats.sims_executed;
                         tracker.offer(job, make_plan(job, sel, r.t_iter_mean));
                       });

  SolveResult out;
  out.stats = pruned.stats;
  if (tracker.best) {
    out.plan = tracker.best;
  } else {
    out.unsat_reason = pruned.stats.sims_executed == 0
                           ? "batch bounds/quota eliminate all configurations"
                           : "all candidates violate time/budget constraints";
    out.best_infeasible = tracker.best_any;
  }
  return out;
}

std::map<std::string, Samples> anchor_batches(Samples B_anchor,
                                              const VmType& anchor_type,
                                              std::span<const VmType> types,
                                              const ModelProfile& profile) {
  if (B_anchor < anchor_type.threshold_batch ||
      B_anchor > anchor_type.memcap_batch)
    throw DomainError("anchor_batches: B_anchor outside anchor type bounds");
  double target = fwbw_latency(profile, anchor_type, B_anchor);

  std::map<std::string, Samples> out;
  for (const auto& t : types) {
    if (t.id == anchor_type.id) {
      out[t.id] = B_anchor;
      continue;
    }
    // Largest power of two within bounds whose latency stays at or below the
    // anchor's; scanning the log-many powers top-down is the binary search.
    Samples chosen = 0;
    Samples hi = t.memcap_batch;
    Samples p = 1;
    while (p * 2 <= hi) p *= 2;
    for (; p >= t.threshold_batch; p /= 2) {
      if (fwbw_latency(profile, t, p) <= target) {
        chosen = p;
        break;
      }
    }
    if (chosen > 0) out[t.id] = chosen;  // otherwise excluded: too slow
  }
  return out;
}

std::optional<std::map<std::string, Count>> solve_counts(
    const std::map<std::string, Samples>& batches, Samples B_global,
    const std::map<std::string, Count>& quotas,
    const std::map<std::string, double>& prices) {
  for (const auto& [id, b] : batches)
    if (b < 1) throw DomainError("solve_counts: batch < 1 for type " + id);

  struct Value {
    Count count = 0;
    double price = 0.0;
    bool operator<(const Value& o) const {
      if (count != o.count) return count < o.count;
      return price < o.price;
    }
  };
  constexpr Count kUnreachable = std::numeric_limits<Count>::max();

  std::vector<std::string> ids;
  for (const auto& [id, b] : batches) ids.push_back(id);  // map order: sorted

  std::size_t sums = static_cast<std::size_t>(B_global) + 1;
  std::vector<Value> dp(sums, {kUnreachable, 0.0});
  dp[0] = {0, 0.0};
  // choice[stage][s]: count of type `stage` used to reach sum s.
  std::vector<std::vector<Count>> choice(ids.size(),
                                         std::vector<Count>(sums, -1));

  for (std::size_t t = 0; t < ids.size(); ++t) {
    Samples b = batches.at(ids[t]);
    Count quota = quotas.count(ids[t]) ? quotas.at(ids[t]) : 0;
    double price = prices.count(ids[t]) ? prices.at(ids[t]) : 0.0;
    std::vector<Value> next(sums, {kUnreachable, 0.0});
    for (std::size_t s = 0; s < sums; ++s) {
      if (dp[s].count == kUnreachable) continue;
      for (Count k = 0; k <= quota; ++k) {
        Samples reach = static_cast<Samples>(s) + k * b;
        if (reach > B_global) break;
        Value cand{dp[s].count + k, dp[s].price + static_cast<double>(k) * price};
        auto ri = static_cast<std::size_t>(reach);
        if (next[ri].count == kUnreachable || cand < next[ri]) {
          next[ri] = cand;
          choice[t][ri] = k;
        }
      }
    }
    dp = std::move(next);
  }

  if (dp[static_cast<std::size_t>(B_global)].count == kUnreachable)
    return std::nullopt;

  std::map<std::string, Count> counts;
  Samples s = B_global;
  for (std::size_t t = ids.size(); t-- > 0;) {
    Count k = choice[t][static_cast<std::size_t>(s)];
    counts[ids[t]] = k;
    s -= k * batches.at(ids[t]);
  }
  return counts;
}

SolveResult approx_solve(const TrainJob& job, const ModelProfile& profile,
                         const SimFn& sim, PruneResult& pruned) {
  pruned.stats.mode_used = SearchSpaceStats::Mode::anchor_approx;

  std::map<std::string, Count> quotas;
  std::map<std::string, double> prices;
  for (const auto& t : pruned.kept_types) {
    quotas[t.id] = t.quota;
    prices[t.id] = t.price_per_hour;
  }

  BestTracker tracker;
  std::set<std::map<std::string, Samples>> seen;  // dedup identical subproblems
  for (const auto& anchor : pruned.kept_types) {
    for (Samples b_anchor : pruned.stats.candidate_batch_sets.at(anchor.id)) {
      auto batches = anchor_batches(b_anchor, anchor, pruned.kept_types, profile);
      if (batches.empty() || !seen.insert(batches).second) continue;

      auto counts = solve_counts(batches, job.B_global, quotas, prices);
      if (!counts) continue;

      sim::Selection sel;
      for (const auto& t : pruned.kept_types) {
        auto it = counts->find(t.id);
        if (it != counts->end() && it->second > 0)
          sel.entries.push_back({t, it->second, batches.at(t.id)});
      }
      if (sel.entries.empty()) continue;

      sim::SimResult r = sim(sel);
      ++pruned.stats.sims_executed;
      tracker.offer(job, make_plan(job, sel, r.t_iter_mean));
    }
  }

  SolveResult out;
  out.stats = pruned.stats;
  if (tracker.best) {
    out.plan = tracker.best;
  } else {
    out.unsat_reason = pruned.stats.sims_executed == 0
                           ? "no anchor yields an exact batch decomposition"
                           : "all anchor plans violate time/budget constraints";
    out.best_infeasible = tracker.best_any;
  }
  return out;
}

SolveResult solve(const TrainJob& job, const ModelProfile& profile,
                  const SimFn& sim, const Options& options) {
  PruneResult pruned = prune_search_space(job, options);
  if (!pruned.feasible) {
    SolveResult out;
    out.stats = pruned.stats;
    out.unsat_reason = pruned.unsat_reason;
    return out;
  }

  SolveResult out =
      pruned.stats.estimated_sim_invocations <= options.exhaustive_gate
          ? exhaustive_search(job, profile, sim, pruned)
          : approx_solve(job, profile, sim, pruned);

  if (out.plan) {
    auto violations = validate_plan(*out.plan, job);
    if (!violations.empty()) {
      std::ostringstream msg;
      msg << "internal: solver produced an invalid plan:";
      for (const auto& v : violations) msg << " [" << v.constraint << "] " << v.detail;
      throw Error(msg.str());
    }
  }
  return out;
}

}  // namespace vmplan::opt
