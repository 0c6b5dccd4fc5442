// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Iteration latency predictor: t_iter = t_fw(B) + max(t_bw(B), t_pe).
// Compute latencies are sampled per iteration from truncated normals (the
// slowest VM bounds each pass); t_pe comes from one bandwidth-sharing
// exchange simulation driven by the learned bandwidth model.
#pragma once

#include <cstdint>
#include <vector>

#include "vmplan/core.hpp"
#include "vmplan/exchange.hpp"
#include "vmplan/netmodel.hpp"

namespace vmplan::sim {

struct SelectionEntry {
  VmType vm_type;
  Count count = 0;
  Samples batch = 0;
};

struct Selection {
  std::vector<SelectionEntry> entries;

  Count world_size() const {
    Count n = 0;
    for (const auto& e : entries) n += e.count;
    return n;
  }
};

struct SimResult {
  double t_iter_mean = 0.0;
  double t_fw_mean = 0.0;
  double t_bw_mean = 0.0;
  double t_pe = 0.0;
  std::vector<double> per_iteration_latencies;
};

struct ComputeSample {
  double t_fw_mean = 0.0;
  double t_bw_mean = 0.0;
  std::vector<double> fw;  // per-iteration max over VMs
  std::vector<double> bw;
};

// Per iteration and per VM, draws fw and bw latency from
// Normal(mean = predicted latency, sd = relative_dev * mean) truncated below
// at 0.1 * mean; the iteration's latency for each pass is the max over VMs.
// Deterministic given seed. Throws StructuralError when a device kind has no
// latency model in the profile.
ComputeSample sample_compute(const Selection& selection,
                             const ModelProfile& profile, std::int64_t iters,
                             std::uint64_t seed);

// Event-queue exchange over the profile's layers: layer i starts at
// exchange_fraction_i * t_bw, carries 2*s*(n-1)/n effective bytes at the
// bandwidth predicted for the slowest selected type, and shares the min
// bus_bandwidth_cap across the selection. Returns the last completion time
// measured from backward-pass start (0 when world_size < 2).
double simulate_parameter_exchange(const ModelProfile& profile,
                                   const Selection& selection,
                                   const netmodel::BandwidthModel& bw_model,
                                   double t_bw,
                                   const ExchangeObserver& observer = nullptr);

// Composes the two: compute sampled per iteration, t_pe computed once from
// the mean t_bw. per-iteration t_iter = t_fw_i + max(t_bw_i, t_pe).
SimResult simulate_iteration(const ModelProfile& profile,
                             const Selection& selection,
                             const netmodel::BandwidthModel& bw_model,
                             std::int64_t iters, std::uint64_t seed);

// Default iteration sample count used by callers that do not override it.
inline constexpr std::int64_t kDefaultIters = 100;

}  // namespace vmplan::sim
