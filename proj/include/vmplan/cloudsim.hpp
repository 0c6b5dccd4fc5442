// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic ground-truth cloud: a seeded cluster with spatial (per
// allocation, per VM) and temporal variance plus scripted preemptions. It
// supplies probe data and the latency ground truth the predictor is judged
// against. The truth path shares only the exchange event-queue kernel with
// the predictor; all of its inputs (latencies, bandwidths) are independent.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmplan/core.hpp"
#include "vmplan/jsonio.hpp"
#include "vmplan/profiler.hpp"

namespace vmplan::cloudsim {

struct TypeTruth {
  std::string device_kind;
  double base_bus_bandwidth = 0.0;  // bytes/s at full size efficiency
  double bus_bandwidth_cap = 0.0;   // bytes/s
  // Allocation-level bandwidth factor, drawn uniformly per allocation.
  std::array<double, 2> allocation_factor_range{1.0, 1.0};
  double temporal_bandwidth_stddev = 0.0;  // relative, per transfer
  // Per-VM compute bias ~ Normal(1, stddev) truncated to the range.
  double compute_bias_stddev = 0.0;
  std::array<double, 2> compute_bias_range{1.0, 1.0};
  // b_eff(s) = base * s / (s + size_efficiency_half): small buffers achieve
  // lower bus bandwidth.
  double size_efficiency_half = 4.0 * 1024 * 1024;
  Samples true_memcap = 0;  // fits(B) iff B <= true_memcap
};

struct PreemptionEvent {
  double time = 0.0;  // absolute wall-clock seconds
  std::string type_id;
  Count count = 1;
};

struct CloudSpec {
  std::uint64_t seed = 0;
  std::map<std::string, TypeTruth> types;
  // True NN behavior: latency_models/latency_stddev are the per-device truth
  // generators; layer_sizes/exchange_fractions the true exchange structure.
  ModelProfile true_profile;
  std::vector<PreemptionEvent> preemption_script;
};

Json to_json(const CloudSpec& s);
CloudSpec cloudspec_from_json(const Json& j);

struct Instance {
  std::string type_id;
  double compute_bias = 1.0;
  double bandwidth_factor = 1.0;  // of the cohort it was allocated with
  bool alive = true;
};

struct RunOutcome {
  std::vector<double> iteration_latencies;  // completed iterations only
  std::optional<PreemptionEvent> preemption;
  double end_time = 0.0;  // wall clock when the run stopped
};

// A stateful cluster: instances with drawn biases/factors and a probe
// counter, so every observation is a pure function of (spec, seeds, call
// order). Single-threaded per allocation.
class Allocation {
 public:
  Allocation(const CloudSpec& spec, const std::map<std::string, Count>& request,
             std::uint64_t seed);

  // Grows the cluster; the new cohort draws a fresh allocation factor.
  void add_instances(const std::map<std::string, Count>& request);

  // Marks up to `count` alive instances of the type as gone (billing and
  // participation stop). Used for voluntary release and preemption alike.
  Count remove_instances(const std::string& type_id, Count count);

  const std::vector<Instance>& instances() const { return instances_; }
  Count alive_count(const std::string& type_id) const;

  // Ground-truth allreduce probe: t = 2s(n-1)/(n * b_true), with b_true =
  // base * allocation_factor * size_efficiency(s) * temporal noise. Uses the
  // first `participants` alive instances. `concurrent` is recorded by
  // callers as a feature; the truth does not depend on it.
  double probe_allreduce(double s_bytes, Count participants, Count concurrent);

  // True iteration latencies for alive instances with batch > 0. Stops early
  // when a scripted preemption fires, reporting the partial run. start_time
  // anchors the wall clock against the preemption script.
  RunOutcome run_iterations(const ModelProfile& true_profile,
                            const std::vector<Samples>& batch_per_instance,
                            std::int64_t iters, std::uint64_t seed,
                            double start_time = 0.0);

  // True max batch oracle for the profiler.
  bool fits(const std::string& type_id, Samples batch) const;

  struct ComputeProbe {
    double fw_s = 0.0;
    double bw_s = 0.0;
  };

  // One instrumented iteration on the first alive instance of the type:
  // true per-pass latency times the instance bias and temporal noise.
  // Throws DomainError when the batch does not fit.
  ComputeProbe probe_compute(const std::string& type_id, Samples batch);

  // Layer completion timestamps of one backward pass at this batch.
  profiler::BackwardTrace probe_backward_trace(const std::string& type_id,
                                               Samples batch);

 private:
  double true_bandwidth(double s_bytes,
                        const std::vector<std::size_t>& participants,
                        double noise) const;

  const CloudSpec& spec_;
  std::vector<Instance> instances_;
  std::uint64_t seed_;
  std::uint64_t cohort_counter_ = 0;
  std::uint64_t probe_counter_ = 0;
  std::size_t script_cursor_ = 0;
};

Allocation allocate(const CloudSpec& spec,
                    const std::map<std::string, Count>& request,
                    std::uint64_t seed);

// Convenience for tests and acceptance: a copy of the spec with every
// variance source disabled (factors pinned to 1, stddevs to 0).
CloudSpec without_variance(CloudSpec spec);

}  // namespace vmplan::cloudsim
