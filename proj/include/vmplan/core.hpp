// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared domain types. Units are fixed globally: seconds, bytes,
// bytes/second, samples, currency/hour (billed by linear proration).
// rated_network alone is in bits/second, matching provider spec sheets.
// All types are immutable value objects after construction.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vmplan {

using Samples = std::int64_t;
using Count = std::int64_t;

enum class Billing { on_demand, spot };
enum class Objective { min_time, min_cost };

struct LatencySegment {
  Samples batch_lo = 0;
  Samples batch_hi = 0;
  double alpha = 0.0;  // seconds per sample
  double beta = 0.0;   // seconds
};

// Piecewise linear latency vs local batch size. Segments are contiguous,
// cover [1, b_max], and predictions are non-decreasing in B.
struct PiecewiseLatencyModel {
  std::vector<LatencySegment> segments;
  Samples b_max = 0;
};

struct PassModels {
  PiecewiseLatencyModel fw;
  PiecewiseLatencyModel bw;
};

// A purchasable instance type. A device_kind containing "cpu"
// (case-insensitive) marks a CPU-only type for search-space pruning.
struct VmType {
  std::string id;
  std::string device_kind;
  double price_per_hour = 0.0;
  double bus_bandwidth_cap = 0.0;  // bytes/second
  Samples memcap_batch = 0;        // max local batch fitting in device memory
  Samples threshold_batch = 1;     // min efficient local batch
  Count quota = 0;
  Billing billing = Billing::on_demand;
  double launch_overhead = 0.0;  // seconds
  std::string region;
  std::string zone;
  std::string placement_group;
  double rated_network = 0.0;  // bits/second
};

// An NN's communication/computation fingerprint. layer_sizes and
// exchange_fractions are in back-prop order; fractions need not be sorted
// (frameworks may reorder allreduce issue order).
struct ModelProfile {
  std::string model_id;
  std::vector<double> layer_sizes;         // gradient bytes per layer
  std::vector<double> exchange_fractions;  // in [0, 1], same length
  std::map<std::string, PassModels> latency_models;  // keyed by device_kind
  std::map<std::string, double> latency_stddev;      // relative, by device_kind
};

struct PlanEntry {
  std::string vm_type_id;
  Count count = 0;
  Samples batch = 0;
};

struct Plan {
  std::vector<PlanEntry> entries;
  double predicted_t_iter = 0.0;  // seconds
  double predicted_time = 0.0;    // seconds, N * t_iter
  double predicted_cost = 0.0;    // currency
};

struct TrainJob {
  std::string profile;  // model_id of the ModelProfile this job trains
  Samples B_global = 0;
  std::int64_t N = 0;            // iterations
  std::optional<double> T_lim;   // seconds
  std::optional<double> budget;  // currency
  Objective objective = Objective::min_time;
  std::vector<VmType> candidate_types;
};

// One violated constraint; `constraint` is a stable machine-readable tag
// (batch-sum, batch-bounds, count, quota, time-limit, budget) and `detail`
// carries the offending quantities.
struct Violation {
  std::string constraint;
  std::string detail;
};

// Pure function: checks batch-sum, per-type batch bounds, quota bounds and,
// when the plan carries predictions (> 0), the job's T_lim/budget. Empty
// result means the plan is valid. A vm_type_id that does not resolve against
// job.candidate_types is a StructuralError, not a violation.
std::vector<Violation> validate_plan(const Plan& plan, const TrainJob& job);

// True when device_kind names a CPU-only device (see VmType).
bool is_cpu_device(const std::string& device_kind);

const VmType* find_type(const std::vector<VmType>& types, const std::string& id);

}  // namespace vmplan
