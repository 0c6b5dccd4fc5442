// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fits per-device compute latency models from probe traces and extracts the
// normalized gradient-exchange timestamps that the simulator overlaps
// against. All functions are pure; callers may profile device kinds
// concurrently.
#pragma once

#include <functional>
#include <vector>

#include "vmplan/core.hpp"

namespace vmplan::profiler {

enum class Pass { fw, bw };

struct LatencySample {
  Samples batch = 0;
  double fw_latency = 0.0;  // seconds
  double bw_latency = 0.0;  // seconds
  Count replicate_index = 0;
};

struct BackwardTrace {
  std::vector<double> layer_completion_times;  // seconds from backward start
  double total_bw_time = 0.0;                  // seconds
};

// Largest B <= upper_bound for which fits(B) holds, by binary search.
// fits must be monotone (fits(B) implies fits(B') for all B' < B).
// Throws DomainError when fits(1) is false (model does not fit on device).
Samples find_max_batch(const std::function<bool(Samples)>& fits,
                       Samples upper_bound);

// Probe batches: powers of two up to b_max plus b_max itself. With the
// 4-probe budget this is down-selected to {1, b_max/4, b_max/2, b_max}.
std::vector<Samples> probe_schedule(Samples b_max, bool budgeted);

// One linear segment per adjacent pair of probed batch values; parameters
// are the least-squares fit over the replicates at the two endpoints (which
// equals the line through the per-batch means). Per-batch means are made
// non-decreasing before segment construction so predictions satisfy the
// model invariants. b_max = 0 defaults to the largest probed batch.
// Throws DomainError on fewer than 2 distinct batch values.
PiecewiseLatencyModel fit_latency_model(const std::vector<LatencySample>& samples,
                                        Pass pass, Samples b_max = 0);

// alpha*B + beta of the segment containing B. B < 1 or B > b_max throws
// DomainError (above b_max is an out-of-memory prediction).
double predict_latency(const PiecewiseLatencyModel& model, Samples batch);

// Smallest probed batch whose throughput B/t(B) reaches at least
// `throughput_cutoff` of the max over probed batches. Probed batches are
// recovered from the model's segment knots.
Samples find_threshold_batch(const PiecewiseLatencyModel& model,
                             double throughput_cutoff = 0.9);

// completion_time / total_bw_time per layer, clamped to [0, 1]; order is
// preserved (allreduce schedules may be reordered). Throws DomainError on
// negative completion times or non-positive total.
std::vector<double> extract_exchange_fractions(const BackwardTrace& trace);

struct StddevEstimate {
  double rel_stddev = 0.0;       // pooled sample stddev / mean
  bool single_replicate = false;  // no batch had >= 2 replicates
};

// Pooled relative deviation of iteration latency (fw + bw) across probed
// batches, weighting each batch by its replicate degrees of freedom.
StddevEstimate estimate_stddev(const std::vector<LatencySample>& samples);

}  // namespace vmplan::profiler
