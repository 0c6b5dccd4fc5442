// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bandwidth-sharing event-queue kernel for overlapped parameter exchange.
// The kernel is deliberately free of any prediction logic: callers supply
// per-transfer start times, effective byte counts, and a bandwidth lookup at
// activation time. Both the predictor and the synthetic ground-truth engine
// drive this same kernel with different inputs.
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace vmplan::sim {

struct Transfer {
  double start_time = 0.0;       // seconds from backward-pass start
  double effective_bytes = 0.0;  // 2*s*(n-1)/n, so remaining/b_tra is wall time
};

// Audit record emitted after every time advance: the transfer rates that
// were in force over [now - timespan, now].
struct ElapseRecord {
  double now = 0.0;
  double timespan = 0.0;
  std::vector<std::pair<int, double>> active_rates;  // (transfer idx, b_tra)
};

using ExchangeObserver = std::function<void(const ElapseRecord&)>;

// Runs the exchange to completion and returns the timestamp of the last
// transfer completion (0 when there are no transfers).
//
// bandwidth_at_activation(idx, c) is queried once per transfer when it
// starts, with c = number of active transfers including this one; the result
// (b_bus) is retained for the transfer's lifetime. After every activation or
// completion the fair-sharing rule reassigns each active transfer's rate:
//   b_tra = b_bus            if sum of active b_bus < b_cap
//   b_tra = min(b_bus, b_cap / c)  otherwise.
// Ties in event time process completions before starts, lower transfer index
// first. Deterministic.
double run_exchange(
    std::span<const Transfer> transfers,
    const std::function<double(int idx, int concurrency)>& bandwidth_at_activation,
    double b_cap, const ExchangeObserver& observer = nullptr);

}  // namespace vmplan::sim
