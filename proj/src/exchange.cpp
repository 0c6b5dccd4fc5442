// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/exchange.hpp"

#include <algorithm>
#include <queue>

#include "vmplan/errors.hpp"

namespace vmplan::sim {

namespace {

enum class EventKind { finish = 0, start = 1 };  // finish first on time ties

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::start;
  int idx = -1;
  std::uint64_t token = 0;  // finish events are stale unless tokens match

  bool operator>(const Event& o) const {
    if (time != o.time) return time > o.time;
    if (kind != o.kind) return kind > o.kind;
    return idx > o.idx;
  }
};

struct ActiveTransfer {
  double remaining = 0.0;
  double b_bus = 0.0;
  double b_tra = 0.0;
  std::uint64_t token = 0;
};

}  // namespace

double run_exchange(
    std::span<const Transfer> transfers,
    const std::function<double(int, int)>& bandwidth_at_activation,
    double b_cap, const ExchangeObserver& observer) {
  if (b_cap <= 0.0) throw DomainError("run_exchange: b_cap must be > 0");

  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue;
  for (int i = 0; i < static_cast<int>(transfers.size()); ++i) {
    if (transfers[i].start_time < 0.0)
      throw DomainError("run_exchange: negative start time");
    queue.push({transfers[i].start_time, EventKind::start, i, 0});
  }

  std::vector<ActiveTransfer> state(transfers.size());
  std::vector<int> active;  // indices, kept sorted for determinism
  std::uint64_t next_token = 1;
  double now = 0.0;
  double last_completion = 0.0;

  auto reshare_and_requeue = [&] {
    double b_agg = 0.0;
    for (int i : active) b_agg += state[i].b_bus;
    int c = static_cast<int>(active.size());
    for (int i : active) {
      auto& tr = state[i];
      tr.b_tra = (b_agg < b_cap) ? tr.b_bus
                                 : std::min(tr.b_bus, b_cap / c);
      tr.token = next_token++;
      queue.push({now + tr.remaining / tr.b_tra, EventKind::finish, i, tr.token});
    }
  };

  while (!queue.empty()) {
    Event ev = queue.top();
    queue.pop();

    if (ev.kind == EventKind::finish) {
      // Stale finish events (token mismatch) still advance time correctly
      // below, but must not complete anything; skip them before elapsing so
      // they cause no reshare either.
      auto it = std::find(active.begin(), active.end(), ev.idx);
      if (it == active.end() || state[ev.idx].token != ev.token) continue;
    }

    double timespan = ev.time - now;
    now = ev.time;
    if (timespan > 0.0) {
      for (int i : active) state[i].remaining -= state[i].b_tra * timespan;
      if (observer) {
        ElapseRecord rec;
        rec.now = now;
        rec.timespan = timespan;
        for (int i : active) rec.active_rates.emplace_back(i, state[i].b_tra);
        observer(rec);
      }
    }

    if (ev.kind == EventKind::start) {
      int c = static_cast<int>(active.size()) + 1;
      double b_bus = bandwidth_at_activation(ev.idx, c);
      if (b_bus <= 0.0)
        throw DomainError("run_exchange: non-positive bandwidth for transfer " +
                          std::to_string(ev.idx));
      state[ev.idx].remaining = transfers[ev.idx].effective_bytes;
      state[ev.idx].b_bus = b_bus;
      active.insert(std::upper_bound(active.begin(), active.end(), ev.idx),
                    ev.idx);
      // Zero-byte transfers complete instantly.
      if (state[ev.idx].remaining <= 0.0) {
        active.erase(std::find(active.begin(), active.end(), ev.idx));
        last_completion = std::max(last_completion, now);
      }
    } else {
      state[ev.idx].remaining = 0.0;
      active.erase(std::find(active.begin(), active.end(), ev.idx));
      last_completion = now;
    }
    reshare_and_requeue();
  }
  return last_completion;
}

}  // namespace vmplan::sim
