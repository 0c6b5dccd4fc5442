// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vmplan/errors.hpp"
#include "vmplan/profiler.hpp"
#include "vmplan/rng.hpp"

namespace vmplan::sim {

namespace {

struct VmDraw {
  double fw_mean = 0.0;
  double bw_mean = 0.0;
  double rel_dev = 0.0;
};

std::vector<VmDraw> per_vm_params(const Selection& selection,
                                  const ModelProfile& profile) {
  std::vector<VmDraw> vms;
  for (const auto& e : selection.entries) {
    auto it = profile.latency_models.find(e.vm_type.device_kind);
    if (it == profile.latency_models.end())
      throw StructuralError("profile '" + profile.model_id +
                            "' has no latency model for device kind '" +
                            e.vm_type.device_kind + "'");
    VmDraw d;
    d.fw_mean = profiler::predict_latency(it->second.fw, e.batch);
    d.bw_mean = profiler::predict_latency(it->second.bw, e.batch);
    auto sd = profile.latency_stddev.find(e.vm_type.device_kind);
    d.rel_dev = sd == profile.latency_stddev.end() ? 0.0 : sd->second;
    for (Count k = 0; k < e.count; ++k) vms.push_back(d);
  }
  return vms;
}

double truncated_normal(Rng& rng, double mean, double rel_dev) {
  if (rel_dev <= 0.0) return mean;
  double v = rng.normal(mean, rel_dev * mean);
  return std::max(v, 0.1 * mean);
}

}  // namespace

ComputeSample sample_compute(const Selection& selection,
                             const ModelProfile& profile, std::int64_t iters,
                             std::uint64_t seed) {
  if (iters < 1) throw DomainError("sample_compute: iters < 1");
  if (selection.entries.empty())
    throw DomainError("sample_compute: empty selection");

  auto vms = per_vm_params(selection, profile);
  Rng rng(derive_seed(seed, "sample_compute"));

  ComputeSample out;
  out.fw.reserve(iters);
  out.bw.reserve(iters);
  for (std::int64_t i = 0; i < iters; ++i) {
    double fw = 0.0, bw = 0.0;
    for (const auto& vm : vms) {
      fw = std::max(fw, truncated_normal(rng, vm.fw_mean, vm.rel_dev));
      bw = std::max(bw, truncated_normal(rng, vm.bw_mean, vm.rel_dev));
    }
    out.fw.push_back(fw);
    out.bw.push_back(bw);
    out.t_fw_mean += fw;
    out.t_bw_mean += bw;
  }
  out.t_fw_mean /= static_cast<double>(iters);
  out.t_bw_mean /= static_cast<double>(iters);
  return out;
}

double simulate_parameter_exchange(const ModelProfile& profile,
                                   const Selection& selection,
                                   const netmodel::BandwidthModel& bw_model,
                                   double t_bw,
                                   const ExchangeObserver& observer) {
  Count n = selection.world_size();
  if (n < 2) return 0.0;
  if (profile.layer_sizes.size() != profile.exchange_fractions.size())
    throw StructuralError("profile '" + profile.model_id +
                          "': layer/fraction length mismatch");
  if (profile.layer_sizes.empty()) return 0.0;

  double b_cap = std::numeric_limits<double>::infinity();
  std::vector<VmType> types;
  for (const auto& e : selection.entries) {
    b_cap = std::min(b_cap, e.vm_type.bus_bandwidth_cap);
    types.push_back(e.vm_type);
  }

  double nd = static_cast<double>(n);
  std::vector<Transfer> transfers;
  transfers.reserve(profile.layer_sizes.size());
  for (std::size_t i = 0; i < profile.layer_sizes.size(); ++i) {
    Transfer t;
    t.start_time = profile.exchange_fractions[i] * t_bw;
    t.effective_bytes = 2.0 * profile.layer_sizes[i] * (nd - 1.0) / nd;
    transfers.push_back(t);
  }

  auto bandwidth = [&](int idx, int concurrency) {
    try {
      return netmodel::predict_min_over_types(
          bw_model, types, profile.layer_sizes[static_cast<std::size_t>(idx)],
          n, concurrency);
    } catch (const Error& e) {
      throw StructuralError("bandwidth prediction failed for layer " +
                            std::to_string(idx) + ": " + e.what());
    }
  };
  return run_exchange(transfers, bandwidth, b_cap, observer);
}

SimResult simulate_iteration(const ModelProfile& profile,
                             const Selection& selection,
                             const netmodel::BandwidthModel& bw_model,
                             std::int64_t iters, std::uint64_t seed) {
  ComputeSample compute = sample_compute(selection, profile, iters, seed);
  double t_pe =
      simulate_parameter_exchange(profile, selection, bw_model, compute.t_bw_mean);

  SimResult r;
  r.t_fw_mean = compute.t_fw_mean;
  r.t_bw_mean = compute.t_bw_mean;
  r.t_pe = t_pe;
  r.per_iteration_latencies.reserve(compute.fw.size());
  for (std::size_t i = 0; i < compute.fw.size(); ++i) {
    double t_iter = compute.fw[i] + std::max(compute.bw[i], t_pe);
    r.per_iteration_latencies.push_back(t_iter);
    r.t_iter_mean += t_iter;
  }
  r.t_iter_mean /= static_cast<double>(r.per_iteration_latencies.size());
  return r;
}

}  // namespace vmplan::sim
