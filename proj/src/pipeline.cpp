// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/pipeline.hpp"

#include <algorithm>

#include "vmplan/errors.hpp"
#include "vmplan/profiler.hpp"
#include "vmplan/rng.hpp"

namespace vmplan::pipeline {

namespace {

// fw and bw are fitted over the same probe schedule, so their segments share
// knots and the iteration latency model is the segment-wise sum.
PiecewiseLatencyModel sum_models(const PiecewiseLatencyModel& a,
                                 const PiecewiseLatencyModel& b) {
  PiecewiseLatencyModel out = a;
  for (std::size_t i = 0; i < out.segments.size(); ++i) {
    out.segments[i].alpha += b.segments[i].alpha;
    out.segments[i].beta += b.segments[i].beta;
  }
  return out;
}

}  // namespace

ProbeGrid default_grid() {
  ProbeGrid g;
  for (double s = 4.0; s <= 512.0 * 1024 * 1024; s *= 16.0)
    g.buffer_sizes.push_back(s);  // 4B, 64B, 1K, 16K, 256K, 4M, 64M
  g.buffer_sizes.push_back(512.0 * 1024 * 1024);
  for (Count n = 2; n <= 64; n *= 2) g.world_sizes.push_back(n);
  return g;
}

std::vector<netmodel::ProbeRecord> grid_probe(const Catalog& catalog,
                                              const cloudsim::CloudSpec& spec,
                                              const ProbeGrid& grid,
                                              std::uint64_t seed) {
  std::vector<std::pair<netmodel::ProbeFeatures, double>> raw;
  Count max_world = 0;
  for (Count n : grid.world_sizes) max_world = std::max(max_world, n);

  for (const auto& vm : catalog.vm_types) {
    if (!spec.types.count(vm.id)) continue;
    for (int a = 0; a < grid.allocations; ++a) {
      auto alloc = cloudsim::allocate(
          spec, {{vm.id, max_world}},
          derive_seed(derive_seed(seed, vm.id), static_cast<std::uint64_t>(a)));
      for (Count n : grid.world_sizes) {
        for (double s : grid.buffer_sizes) {
          double t = alloc.probe_allreduce(s, n, grid.concurrent);
          raw.emplace_back(netmodel::features_for(vm, s, n, grid.concurrent), t);
        }
      }
    }
  }
  auto built = netmodel::build_dataset(raw);
  return built.records;
}

ProfileOutcome profile_on_cloud(const Catalog& catalog,
                                const cloudsim::CloudSpec& spec,
                                const ProfileOptions& options) {
  ProfileOutcome out;
  out.catalog = catalog;
  out.profile.model_id = spec.true_profile.model_id;
  out.profile.layer_sizes = spec.true_profile.layer_sizes;

  // Max batch per type first; each device kind is then profiled once, on the
  // type with the largest capacity, so the kind model covers every type.
  std::map<std::string, std::string> kind_rep;  // device_kind -> type id
  for (auto& vm : out.catalog.vm_types) {
    if (!spec.types.count(vm.id)) continue;
    auto alloc = cloudsim::allocate(spec, {{vm.id, 1}},
                                    derive_seed(options.seed, vm.id));
    vm.memcap_batch = profiler::find_max_batch(
        [&](Samples b) { return alloc.fits(vm.id, b); },
        options.max_batch_upper);
    auto it = kind_rep.find(vm.device_kind);
    if (it == kind_rep.end()) {
      kind_rep[vm.device_kind] = vm.id;
    } else {
      const VmType* cur = find_type(out.catalog.vm_types, it->second);
      if (vm.memcap_batch > cur->memcap_batch) it->second = vm.id;
    }
  }
  if (kind_rep.empty())
    throw StructuralError(
        "profile_on_cloud: no catalog type matches the cloud spec");

  bool fractions_done = false;
  for (const auto& [kind, type_id] : kind_rep) {
    const VmType* rep = find_type(out.catalog.vm_types, type_id);
    Samples b_max = rep->memcap_batch;
    auto alloc = cloudsim::allocate(
        spec, {{type_id, 1}}, derive_seed(options.seed, "fit-" + type_id));
    std::vector<profiler::LatencySample> samples;
    for (Samples b : profiler::probe_schedule(b_max, options.budgeted)) {
      for (int r = 0; r < options.replicates; ++r) {
        auto probe = alloc.probe_compute(type_id, b);
        samples.push_back({b, probe.fw_s, probe.bw_s, r});
      }
    }
    PassModels pm;
    pm.fw = profiler::fit_latency_model(samples, profiler::Pass::fw, b_max);
    pm.bw = profiler::fit_latency_model(samples, profiler::Pass::bw, b_max);
    out.profile.latency_models[kind] = pm;
    out.profile.latency_stddev[kind] =
        profiler::estimate_stddev(samples).rel_stddev;
    if (!fractions_done) {
      out.profile.exchange_fractions = profiler::extract_exchange_fractions(
          alloc.probe_backward_trace(type_id, b_max));
      fractions_done = true;
    }
  }

  for (auto& vm : out.catalog.vm_types) {
    if (!spec.types.count(vm.id)) continue;
    const PassModels& pm = out.profile.latency_models.at(vm.device_kind);
    Samples threshold = profiler::find_threshold_batch(
        sum_models(pm.fw, pm.bw), options.threshold_cutoff);
    vm.threshold_batch = std::clamp<Samples>(threshold, 1, vm.memcap_batch);
  }
  return out;
}

}  // namespace vmplan::pipeline
