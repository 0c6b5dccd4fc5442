// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/cloudsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vmplan/errors.hpp"
#include "vmplan/exchange.hpp"
#include "vmplan/profiler.hpp"
#include "vmplan/rng.hpp"

namespace vmplan::cloudsim {

Json to_json(const CloudSpec& s) {
  Json types = Json::object();
  for (const auto& [id, t] : s.types) {
    types[id] = {{"device_kind", t.device_kind},
                 {"base_bus_bandwidth", t.base_bus_bandwidth},
                 {"bus_bandwidth_cap", t.bus_bandwidth_cap},
                 {"allocation_factor_range",
                  {t.allocation_factor_range[0], t.allocation_factor_range[1]}},
                 {"temporal_bandwidth_stddev", t.temporal_bandwidth_stddev},
                 {"compute_bias_stddev", t.compute_bias_stddev},
                 {"compute_bias_range",
                  {t.compute_bias_range[0], t.compute_bias_range[1]}},
                 {"size_efficiency_half", t.size_efficiency_half},
                 {"true_memcap", static_cast<double>(t.true_memcap)}};
  }
  Json script = Json::array();
  for (const auto& e : s.preemption_script)
    script.push_back({{"time", e.time},
                      {"type_id", e.type_id},
                      {"count", static_cast<double>(e.count)}});
  return {{"seed", s.seed},
          {"types", types},
          {"true_profile", vmplan::to_json(s.true_profile)},
          {"preemption_script", script}};
}

CloudSpec cloudspec_from_json(const Json& j) {
  CloudSpec s;
  s.seed = j.value("seed", 0ULL);
  for (const auto& [id, tj] : j.at("types").items()) {
    TypeTruth t;
    t.device_kind = tj.at("device_kind").get<std::string>();
    t.base_bus_bandwidth = tj.at("base_bus_bandwidth").get<double>();
    t.bus_bandwidth_cap = tj.at("bus_bandwidth_cap").get<double>();
    if (tj.contains("allocation_factor_range")) {
      t.allocation_factor_range[0] = tj["allocation_factor_range"][0];
      t.allocation_factor_range[1] = tj["allocation_factor_range"][1];
    }
    t.temporal_bandwidth_stddev = tj.value("temporal_bandwidth_stddev", 0.0);
    t.compute_bias_stddev = tj.value("compute_bias_stddev", 0.0);
    if (tj.contains("compute_bias_range")) {
      t.compute_bias_range[0] = tj["compute_bias_range"][0];
      t.compute_bias_range[1] = tj["compute_bias_range"][1];
    }
    t.size_efficiency_half = tj.value("size_efficiency_half", 4.0 * 1024 * 1024);
    t.true_memcap =
        static_cast<Samples>(tj.value("true_memcap", 0.0));
    if (t.allocation_factor_range[0] <= 0.0 ||
        t.allocation_factor_range[1] > 1.0 ||
        t.allocation_factor_range[0] > t.allocation_factor_range[1])
      throw StructuralError("cloudspec type '" + id +
                            "': allocation_factor_range must be within (0, 1]");
    s.types[id] = t;
  }
  s.true_profile = profile_from_json(j.at("true_profile"));
  if (j.contains("preemption_script")) {
    for (const auto& ej : j["preemption_script"]) {
      PreemptionEvent e;
      e.time = ej.at("time").get<double>();
      e.type_id = ej.at("type_id").get<std::string>();
      e.count = static_cast<Count>(ej.value("count", 1.0));
      s.preemption_script.push_back(e);
    }
    std::stable_sort(s.preemption_script.begin(), s.preemption_script.end(),
                     [](const auto& a, const auto& b) { return a.time < b.time; });
  }
  return s;
}

namespace {

double clamp_factor(double v, double lo, double hi) {
  return std::min(hi, std::max(lo, v));
}

double noise_factor(Rng& rng, double stddev) {
  // Temporal multiplicative noise, kept away from zero.
  return std::max(0.1, rng.normal(1.0, stddev));
}

}  // namespace

Allocation::Allocation(const CloudSpec& spec,
                       const std::map<std::string, Count>& request,
                       std::uint64_t seed)
    : spec_(spec), seed_(seed) {
  add_instances(request);
}

void Allocation::add_instances(const std::map<std::string, Count>& request) {
  Rng rng(derive_seed(derive_seed(seed_, "cohort"), cohort_counter_++));
  double u = rng.uniform();  // one allocation-level draw for this cohort
  for (const auto& [type_id, count] : request) {
    auto it = spec_.types.find(type_id);
    if (it == spec_.types.end())
      throw StructuralError("cloudsim: unknown type '" + type_id + "'");
    const TypeTruth& t = it->second;
    double factor = t.allocation_factor_range[0] +
                    u * (t.allocation_factor_range[1] -
                         t.allocation_factor_range[0]);
    for (Count k = 0; k < count; ++k) {
      Instance inst;
      inst.type_id = type_id;
      inst.bandwidth_factor = factor;
      inst.compute_bias =
          clamp_factor(rng.normal(1.0, t.compute_bias_stddev),
                       t.compute_bias_range[0], t.compute_bias_range[1]);
      instances_.push_back(inst);
    }
  }
}

Count Allocation::remove_instances(const std::string& type_id, Count count) {
  Count removed = 0;
  // Kill from the back: the most recently launched go first.
  for (auto it = instances_.rbegin(); it != instances_.rend() && removed < count;
       ++it) {
    if (it->alive && it->type_id == type_id) {
      it->alive = false;
      ++removed;
    }
  }
  return removed;
}

Count Allocation::alive_count(const std::string& type_id) const {
  Count n = 0;
  for (const auto& i : instances_)
    if (i.alive && i.type_id == type_id) ++n;
  return n;
}

bool Allocation::fits(const std::string& type_id, Samples batch) const {
  auto it = spec_.types.find(type_id);
  if (it == spec_.types.end())
    throw StructuralError("cloudsim: unknown type '" + type_id + "'");
  return batch <= it->second.true_memcap;
}

namespace {

const Instance* first_alive_of(const std::vector<Instance>& instances,
                               const std::string& type_id) {
  for (const auto& i : instances)
    if (i.alive && i.type_id == type_id) return &i;
  return nullptr;
}

}  // namespace

Allocation::ComputeProbe Allocation::probe_compute(const std::string& type_id,
                                                   Samples batch) {
  const Instance* inst = first_alive_of(instances_, type_id);
  if (inst == nullptr)
    throw DomainError("probe_compute: no alive instance of '" + type_id + "'");
  const TypeTruth& t = spec_.types.at(type_id);
  if (batch > t.true_memcap)
    throw DomainError("probe_compute: batch does not fit on '" + type_id + "'");
  auto lm = spec_.true_profile.latency_models.find(t.device_kind);
  if (lm == spec_.true_profile.latency_models.end())
    throw StructuralError("cloud spec lacks device kind '" + t.device_kind + "'");
  auto sd_it = spec_.true_profile.latency_stddev.find(t.device_kind);
  double sd = sd_it == spec_.true_profile.latency_stddev.end() ? 0.0
                                                               : sd_it->second;
  Rng rng(derive_seed(derive_seed(seed_, "probe"), probe_counter_++));
  ComputeProbe p;
  p.fw_s = profiler::predict_latency(lm->second.fw, batch) * inst->compute_bias *
           noise_factor(rng, sd);
  p.bw_s = profiler::predict_latency(lm->second.bw, batch) * inst->compute_bias *
           noise_factor(rng, sd);
  return p;
}

profiler::BackwardTrace Allocation::probe_backward_trace(
    const std::string& type_id, Samples batch) {
  ComputeProbe p = probe_compute(type_id, batch);
  profiler::BackwardTrace trace;
  trace.total_bw_time = p.bw_s;
  for (double f : spec_.true_profile.exchange_fractions)
    trace.layer_completion_times.push_back(f * p.bw_s);
  return trace;
}

double Allocation::true_bandwidth(double s_bytes,
                                  const std::vector<std::size_t>& participants,
                                  double noise) const {
  double b = std::numeric_limits<double>::infinity();
  for (std::size_t i : participants) {
    const TypeTruth& t = spec_.types.at(instances_[i].type_id);
    double eff = s_bytes / (s_bytes + t.size_efficiency_half);
    b = std::min(b, t.base_bus_bandwidth * instances_[i].bandwidth_factor * eff);
  }
  return b * noise;
}

double Allocation::probe_allreduce(double s_bytes, Count participants,
                                   Count /*concurrent*/) {
  if (participants < 2)
    throw DomainError("probe_allreduce: need at least 2 participants");
  if (s_bytes <= 0.0) throw DomainError("probe_allreduce: buffer must be > 0");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < instances_.size() && static_cast<Count>(idx.size()) < participants; ++i)
    if (instances_[i].alive) idx.push_back(i);
  if (static_cast<Count>(idx.size()) < participants)
    throw DomainError("probe_allreduce: allocation has only " +
                      std::to_string(idx.size()) + " alive instances");

  Rng rng(derive_seed(derive_seed(seed_, "probe"), probe_counter_++));
  double sd = 0.0;
  for (std::size_t i : idx)
    sd = std::max(sd, spec_.types.at(instances_[i].type_id)
                          .temporal_bandwidth_stddev);
  double b_true = true_bandwidth(s_bytes, idx, noise_factor(rng, sd));
  double nd = static_cast<double>(participants);
  return 2.0 * s_bytes * (nd - 1.0) / (nd * b_true);
}

RunOutcome Allocation::run_iterations(const ModelProfile& true_profile,
                                      const std::vector<Samples>& batch_per_instance,
                                      std::int64_t iters, std::uint64_t seed,
                                      double start_time) {
  if (batch_per_instance.size() != instances_.size())
    throw DomainError("run_iterations: batch list must align with instances");

  std::vector<std::size_t> part;
  for (std::size_t i = 0; i < instances_.size(); ++i)
    if (instances_[i].alive && batch_per_instance[i] > 0) part.push_back(i);
  if (part.empty()) throw DomainError("run_iterations: no participating instances");

  struct PartParams {
    double fw_mean, bw_mean, rel_dev, bias;
  };
  std::vector<PartParams> params;
  double b_cap = std::numeric_limits<double>::infinity();
  for (std::size_t i : part) {
    const TypeTruth& t = spec_.types.at(instances_[i].type_id);
    auto lm = true_profile.latency_models.find(t.device_kind);
    if (lm == true_profile.latency_models.end())
      throw StructuralError("true profile lacks device kind '" + t.device_kind +
                            "'");
    PartParams p;
    p.fw_mean = profiler::predict_latency(lm->second.fw, batch_per_instance[i]);
    p.bw_mean = profiler::predict_latency(lm->second.bw, batch_per_instance[i]);
    auto sd = true_profile.latency_stddev.find(t.device_kind);
    p.rel_dev = sd == true_profile.latency_stddev.end() ? 0.0 : sd->second;
    p.bias = instances_[i].compute_bias;
    params.push_back(p);
    b_cap = std::min(b_cap, t.bus_bandwidth_cap);
  }

  Count n = static_cast<Count>(part.size());
  double nd = static_cast<double>(n);
  Rng rng(derive_seed(seed, "cloudsim_run"));

  RunOutcome out;
  double wall = start_time;
  for (std::int64_t it = 0; it < iters; ++it) {
    // Fire any scripted preemption that is already due.
    while (script_cursor_ < spec_.preemption_script.size() &&
           spec_.preemption_script[script_cursor_].time <= wall) {
      const auto& ev = spec_.preemption_script[script_cursor_];
      ++script_cursor_;
      if (remove_instances(ev.type_id, ev.count) > 0) {
        out.preemption = ev;
        out.end_time = wall;
        return out;
      }
    }

    double t_fw = 0.0, t_bw = 0.0;
    for (const auto& p : params) {
      double fw = p.fw_mean * p.bias * noise_factor(rng, p.rel_dev);
      double bw = p.bw_mean * p.bias * noise_factor(rng, p.rel_dev);
      t_fw = std::max(t_fw, fw);
      t_bw = std::max(t_bw, bw);
    }

    double t_pe = 0.0;
    if (n >= 2 && !true_profile.layer_sizes.empty()) {
      std::size_t layers = true_profile.layer_sizes.size();
      std::vector<sim::Transfer> transfers(layers);
      std::vector<double> bw_true(layers);
      for (std::size_t l = 0; l < layers; ++l) {
        transfers[l].start_time = true_profile.exchange_fractions[l] * t_bw;
        transfers[l].effective_bytes =
            2.0 * true_profile.layer_sizes[l] * (nd - 1.0) / nd;
        double sd = 0.0;
        for (std::size_t i : part)
          sd = std::max(sd, spec_.types.at(instances_[i].type_id)
                                .temporal_bandwidth_stddev);
        bw_true[l] = true_bandwidth(true_profile.layer_sizes[l], part,
                                    noise_factor(rng, sd));
      }
      t_pe = sim::run_exchange(
          transfers, [&](int idx, int) { return bw_true[static_cast<std::size_t>(idx)]; },
          b_cap);
    }

    double t_iter = t_fw + std::max(t_bw, t_pe);

    // A preemption landing inside this iteration voids it.
    if (script_cursor_ < spec_.preemption_script.size()) {
      const auto& ev = spec_.preemption_script[script_cursor_];
      if (ev.time < wall + t_iter && alive_count(ev.type_id) > 0) {
        ++script_cursor_;
        remove_instances(ev.type_id, ev.count);
        out.preemption = ev;
        out.end_time = ev.time;
        return out;
      }
    }

    wall += t_iter;
    out.iteration_latencies.push_back(t_iter);
  }
  out.end_time = wall;
  return out;
}

Allocation allocate(const CloudSpec& spec,
                    const std::map<std::string, Count>& request,
                    std::uint64_t seed) {
  return Allocation(spec, request, seed);
}

CloudSpec without_variance(CloudSpec spec) {
  for (auto& [id, t] : spec.types) {
    t.allocation_factor_range = {1.0, 1.0};
    t.temporal_bandwidth_stddev = 0.0;
    t.compute_bias_stddev = 0.0;
    t.compute_bias_range = {1.0, 1.0};
  }
  for (auto& [kind, sd] : spec.true_profile.latency_stddev) sd = 0.0;
  return spec;
}

}  // namespace vmplan::cloudsim
