// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/jsonio.hpp"

#include <fstream>

#include "vmplan/errors.hpp"

namespace vmplan {

namespace {

const Json& require(const Json& j, const char* field, const char* context) {
  auto it = j.find(field);
  if (it == j.end()) {
    throw StructuralError(std::string(context) + ": missing field '" + field +
                          "'");
  }
  return *it;
}

std::string billing_str(Billing b) {
  return b == Billing::spot ? "spot" : "on_demand";
}

Billing billing_from(const std::string& s) {
  if (s == "spot") return Billing::spot;
  if (s == "on_demand") return Billing::on_demand;
  throw StructuralError("billing: expected 'on_demand' or 'spot', got '" + s +
                        "'");
}

std::string objective_str(Objective o) {
  return o == Objective::min_cost ? "min_cost" : "min_time";
}

Objective objective_from(const std::string& s) {
  if (s == "min_cost") return Objective::min_cost;
  if (s == "min_time") return Objective::min_time;
  throw StructuralError("objective: expected 'min_time' or 'min_cost', got '" +
                        s + "'");
}

}  // namespace

Json to_json(const PiecewiseLatencyModel& m) {
  Json segs = Json::array();
  for (const auto& s : m.segments) {
    segs.push_back({{"batch_lo", static_cast<double>(s.batch_lo)},
                    {"batch_hi", static_cast<double>(s.batch_hi)},
                    {"alpha", s.alpha},
                    {"beta", s.beta}});
  }
  return {{"segments", segs}, {"b_max", static_cast<double>(m.b_max)}};
}

PiecewiseLatencyModel latency_model_from_json(const Json& j) {
  PiecewiseLatencyModel m;
  m.b_max = static_cast<Samples>(
      require(j, "b_max", "latency_model").get<double>());
  for (const auto& s : require(j, "segments", "latency_model")) {
    LatencySegment seg;
    seg.batch_lo =
        static_cast<Samples>(require(s, "batch_lo", "segment").get<double>());
    seg.batch_hi =
        static_cast<Samples>(require(s, "batch_hi", "segment").get<double>());
    seg.alpha = require(s, "alpha", "segment").get<double>();
    seg.beta = require(s, "beta", "segment").get<double>();
    m.segments.push_back(seg);
  }
  return m;
}

Json to_json(const VmType& t) {
  return {{"id", t.id},
          {"device_kind", t.device_kind},
          {"price_per_hour", t.price_per_hour},
          {"bus_bandwidth_cap", t.bus_bandwidth_cap},
          {"memcap_batch", static_cast<double>(t.memcap_batch)},
          {"threshold_batch", static_cast<double>(t.threshold_batch)},
          {"quota", static_cast<double>(t.quota)},
          {"billing", billing_str(t.billing)},
          {"launch_overhead", t.launch_overhead},
          {"region", t.region},
          {"zone", t.zone},
          {"placement_group", t.placement_group},
          {"rated_network", t.rated_network}};
}

VmType vm_type_from_json(const Json& j) {
  VmType t;
  t.id = require(j, "id", "vm_type").get<std::string>();
  const char* ctx = "vm_type";
  t.device_kind = require(j, "device_kind", ctx).get<std::string>();
  t.price_per_hour = require(j, "price_per_hour", ctx).get<double>();
  t.bus_bandwidth_cap = require(j, "bus_bandwidth_cap", ctx).get<double>();
  t.memcap_batch =
      static_cast<Samples>(require(j, "memcap_batch", ctx).get<double>());
  t.threshold_batch =
      static_cast<Samples>(require(j, "threshold_batch", ctx).get<double>());
  t.quota = static_cast<Count>(require(j, "quota", ctx).get<double>());
  t.billing = billing_from(require(j, "billing", ctx).get<std::string>());
  t.launch_overhead = j.value("launch_overhead", 0.0);
  t.region = j.value("region", "");
  t.zone = j.value("zone", "");
  t.placement_group = j.value("placement_group", "");
  t.rated_network = j.value("rated_network", 0.0);
  if (t.price_per_hour <= 0.0 || t.bus_bandwidth_cap <= 0.0)
    throw StructuralError("vm_type '" + t.id +
                          "': price_per_hour and bus_bandwidth_cap must be > 0");
  if (t.threshold_batch < 1 || t.threshold_batch > t.memcap_batch)
    throw StructuralError("vm_type '" + t.id +
                          "': need 1 <= threshold_batch <= memcap_batch");
  if (t.quota < 0)
    throw StructuralError("vm_type '" + t.id + "': quota must be >= 0");
  return t;
}

Json to_json(const ModelProfile& p) {
  Json models = Json::object();
  for (const auto& [kind, pm] : p.latency_models) {
    models[kind] = {{"fw", to_json(pm.fw)}, {"bw", to_json(pm.bw)}};
  }
  return {{"model_id", p.model_id},
          {"layer_sizes", p.layer_sizes},
          {"exchange_fractions", p.exchange_fractions},
          {"latency_models", models},
          {"latency_stddev", p.latency_stddev}};
}

ModelProfile profile_from_json(const Json& j) {
  ModelProfile p;
  const char* ctx = "profile";
  p.model_id = require(j, "model_id", ctx).get<std::string>();
  p.layer_sizes = require(j, "layer_sizes", ctx).get<std::vector<double>>();
  p.exchange_fractions =
      require(j, "exchange_fractions", ctx).get<std::vector<double>>();
  if (p.layer_sizes.size() != p.exchange_fractions.size())
    throw StructuralError("profile '" + p.model_id +
                          "': layer_sizes and exchange_fractions lengths differ");
  for (double f : p.exchange_fractions)
    if (f < 0.0 || f > 1.0)
      throw StructuralError("profile '" + p.model_id +
                            "': exchange_fractions outside [0, 1]");
  for (double s : p.layer_sizes)
    if (s <= 0.0)
      throw StructuralError("profile '" + p.model_id +
                            "': layer_sizes must be > 0");
  for (const auto& [kind, pm] : require(j, "latency_models", ctx).items()) {
    PassModels models;
    models.fw = latency_model_from_json(require(pm, "fw", "latency_models"));
    models.bw = latency_model_from_json(require(pm, "bw", "latency_models"));
    p.latency_models[kind] = models;
  }
  p.latency_stddev = require(j, "latency_stddev", ctx)
                         .get<std::map<std::string, double>>();
  return p;
}

Json to_json(const Plan& p) {
  Json entries = Json::array();
  for (const auto& e : p.entries) {
    entries.push_back({{"vm_type_id", e.vm_type_id},
                       {"count", static_cast<double>(e.count)},
                       {"batch", static_cast<double>(e.batch)}});
  }
  return {{"entries", entries},
          {"predicted_t_iter", p.predicted_t_iter},
          {"predicted_time", p.predicted_time},
          {"predicted_cost", p.predicted_cost}};
}

Plan plan_from_json(const Json& j) {
  Plan p;
  for (const auto& e : require(j, "entries", "plan")) {
    PlanEntry pe;
    pe.vm_type_id = require(e, "vm_type_id", "plan entry").get<std::string>();
    pe.count = static_cast<Count>(require(e, "count", "plan entry").get<double>());
    pe.batch =
        static_cast<Samples>(require(e, "batch", "plan entry").get<double>());
    p.entries.push_back(pe);
  }
  p.predicted_t_iter = j.value("predicted_t_iter", 0.0);
  p.predicted_time = j.value("predicted_time", 0.0);
  p.predicted_cost = j.value("predicted_cost", 0.0);
  return p;
}

Json to_json(const TrainJob& j) {
  Json types = Json::array();
  for (const auto& t : j.candidate_types) types.push_back(t.id);
  Json out = {{"profile", j.profile},
              {"B_global", static_cast<double>(j.B_global)},
              {"N", static_cast<double>(j.N)},
              {"objective", objective_str(j.objective)},
              {"candidate_types", types}};
  out["T_lim"] = j.T_lim ? Json(*j.T_lim) : Json(nullptr);
  out["budget"] = j.budget ? Json(*j.budget) : Json(nullptr);
  return out;
}

TrainJob job_from_json(const Json& j, const Catalog& catalog) {
  TrainJob job;
  const char* ctx = "job";
  job.profile = require(j, "profile", ctx).get<std::string>();
  job.B_global = static_cast<Samples>(require(j, "B_global", ctx).get<double>());
  job.N = static_cast<std::int64_t>(require(j, "N", ctx).get<double>());
  if (j.contains("T_lim") && !j["T_lim"].is_null())
    job.T_lim = j["T_lim"].get<double>();
  if (j.contains("budget") && !j["budget"].is_null())
    job.budget = j["budget"].get<double>();
  job.objective =
      objective_from(require(j, "objective", ctx).get<std::string>());
  for (const auto& id : require(j, "candidate_types", ctx)) {
    const VmType* t = find_type(catalog.vm_types, id.get<std::string>());
    if (t == nullptr)
      throw StructuralError("job: candidate type '" + id.get<std::string>() +
                            "' not in catalog");
    job.candidate_types.push_back(*t);
  }
  if (job.B_global < 1 || job.N < 1 || job.candidate_types.empty())
    throw StructuralError(
        "job: need B_global >= 1, N >= 1 and at least one candidate type");
  return job;
}

Json to_json(const Catalog& c) {
  Json types = Json::array();
  for (const auto& t : c.vm_types) types.push_back(to_json(t));
  return {{"vm_types", types}, {"mtu", c.mtu}};
}

Catalog catalog_from_json(const Json& j) {
  Catalog c;
  for (const auto& t : require(j, "vm_types", "catalog"))
    c.vm_types.push_back(vm_type_from_json(t));
  c.mtu = j.value("mtu", 9000.0);
  return c;
}

Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace vmplan
