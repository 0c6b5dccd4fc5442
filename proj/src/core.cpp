// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/core.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "vmplan/errors.hpp"

namespace vmplan {

bool is_cpu_device(const std::string& device_kind) {
  std::string lower(device_kind.size(), '\0');
  std::transform(device_kind.begin(), device_kind.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return lower.find("cpu") != std::string::npos;
}

const VmType* find_type(const std::vector<VmType>& types, const std::string& id) {
  for (const auto& t : types) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

std::vector<Violation> validate_plan(const Plan& plan, const TrainJob& job) {
  std::vector<Violation> out;
  std::ostringstream msg;

  Samples batch_sum = 0;
  std::map<std::string, Count> counts_by_type;
  for (const auto& e : plan.entries) {
    const VmType* t = find_type(job.candidate_types, e.vm_type_id);
    if (t == nullptr) {
      throw StructuralError("plan references unknown vm_type_id '" +
                            e.vm_type_id + "'");
    }
    if (e.count < 1) {
      msg.str("");
      msg << e.vm_type_id << ": count " << e.count << " < 1";
      out.push_back({"count", msg.str()});
    }
    if (e.batch < t->threshold_batch || e.batch > t->memcap_batch) {
      msg.str("");
      msg << e.vm_type_id << ": batch " << e.batch << " outside ["
          << t->threshold_batch << ", " << t->memcap_batch << "]";
      out.push_back({"batch-bounds", msg.str()});
    }
    counts_by_type[e.vm_type_id] += e.count;
    batch_sum += e.count * e.batch;
  }

  for (const auto& [id, n] : counts_by_type) {
    const VmType* t = find_type(job.candidate_types, id);
    if (n > t->quota) {
      msg.str("");
      msg << id << ": count " << n << " > quota " << t->quota;
      out.push_back({"quota", msg.str()});
    }
  }

  if (batch_sum != job.B_global) {
    msg.str("");
    msg << "sum(count*batch) " << batch_sum << " != B_global " << job.B_global;
    out.push_back({"batch-sum", msg.str()});
  }

  // Predictions of 0 mean "not yet simulated"; only a populated plan is held
  // against the job limits.
  if (job.T_lim && plan.predicted_time > 0.0 &&
      plan.predicted_time > *job.T_lim) {
    msg.str("");
    msg << "predicted_time " << plan.predicted_time << " > T_lim "
        << *job.T_lim;
    out.push_back({"time-limit", msg.str()});
  }
  if (job.budget && plan.predicted_cost > 0.0 &&
      plan.predicted_cost > *job.budget) {
    msg.str("");
    msg << "predicted_cost " << plan.predicted_cost << " > budget "
        << *job.budget;
    out.push_back({"budget", msg.str()});
  }
  return out;
}

}  // namespace vmplan
