// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Canonical JSON schemas for the interchange files (catalog, profile, job,
// plan). Field names match the domain types exactly; numbers are IEEE-754
// doubles; lists are in back-prop order.
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "vmplan/core.hpp"

namespace vmplan {

using Json = nlohmann::json;

struct Catalog {
  std::vector<VmType> vm_types;
  double mtu = 9000.0;  // bytes; split point of the bandwidth model
};

Json to_json(const PiecewiseLatencyModel& m);
Json to_json(const VmType& t);
Json to_json(const ModelProfile& p);
Json to_json(const Plan& p);
Json to_json(const TrainJob& j);
Json to_json(const Catalog& c);

PiecewiseLatencyModel latency_model_from_json(const Json& j);
VmType vm_type_from_json(const Json& j);
ModelProfile profile_from_json(const Json& j);
Plan plan_from_json(const Json& j);
// candidate_types in the job file are catalog ids; they are resolved here.
TrainJob job_from_json(const Json& j, const Catalog& catalog);
Catalog catalog_from_json(const Json& j);

// Throws IoError naming the path on parse failure; StructuralError messages
// from the *_from_json functions name the offending field.
Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

}  // namespace vmplan
