// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON-lines event log shared by the closed-loop runner and cloudsim, used
// for replay-based tests and the report command. One object per line with at
// least {"t": seconds, "kind": string}.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace vmplan {

struct EventLog {
  std::vector<nlohmann::json> events;

  void append(double t, const std::string& kind, nlohmann::json payload = {});
  std::vector<nlohmann::json> of_kind(const std::string& kind) const;

  void save(const std::filesystem::path& path) const;
  static EventLog load(const std::filesystem::path& path);
};

// Human-readable timeline plus a summary table (iterations, elapsed, spent,
// replans, final status). Empty logs render an empty summary.
std::string render_report(const EventLog& log);

}  // namespace vmplan
