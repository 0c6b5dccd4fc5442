// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/eventlog.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "vmplan/errors.hpp"

namespace vmplan {

void EventLog::append(double t, const std::string& kind,
                      nlohmann::json payload) {
  payload["t"] = t;
  payload["kind"] = kind;
  events.push_back(std::move(payload));
}

std::vector<nlohmann::json> EventLog::of_kind(const std::string& kind) const {
  std::vector<nlohmann::json> out;
  for (const auto& e : events)
    if (e.value("kind", "") == kind) out.push_back(e);
  return out;
}

void EventLog::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& e : events) out << e.dump() << "\n";
}

EventLog EventLog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  EventLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    log.events.push_back(nlohmann::json::parse(line));
  }
  return log;
}

std::string render_report(const EventLog& log) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);

  std::int64_t iterations = 0;
  int replans = 0;
  double elapsed = 0.0, spent = 0.0;
  std::string status = "(log has no run_end event)";

  out << "timeline:\n";
  for (const auto& e : log.events) {
    std::string kind = e.value("kind", "");
    double t = e.value("t", 0.0);
    if (kind == "iteration") {
      iterations = e.value("i", 0) + 1;
      continue;  // too chatty for the timeline; counted in the summary
    }
    out << "  [" << std::setw(8) << t << "s] " << kind;
    if (kind == "plan_adopted") {
      out << ":";
      for (const auto& entry : e["plan"]["entries"])
        out << " " << entry["count"].get<double>() << "x"
            << entry["vm_type_id"].get<std::string>() << "@"
            << entry["batch"].get<double>();
      if (e.contains("reason")) out << " (" << e["reason"].get<std::string>() << ")";
      if (e.value("reason", "") != "initial") ++replans;
    } else if (kind == "preemption") {
      out << ": " << e.value("count", 0.0) << "x"
          << e.value("type_id", std::string());
    } else if (kind == "decision") {
      out << ": " << e.value("action", std::string()) << " ("
          << e.value("reason", std::string()) << ")";
    } else if (kind == "run_end") {
      status = e.value("status", "");
      elapsed = t;
      spent = e.value("spent", 0.0);
      iterations = e.value("iterations", iterations);
      out << ": " << status;
    }
    out << "\n";
  }

  out << "summary:\n"
      << "  status      " << status << "\n"
      << "  iterations  " << iterations << "\n"
      << "  elapsed_s   " << elapsed << "\n"
      << "  spent       " << std::setprecision(4) << spent << "\n"
      << "  replans     " << replans << "\n";
  return out.str();
}

}  // namespace vmplan
