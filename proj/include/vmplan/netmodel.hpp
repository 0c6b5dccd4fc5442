// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bus-bandwidth labeling of allreduce probes and the learned bandwidth
// model: one regressor for buffers at or below the MTU, one above it.
#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmplan/core.hpp"
#include "vmplan/gbt.hpp"

namespace vmplan::netmodel {

// b_bus = 2*s*(n-1) / (n*t): the equivalent per-interface bandwidth of an
// allreduce of s bytes across n ranks taking t seconds.
double bus_bandwidth(double s_bytes, Count n, double t_seconds);

// Inverse of bus_bandwidth: t = 2*s*(n-1) / (n*b_bus).
double allreduce_time(double s_bytes, Count n, double bus_bw);

struct ProbeFeatures {
  std::string region;
  std::string zone;
  std::string device_kind;
  std::string cpu_kind;
  double rated_network_bps = 0.0;
  double buffer_bytes = 0.0;
  Count world_size = 0;
  Count concurrent_transfers = 1;
  bool placement_group = false;
};

struct ProbeRecord {
  ProbeFeatures features;
  double measured_time_s = 0.0;
  double bus_bw = 0.0;  // bytes/second, derived label
};

struct BuildResult {
  std::vector<ProbeRecord> records;
  std::int64_t skipped = 0;
};

// Attaches the bus-bandwidth label to each raw probe. Repeated observations
// of identical features stay separate rows: the spread is the signal the
// learner sees. Invalid rows (world_size < 2, t <= 0, s <= 0) are skipped
// and counted.
BuildResult build_dataset(
    const std::vector<std::pair<ProbeFeatures, double>>& raw_probes);

// CSV persistence. Column header is exactly:
// region,zone,device_kind,cpu_kind,rated_network_bps,buffer_bytes,
// world_size,concurrent_transfers,placement_group,time_s
// preceded by one "# vmplan-probe-csv v1" version line.
void write_probe_csv(const std::filesystem::path& path,
                     std::span<const ProbeRecord> records);
std::vector<ProbeRecord> read_probe_csv(const std::filesystem::path& path);

struct TrainingConfig {
  double mtu = 9000.0;             // bytes; split point
  double bandwidth_floor = 1024.0;  // bytes/s; clamp for non-positive output
  double weight_decay = 1.0;  // per-row age decay; row i gets decay^(n-1-i)
  bool autotune = true;       // small grid search minimizing held-out MAPE
  gbt::Params params;         // used directly when autotune is off
  std::uint64_t seed = 0;
};

class BandwidthModel {
 public:
  struct Prediction {
    double bus_bw = 0.0;
    bool clamped = false;
  };

  // Routes to the small-buffer model iff buffer_bytes <= mtu. Unseen
  // categorical values fall into a reserved unknown bucket; predictions are
  // clamped to the floor rather than ever returning a non-positive value.
  Prediction predict_detailed(const ProbeFeatures& f) const;
  double predict(const ProbeFeatures& f) const;

  double mtu() const { return mtu_; }
  const nlohmann::json& metadata() const { return metadata_; }

  nlohmann::json to_json() const;
  static BandwidthModel from_json(const nlohmann::json& j);

  static BandwidthModel train(const std::vector<ProbeRecord>& dataset,
                              const TrainingConfig& config);

 private:
  // A side is either a boosted ensemble or, when its half of the split had
  // no data, a nearest-neighbour fallback over the other side's rows.
  struct Side {
    bool fallback = false;
    gbt::Model model;
    std::vector<std::array<double, 3>> nn_rows;  // (log buffer, world, label)
  };

  std::vector<double> encode(const ProbeFeatures& f) const;
  double eval_side(const Side& s, const ProbeFeatures& f) const;

  double mtu_ = 9000.0;
  double floor_ = 1024.0;
  std::vector<std::string> vocab_names_;  // categorical feature names
  std::vector<std::vector<std::string>> vocabs_;
  Side small_;
  Side large_;
  nlohmann::json metadata_;
};

// Percent: mean over rows of |pred - label| / label * 100.
double evaluate_mape(const BandwidthModel& model,
                     std::span<const ProbeRecord> testset);

// Features of `vm` at transfer size s, world size n, concurrency c.
ProbeFeatures features_for(const VmType& vm, double s_bytes, Count n, Count c);

// Slowest-instance principle: predicted bandwidth of a mixed selection is
// the min over the selected types' predictions at the same (s, n, c).
double predict_min_over_types(const BandwidthModel& model,
                              std::span<const VmType> types, double s_bytes,
                              Count n, Count c);

}  // namespace vmplan::netmodel
