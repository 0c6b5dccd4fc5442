// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Glue between cloudsim and the modeling stages: the grid probe that feeds
// the bandwidth model and the profiling pass that fills a ModelProfile plus
// the catalog's memcap/threshold fields. Shared by the CLI and tests.
#pragma once

#include <cstdint>
#include <vector>

#include "vmplan/cloudsim.hpp"
#include "vmplan/jsonio.hpp"
#include "vmplan/netmodel.hpp"

namespace vmplan::pipeline {

struct ProbeGrid {
  std::vector<double> buffer_sizes;  // bytes
  std::vector<Count> world_sizes;
  int allocations = 3;
  Count concurrent = 1;
};

// 4B..512MB and 2..64 sweeps, 8 x 6 points.
ProbeGrid default_grid();

// For every catalog type present in the cloud spec: `allocations` fresh
// allocations, each probed over the full grid. Row order (type, allocation,
// world, size) is deterministic given the seed.
std::vector<netmodel::ProbeRecord> grid_probe(const Catalog& catalog,
                                              const cloudsim::CloudSpec& spec,
                                              const ProbeGrid& grid,
                                              std::uint64_t seed);

struct ProfileOptions {
  bool budgeted = true;  // 4-value probe schedule
  int replicates = 5;
  Samples max_batch_upper = 65536;  // upper bound for the b_max search
  double threshold_cutoff = 0.9;
  std::uint64_t seed = 0;
};

struct ProfileOutcome {
  ModelProfile profile;
  Catalog catalog;  // memcap_batch/threshold_batch filled from probes
};

// Profiles one device kind per catalog type on single-instance allocations:
// b_max by binary search, fw/bw piecewise fits over the probe schedule,
// pooled deviation, and exchange fractions from a backward trace.
ProfileOutcome profile_on_cloud(const Catalog& catalog,
                                const cloudsim::CloudSpec& spec,
                                const ProfileOptions& options);

}  // namespace vmplan::pipeline
