// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// vmplan: plan, predict, and supervise data-parallel training on rented VMs.
// Exit codes: 0 success/feasible, 2 UNSAT (a legitimate answer), 1 error.
#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vmplan/cloudsim.hpp"
#include "vmplan/errors.hpp"
#include "vmplan/eventlog.hpp"
#include "vmplan/jsonio.hpp"
#include "vmplan/netmodel.hpp"
#include "vmplan/optimizer.hpp"
#include "vmplan/pipeline.hpp"
#include "vmplan/rng.hpp"
#include "vmplan/runtime.hpp"
#include "vmplan/simulator.hpp"

namespace {

using namespace vmplan;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUnsat = 2;

struct CommonArgs {
  std::string catalog_path;
  std::string profile_path;
  std::string net_model_path;
  std::string cloudspec_path;
  std::string job_path;
  std::string out_path;
  std::uint64_t seed = 0;
  std::int64_t exhaustive_gate = 10000;
  double window_minutes = 5.0;
  double launch_overhead_s = 150.0;
  double detach_overhead_s = 5.0;
};

Catalog load_catalog(const std::string& path) {
  try {
    return catalog_from_json(load_json(path));
  } catch (const StructuralError& e) {
    throw StructuralError(path + ": " + e.what());
  }
}

ModelProfile load_profile(const std::string& path) {
  try {
    return profile_from_json(load_json(path));
  } catch (const StructuralError& e) {
    throw StructuralError(path + ": " + e.what());
  }
}

TrainJob load_job(const std::string& path, const Catalog& catalog) {
  try {
    return job_from_json(load_json(path), catalog);
  } catch (const StructuralError& e) {
    throw StructuralError(path + ": " + e.what());
  }
}

cloudsim::CloudSpec load_cloudspec(const std::string& path) {
  try {
    return cloudsim::cloudspec_from_json(load_json(path));
  } catch (const StructuralError& e) {
    throw StructuralError(path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(path + ": " + e.what());
  }
}

netmodel::BandwidthModel load_net_model(const std::string& path) {
  try {
    return netmodel::BandwidthModel::from_json(load_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(path + ": " + e.what());
  }
}

sim::Selection selection_from_plan(const Plan& plan, const Catalog& catalog) {
  sim::Selection sel;
  for (const auto& e : plan.entries) {
    const VmType* t = find_type(catalog.vm_types, e.vm_type_id);
    if (t == nullptr)
      throw StructuralError("plan references unknown vm_type_id '" +
                            e.vm_type_id + "'");
    sel.entries.push_back({*t, e.count, e.batch});
  }
  return sel;
}

int cmd_probe(const CommonArgs& args, const pipeline::ProbeGrid& grid) {
  Catalog catalog = load_catalog(args.catalog_path);
  auto spec = load_cloudspec(args.cloudspec_path);
  if (grid.buffer_sizes.empty() || grid.world_sizes.empty() ||
      grid.allocations <= 0) {
    std::cerr << "warning: empty probe grid, writing header-only CSV\n";
    netmodel::write_probe_csv(args.out_path, {});
    std::cout << "0 probe rows -> " << args.out_path << "\n";
    return kExitOk;
  }
  auto records =
      pipeline::grid_probe(catalog, spec, grid, derive_seed(args.seed, "probe"));
  netmodel::write_probe_csv(args.out_path, records);
  std::cout << records.size() << " probe rows -> " << args.out_path << "\n";
  return kExitOk;
}

int cmd_fit_net(const CommonArgs& args, const std::string& probes_path,
                netmodel::TrainingConfig config) {
  auto records = netmodel::read_probe_csv(probes_path);
  config.seed = derive_seed(args.seed, "fit_net");
  auto model = netmodel::BandwidthModel::train(records, config);
  save_json(args.out_path, model.to_json());
  std::cout << "bandwidth model trained on " << records.size() << " rows (mtu "
            << config.mtu << ") -> " << args.out_path << "\n"
            << "  train MAPE " << netmodel::evaluate_mape(model, records)
            << "%\n";
  return kExitOk;
}

int cmd_profile(const CommonArgs& args, pipeline::ProfileOptions options,
                const std::string& out_catalog_path) {
  Catalog catalog = load_catalog(args.catalog_path);
  auto spec = load_cloudspec(args.cloudspec_path);
  options.seed = derive_seed(args.seed, "profile");
  auto outcome = pipeline::profile_on_cloud(catalog, spec, options);
  save_json(args.out_path, to_json(outcome.profile));
  std::cout << "profile '" << outcome.profile.model_id << "' ("
            << outcome.profile.layer_sizes.size() << " layers, "
            << outcome.profile.latency_models.size() << " device kinds) -> "
            << args.out_path << "\n";
  if (!out_catalog_path.empty()) {
    save_json(out_catalog_path, to_json(outcome.catalog));
    std::cout << "updated catalog -> " << out_catalog_path << "\n";
  }
  return kExitOk;
}

int cmd_plan(const CommonArgs& args, const std::string& stats_path,
             std::int64_t sim_iters) {
  Catalog catalog = load_catalog(args.catalog_path);
  ModelProfile profile = load_profile(args.profile_path);
  auto bw_model = load_net_model(args.net_model_path);
  TrainJob job = load_job(args.job_path, catalog);

  std::uint64_t sim_seed = derive_seed(args.seed, "plan_sim");
  opt::SimFn sim_fn = [&](const sim::Selection& sel) {
    return sim::simulate_iteration(profile, sel, bw_model, sim_iters, sim_seed);
  };
  opt::Options options;
  options.exhaustive_gate = args.exhaustive_gate;

  auto start = std::chrono::steady_clock::now();
  opt::SolveResult result = opt::solve(job, profile, sim_fn, options);
  double wall_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();

  Json stats = {
      {"mode", result.stats.mode_used == opt::SearchSpaceStats::Mode::exhaustive
                   ? "exhaustive"
                   : "anchor_approx"},
      {"estimated_sim_invocations", result.stats.estimated_sim_invocations},
      {"sims_executed", result.stats.sims_executed},
      {"wall_s", wall_s}};
  Json batch_sets = Json::object();
  for (const auto& [id, batches] : result.stats.candidate_batch_sets)
    batch_sets[id] = batches;
  stats["candidate_batch_sets"] = batch_sets;

  if (!result.feasible()) {
    stats["unsat_reason"] = result.unsat_reason;
    if (result.best_infeasible)
      stats["best_infeasible"] = to_json(*result.best_infeasible);
    if (!stats_path.empty()) save_json(stats_path, stats);
    std::cout << "UNSAT: " << result.unsat_reason << " (" << wall_s << "s, "
              << result.stats.sims_executed << " sims)\n";
    return kExitUnsat;
  }

  save_json(args.out_path, to_json(*result.plan));
  if (!stats_path.empty()) save_json(stats_path, stats);
  std::cout << "plan -> " << args.out_path << "\n";
  for (const auto& e : result.plan->entries)
    std::cout << "  " << e.count << "x " << e.vm_type_id << " @ batch "
              << e.batch << "\n";
  std::cout << "  t_iter " << result.plan->predicted_t_iter << "s, time "
            << result.plan->predicted_time << "s, cost "
            << result.plan->predicted_cost << " (" << stats["mode"] << ", "
            << result.stats.sims_executed << " sims, " << wall_s << "s)\n";
  return kExitOk;
}

int cmd_simulate(const CommonArgs& args, const std::string& plan_path,
                 std::int64_t sim_iters) {
  Catalog catalog = load_catalog(args.catalog_path);
  ModelProfile profile = load_profile(args.profile_path);
  auto bw_model = load_net_model(args.net_model_path);
  Plan plan = plan_from_json(load_json(plan_path));
  sim::Selection sel = selection_from_plan(plan, catalog);

  sim::SimResult r = sim::simulate_iteration(
      profile, sel, bw_model, sim_iters, derive_seed(args.seed, "simulate"));
  Json out = {{"t_iter_mean", r.t_iter_mean},
              {"t_fw_mean", r.t_fw_mean},
              {"t_bw_mean", r.t_bw_mean},
              {"t_pe", r.t_pe},
              {"per_iteration_latencies", r.per_iteration_latencies}};
  save_json(args.out_path, out);
  std::cout << "t_iter_mean " << r.t_iter_mean << "s (t_fw " << r.t_fw_mean
            << ", t_bw " << r.t_bw_mean << ", t_pe " << r.t_pe << ") -> "
            << args.out_path << "\n";
  return kExitOk;
}

int cmd_run(const CommonArgs& args, std::int64_t sim_iters) {
  Catalog catalog = load_catalog(args.catalog_path);
  ModelProfile profile = load_profile(args.profile_path);
  auto bw_model = load_net_model(args.net_model_path);
  auto spec = load_cloudspec(args.cloudspec_path);
  TrainJob job = load_job(args.job_path, catalog);

  rt::RunOptions options;
  options.seed = derive_seed(args.seed, "run");
  options.window_minutes = args.window_minutes;
  options.overheads.launch_s = args.launch_overhead_s;
  options.overheads.detach_s = args.detach_overhead_s;
  options.optimizer.exhaustive_gate = args.exhaustive_gate;
  options.sim_iters = sim_iters;

  EventLog log = rt::run_closed_loop(job, profile, bw_model, spec, options);
  log.save(args.out_path);
  std::string status =
      log.events.empty() ? "" : log.events.back().value("status", "");
  std::cout << render_report(log) << "log -> " << args.out_path << "\n";
  return status == "unsat" ? kExitUnsat : kExitOk;
}

int cmd_report(const std::string& log_path, const std::string& out_path) {
  EventLog log = EventLog::load(log_path);
  std::string report = render_report(log);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << report;
  }
  std::cout << report;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vmplan: VM selection and latency prediction for distributed training"};
  app.require_subcommand(1);

  CommonArgs args;
  app.add_option("--seed", args.seed, "base seed; all randomness derives from it");

  auto add_common = [&](CLI::App* sub, bool catalog = false, bool profile = false,
                        bool net = false, bool cloud = false, bool job = false) {
    if (catalog)
      sub->add_option("--catalog", args.catalog_path, "VM catalog JSON")
          ->required();
    if (profile)
      sub->add_option("--profile", args.profile_path, "model profile JSON")
          ->required();
    if (net)
      sub->add_option("--net-model", args.net_model_path,
                      "bandwidth model JSON")
          ->required();
    if (cloud)
      sub->add_option("--cloudspec", args.cloudspec_path, "cloud spec JSON")
          ->required();
    if (job)
      sub->add_option("--job", args.job_path, "train job JSON")->required();
    sub->add_option("--out", args.out_path, "output path")->required();
  };

  // probe
  auto* probe = app.add_subcommand("probe", "grid-probe allreduce bandwidth on cloudsim");
  pipeline::ProbeGrid grid = pipeline::default_grid();
  int allocations = 3;
  std::vector<double> sizes;
  std::vector<std::int64_t> worlds;
  add_common(probe, true, false, false, true, false);
  probe->add_option("--sizes", sizes, "buffer sizes in bytes (default 4B..512MB x8)");
  probe->add_option("--worlds", worlds, "world sizes (default 2..64 powers of two)");
  probe->add_option("--allocations", allocations, "allocations per type");

  // fit-net
  auto* fit = app.add_subcommand("fit-net", "train the bandwidth model from probe CSV");
  std::string probes_path;
  netmodel::TrainingConfig net_config;
  fit->add_option("--probes", probes_path, "probe CSV")->required();
  fit->add_option("--out", args.out_path, "model artifact path")->required();
  fit->add_option("--mtu", net_config.mtu, "MTU split point in bytes");
  fit->add_option("--bandwidth-floor", net_config.bandwidth_floor,
                  "prediction clamp in bytes/s");
  fit->add_option("--weight-decay", net_config.weight_decay,
                  "exponential decay per row age (1 = off)");
  bool no_autotune = false;
  fit->add_flag("--no-autotune", no_autotune, "skip the hyperparameter grid");
  fit->add_option("--trees", net_config.params.n_trees, "trees when not autotuning");
  fit->add_option("--max-depth", net_config.params.max_depth, "tree depth");
  fit->add_option("--learning-rate", net_config.params.learning_rate, "shrinkage");

  // profile
  auto* prof = app.add_subcommand("profile", "fit compute latency models on cloudsim");
  pipeline::ProfileOptions prof_options;
  std::string out_catalog;
  add_common(prof, true, false, false, true, false);
  prof->add_option("--replicates", prof_options.replicates, "replicates per batch");
  bool full_sweep = false;
  prof->add_flag("--full-sweep", full_sweep, "probe all powers of two, not 4");
  prof->add_option("--threshold-cutoff", prof_options.threshold_cutoff,
                   "throughput fraction defining threshold_batch");
  prof->add_option("--out-catalog", out_catalog,
                   "write catalog with probed memcap/threshold");

  // plan
  auto* plan = app.add_subcommand("plan", "search for the best VM configuration");
  std::string stats_path;
  std::int64_t sim_iters = sim::kDefaultIters;
  add_common(plan, true, true, true, false, true);
  plan->add_option("--out-stats", stats_path, "search stats JSON path");
  plan->add_option("--exhaustive-gate", args.exhaustive_gate,
                   "max estimated sims before switching to anchor mode");
  plan->add_option("--sim-iters", sim_iters, "iterations sampled per sim call");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "predict iteration latency of a plan");
  std::string plan_path;
  add_common(simulate, true, true, true, false, false);
  simulate->add_option("--plan", plan_path, "plan JSON")->required();
  simulate->add_option("--sim-iters", sim_iters, "iterations sampled");

  // run
  auto* run = app.add_subcommand("run", "closed loop: plan, execute on cloudsim, replan");
  add_common(run, true, true, true, true, true);
  run->add_option("--exhaustive-gate", args.exhaustive_gate, "solver gate");
  run->add_option("--window-minutes", args.window_minutes, "throughput window");
  run->add_option("--launch-overhead-s", args.launch_overhead_s,
                  "instance launch overhead");
  run->add_option("--detach-overhead-s", args.detach_overhead_s,
                  "volume detach overhead");
  run->add_option("--sim-iters", sim_iters, "iterations sampled per sim call");

  // report
  auto* report = app.add_subcommand("report", "render an event log as a timeline");
  std::string log_path, report_out;
  report->add_option("--log", log_path, "event log (JSON lines)")->required();
  report->add_option("--out", report_out, "also write the report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (probe->parsed()) {
      if (probe->count("--sizes")) grid.buffer_sizes = sizes;
      if (probe->count("--worlds"))
        grid.world_sizes.assign(worlds.begin(), worlds.end());
      grid.allocations = allocations;
      return cmd_probe(args, grid);
    }
    if (fit->parsed()) {
      net_config.autotune = !no_autotune;
      return cmd_fit_net(args, probes_path, net_config);
    }
    if (prof->parsed()) {
      prof_options.budgeted = !full_sweep;
      return cmd_profile(args, prof_options, out_catalog);
    }
    if (plan->parsed()) return cmd_plan(args, stats_path, sim_iters);
    if (simulate->parsed()) return cmd_simulate(args, plan_path, sim_iters);
    if (run->parsed()) return cmd_run(args, sim_iters);
    if (report->parsed()) return cmd_report(log_path, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
