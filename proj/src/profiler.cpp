// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vmplan/errors.hpp"

namespace vmplan::profiler {

Samples find_max_batch(const std::function<bool(Samples)>& fits,
                       Samples upper_bound) {
  if (upper_bound < 1) throw DomainError("find_max_batch: upper_bound < 1");
  if (!fits(1)) throw DomainError("model does not fit on device at batch 1");
  Samples lo = 1, hi = upper_bound;  // fits(lo) holds; hi is unknown
  if (fits(upper_bound)) return upper_bound;
  // Invariant: fits(lo) && !fits(hi).
  while (hi - lo > 1) {
    Samples mid = lo + (hi - lo) / 2;
    if (fits(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

std::vector<Samples> probe_schedule(Samples b_max, bool budgeted) {
  if (b_max < 1) throw DomainError("probe_schedule: b_max < 1");
  std::vector<Samples> out;
  if (budgeted) {
    out = {1, std::max<Samples>(1, b_max / 4), std::max<Samples>(1, b_max / 2),
           b_max};
  } else {
    for (Samples b = 1; b <= b_max; b *= 2) out.push_back(b);
    if (out.back() != b_max) out.push_back(b_max);
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

double pass_latency(const LatencySample& s, Pass pass) {
  return pass == Pass::fw ? s.fw_latency : s.bw_latency;
}

// batch -> mean latency over replicates, sorted by batch.
std::vector<std::pair<Samples, double>> batch_means(
    const std::vector<LatencySample>& samples, Pass pass) {
  std::map<Samples, std::pair<double, int>> acc;
  for (const auto& s : samples) {
    if (s.batch < 1) throw DomainError("latency sample with batch < 1");
    double t = pass_latency(s, pass);
    if (t <= 0.0) throw DomainError("latency sample with non-positive latency");
    auto& [sum, n] = acc[s.batch];
    sum += t;
    n += 1;
  }
  std::vector<std::pair<Samples, double>> out;
  for (const auto& [b, sn] : acc) out.emplace_back(b, sn.first / sn.second);
  return out;
}

}  // namespace

PiecewiseLatencyModel fit_latency_model(const std::vector<LatencySample>& samples,
                                        Pass pass, Samples b_max) {
  auto means = batch_means(samples, pass);
  if (means.size() < 2)
    throw DomainError("fit_latency_model: need >= 2 distinct batch values");
  if (b_max == 0) b_max = means.back().first;
  if (means.back().first > b_max)
    throw DomainError("fit_latency_model: probed batch above b_max");

  // Monotone repair: a mean dipping below its predecessor is measurement
  // noise; raise it so alpha >= 0 and predictions are non-decreasing.
  for (std::size_t i = 1; i < means.size(); ++i)
    means[i].second = std::max(means[i].second, means[i - 1].second);

  PiecewiseLatencyModel model;
  model.b_max = b_max;
  for (std::size_t i = 0; i + 1 < means.size(); ++i) {
    auto [b0, t0] = means[i];
    auto [b1, t1] = means[i + 1];
    LatencySegment seg;
    seg.alpha = (t1 - t0) / static_cast<double>(b1 - b0);
    seg.beta = t0 - seg.alpha * static_cast<double>(b0);
    seg.batch_lo = (i == 0) ? 1 : b0;
    seg.batch_hi = (i + 2 == means.size()) ? b_max : b1;
    model.segments.push_back(seg);
  }
  return model;
}

double predict_latency(const PiecewiseLatencyModel& model, Samples batch) {
  if (model.segments.empty())
    throw DomainError("predict_latency: empty model");
  if (batch < 1) throw DomainError("predict_latency: batch < 1");
  if (batch > model.b_max)
    throw DomainError("predict_latency: batch " + std::to_string(batch) +
                      " above b_max " + std::to_string(model.b_max) +
                      " (would not fit in device memory)");
  for (const auto& seg : model.segments) {
    if (batch <= seg.batch_hi)
      return seg.alpha * static_cast<double>(batch) + seg.beta;
  }
  const auto& last = model.segments.back();
  return last.alpha * static_cast<double>(batch) + last.beta;
}

Samples find_threshold_batch(const PiecewiseLatencyModel& model,
                             double throughput_cutoff) {
  if (model.segments.empty())
    throw DomainError("find_threshold_batch: empty model");
  // Segment knots are the probed batches (the fitter anchors segments there).
  std::vector<Samples> knots;
  knots.push_back(model.segments.front().batch_lo);
  for (const auto& seg : model.segments) knots.push_back(seg.batch_hi);
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  double best = 0.0;
  for (Samples b : knots)
    best = std::max(best, static_cast<double>(b) / predict_latency(model, b));
  for (Samples b : knots) {
    double tp = static_cast<double>(b) / predict_latency(model, b);
    if (tp >= throughput_cutoff * best) return b;
  }
  return knots.front();
}

std::vector<double> extract_exchange_fractions(const BackwardTrace& trace) {
  if (trace.total_bw_time <= 0.0)
    throw DomainError("extract_exchange_fractions: total_bw_time <= 0");
  std::vector<double> out;
  out.reserve(trace.layer_completion_times.size());
  for (double t : trace.layer_completion_times) {
    if (t < 0.0)
      throw DomainError("extract_exchange_fractions: negative completion time");
    out.push_back(std::clamp(t / trace.total_bw_time, 0.0, 1.0));
  }
  return out;
}

StddevEstimate estimate_stddev(const std::vector<LatencySample>& samples) {
  // Relative deviation of total iteration latency (fw + bw) per batch,
  // pooled across batches with replicate count - 1 as the weight.
  std::map<Samples, std::vector<double>> by_batch;
  for (const auto& s : samples)
    by_batch[s.batch].push_back(s.fw_latency + s.bw_latency);

  double weighted_var = 0.0;
  double dof = 0.0;
  for (const auto& [b, ts] : by_batch) {
    if (ts.size() < 2) continue;
    double mean = 0.0;
    for (double t : ts) mean += t;
    mean /= static_cast<double>(ts.size());
    double ss = 0.0;
    for (double t : ts) ss += (t - mean) * (t - mean);
    double var = ss / static_cast<double>(ts.size() - 1);
    double rel_var = var / (mean * mean);
    weighted_var += rel_var * static_cast<double>(ts.size() - 1);
    dof += static_cast<double>(ts.size() - 1);
  }
  if (dof == 0.0) return {0.0, true};
  return {std::sqrt(weighted_var / dof), false};
}

}  // namespace vmplan::profiler
