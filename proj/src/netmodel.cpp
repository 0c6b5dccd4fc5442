// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "vmplan/errors.hpp"

namespace vmplan::netmodel {

double bus_bandwidth(double s_bytes, Count n, double t_seconds) {
  if (n < 2) throw DomainError("bus_bandwidth: world_size < 2 means no communication");
  if (t_seconds <= 0.0) throw DomainError("bus_bandwidth: time must be > 0");
  if (s_bytes <= 0.0) throw DomainError("bus_bandwidth: buffer size must be > 0");
  double nd = static_cast<double>(n);
  return 2.0 * s_bytes * (nd - 1.0) / (nd * t_seconds);
}

double allreduce_time(double s_bytes, Count n, double bus_bw) {
  if (n < 2) throw DomainError("allreduce_time: world_size < 2 means no communication");
  if (bus_bw <= 0.0) throw DomainError("allreduce_time: bandwidth must be > 0");
  if (s_bytes <= 0.0) throw DomainError("allreduce_time: buffer size must be > 0");
  double nd = static_cast<double>(n);
  return 2.0 * s_bytes * (nd - 1.0) / (nd * bus_bw);
}

BuildResult build_dataset(
    const std::vector<std::pair<ProbeFeatures, double>>& raw_probes) {
  BuildResult out;
  for (const auto& [f, t] : raw_probes) {
    if (f.world_size < 2 || t <= 0.0 || f.buffer_bytes <= 0.0) {
      ++out.skipped;
      continue;
    }
    ProbeRecord r;
    r.features = f;
    r.measured_time_s = t;
    r.bus_bw = bus_bandwidth(f.buffer_bytes, f.world_size, t);
    out.records.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------- CSV ----

namespace {

constexpr const char* kCsvVersionLine = "# vmplan-probe-csv v1";
constexpr const char* kCsvHeader =
    "region,zone,device_kind,cpu_kind,rated_network_bps,buffer_bytes,"
    "world_size,concurrent_transfers,placement_group,time_s";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

void write_probe_csv(const std::filesystem::path& path,
                     std::span<const ProbeRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kCsvVersionLine << "\n" << kCsvHeader << "\n";
  out.precision(17);
  for (const auto& r : records) {
    const auto& f = r.features;
    out << f.region << ',' << f.zone << ',' << f.device_kind << ','
        << f.cpu_kind << ',' << f.rated_network_bps << ',' << f.buffer_bytes
        << ',' << f.world_size << ',' << f.concurrent_transfers << ','
        << (f.placement_group ? 1 : 0) << ',' << r.measured_time_s << "\n";
  }
}

std::vector<ProbeRecord> read_probe_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::vector<std::pair<ProbeFeatures, double>> raw;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kCsvHeader)
        throw IoError(path.string() + ": unexpected CSV header '" + line + "'");
      header_seen = true;
      continue;
    }
    auto cols = split_csv_line(line);
    if (cols.size() != 10)
      throw IoError(path.string() + ": expected 10 columns, got " +
                    std::to_string(cols.size()));
    ProbeFeatures f;
    f.region = cols[0];
    f.zone = cols[1];
    f.device_kind = cols[2];
    f.cpu_kind = cols[3];
    f.rated_network_bps = std::stod(cols[4]);
    f.buffer_bytes = std::stod(cols[5]);
    f.world_size = std::stoll(cols[6]);
    f.concurrent_transfers = std::stoll(cols[7]);
    f.placement_group = cols[8] == "1" || cols[8] == "true";
    raw.emplace_back(std::move(f), std::stod(cols[9]));
  }
  auto built = build_dataset(raw);
  return built.records;
}

// -------------------------------------------------------------- model ----

namespace {

constexpr std::size_t kNumFeatures = 9;
const std::array<const char*, 4> kVocabNames = {"region", "zone",
                                                "device_kind", "cpu_kind"};

std::uint64_t dataset_hash(const std::vector<ProbeRecord>& rows) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& r : rows) {
    mix(r.features.region.data(), r.features.region.size());
    mix(r.features.zone.data(), r.features.zone.size());
    mix(r.features.device_kind.data(), r.features.device_kind.size());
    mix(r.features.cpu_kind.data(), r.features.cpu_kind.size());
    mix(&r.features.rated_network_bps, sizeof(double));
    mix(&r.features.buffer_bytes, sizeof(double));
    mix(&r.features.world_size, sizeof(Count));
    mix(&r.features.concurrent_transfers, sizeof(Count));
    mix(&r.measured_time_s, sizeof(double));
  }
  return h;
}

double mape_of(std::span<const double> pred, std::span<const double> label) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += std::abs(pred[i] - label[i]) / label[i];
  return 100.0 * acc / static_cast<double>(pred.size());
}

double label_stddev(std::span<const double> y) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / std::max<std::size_t>(1, y.size() - 1));
}

}  // namespace

std::vector<double> BandwidthModel::encode(const ProbeFeatures& f) const {
  auto code = [this](std::size_t vocab_idx, const std::string& v) -> double {
    const auto& vocab = vocabs_[vocab_idx];
    auto it = std::find(vocab.begin(), vocab.end(), v);
    // Unknown categories get the reserved code -1 and route like any other
    // feature value; prediction never hard-fails on new vocabulary.
    return it == vocab.end() ? -1.0
                             : static_cast<double>(it - vocab.begin());
  };
  return {code(0, f.region),
          code(1, f.zone),
          code(2, f.device_kind),
          code(3, f.cpu_kind),
          f.rated_network_bps,
          f.buffer_bytes,
          static_cast<double>(f.world_size),
          static_cast<double>(f.concurrent_transfers),
          f.placement_group ? 1.0 : 0.0};
}

double BandwidthModel::eval_side(const Side& s, const ProbeFeatures& f) const {
  if (!s.fallback) return s.model.predict(encode(f));
  // Nearest neighbour over (log buffer, log world); deterministic ties by
  // first row.
  double ls = std::log1p(f.buffer_bytes);
  double ln = std::log(static_cast<double>(std::max<Count>(1, f.world_size)));
  double best_d = std::numeric_limits<double>::infinity();
  double best_y = floor_;
  for (const auto& row : s.nn_rows) {
    double d = (ls - row[0]) * (ls - row[0]) + (ln - row[1]) * (ln - row[1]);
    if (d < best_d) {
      best_d = d;
      best_y = row[2];
    }
  }
  return best_y;
}

BandwidthModel::Prediction BandwidthModel::predict_detailed(
    const ProbeFeatures& f) const {
  if (f.world_size < 2)
    throw DomainError("predict_bus_bw: world_size < 2 means no communication");
  const Side& side = f.buffer_bytes <= mtu_ ? small_ : large_;
  double raw = eval_side(side, f);
  if (raw < floor_) return {floor_, true};
  return {raw, false};
}

double BandwidthModel::predict(const ProbeFeatures& f) const {
  return predict_detailed(f).bus_bw;
}

BandwidthModel BandwidthModel::train(const std::vector<ProbeRecord>& dataset,
                                     const TrainingConfig& config) {
  if (dataset.empty()) throw DomainError("train_model: empty dataset");

  BandwidthModel m;
  m.mtu_ = config.mtu;
  m.floor_ = config.bandwidth_floor;
  m.vocab_names_.assign(kVocabNames.begin(), kVocabNames.end());
  m.vocabs_.assign(4, {});

  auto intern = [&m](std::size_t vi, const std::string& v) {
    auto& vocab = m.vocabs_[vi];
    if (std::find(vocab.begin(), vocab.end(), v) == vocab.end())
      vocab.push_back(v);
  };
  for (const auto& r : dataset) {
    intern(0, r.features.region);
    intern(1, r.features.zone);
    intern(2, r.features.device_kind);
    intern(3, r.features.cpu_kind);
  }

  // Row weights decay with age; later rows are newer. Splitting by MTU
  // afterwards keeps each row's weight attached.
  std::size_t n = dataset.size();
  std::vector<double> age_weight(n, 1.0);
  if (config.weight_decay != 1.0) {
    for (std::size_t i = 0; i < n; ++i)
      age_weight[i] =
          std::pow(config.weight_decay, static_cast<double>(n - 1 - i));
  }

  struct SideData {
    std::vector<double> x;  // row-major
    std::vector<double> y;
    std::vector<double> w;
  };
  SideData small, large;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = dataset[i];
    SideData& side = r.features.buffer_bytes <= config.mtu ? small : large;
    auto enc = m.encode(r.features);
    side.x.insert(side.x.end(), enc.begin(), enc.end());
    side.y.push_back(r.bus_bw);
    side.w.push_back(age_weight[i]);
  }

  auto fit_side = [&config](const SideData& d) {
    Side side;
    gbt::Params best = config.params;
    if (config.autotune && d.y.size() >= 8) {
      // Deterministic stride split: every 4th row held out.
      SideData tr, ho;
      for (std::size_t i = 0; i < d.y.size(); ++i) {
        SideData& dst = (i % 4 == 3) ? ho : tr;
        dst.x.insert(dst.x.end(), d.x.begin() + i * kNumFeatures,
                     d.x.begin() + (i + 1) * kNumFeatures);
        dst.y.push_back(d.y[i]);
        dst.w.push_back(d.w[i]);
      }
      double best_mape = std::numeric_limits<double>::infinity();
      double delta = std::max(1.0, label_stddev(d.y));
      for (gbt::Loss loss : {gbt::Loss::squared, gbt::Loss::pseudo_huber}) {
        for (int depth : {3, 5, 8}) {
          for (int trees : {100, 300}) {
            for (double lr : {0.1, 0.3}) {
              gbt::Params p = config.params;
              p.loss = loss;
              p.max_depth = depth;
              p.n_trees = trees;
              p.learning_rate = lr;
              p.huber_delta = delta;
              auto model = gbt::train(tr.x, kNumFeatures, tr.y, tr.w, p);
              std::vector<double> pred(ho.y.size());
              for (std::size_t i = 0; i < ho.y.size(); ++i)
                pred[i] = model.predict(std::span<const double>(
                    ho.x.data() + i * kNumFeatures, kNumFeatures));
              double mape = mape_of(pred, ho.y);
              if (mape < best_mape) {
                best_mape = mape;
                best = p;
              }
            }
          }
        }
      }
    }
    side.model = gbt::train(d.x, kNumFeatures, d.y, d.w, best);
    return side;
  };

  bool small_empty = small.y.empty();
  bool large_empty = large.y.empty();
  if (small_empty && large_empty)
    throw DomainError("train_model: no usable rows");

  auto nn_rows_of = [](const SideData& d) {
    std::vector<std::array<double, 3>> rows;
    for (std::size_t i = 0; i < d.y.size(); ++i) {
      double s = d.x[i * kNumFeatures + 5];
      double w = d.x[i * kNumFeatures + 6];
      rows.push_back({std::log1p(s), std::log(std::max(1.0, w)), d.y[i]});
    }
    return rows;
  };

  if (!small_empty) m.small_ = fit_side(small);
  if (!large_empty) m.large_ = fit_side(large);
  if (small_empty) {
    m.small_.fallback = true;
    m.small_.nn_rows = nn_rows_of(large);
  }
  if (large_empty) {
    m.large_.fallback = true;
    m.large_.nn_rows = nn_rows_of(small);
  }

  m.metadata_ = {
      {"dataset_rows", n},
      {"dataset_hash", dataset_hash(dataset)},
      {"weight_decay", config.weight_decay},
      {"seed", config.seed},
      {"autotune", config.autotune},
      {"small_rows", small.y.size()},
      {"large_rows", large.y.size()},
      {"small_fallback", m.small_.fallback},
      {"large_fallback", m.large_.fallback},
  };
  return m;
}

nlohmann::json BandwidthModel::to_json() const {
  auto side_json = [](const Side& s) -> nlohmann::json {
    if (s.fallback) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : s.nn_rows)
        rows.push_back({r[0], r[1], r[2]});
      return {{"kind", "nearest_neighbor"}, {"rows", rows}};
    }
    return gbt::to_json(s.model);
  };
  nlohmann::json vocabs = nlohmann::json::object();
  for (std::size_t i = 0; i < vocab_names_.size(); ++i)
    vocabs[vocab_names_[i]] = vocabs_[i];
  return {{"format", "vmplan-bandwidth-model"},
          {"version", 1},
          {"mtu", mtu_},
          {"bandwidth_floor", floor_},
          {"feature_encoding", vocabs},
          {"small_model", side_json(small_)},
          {"large_model", side_json(large_)},
          {"training_metadata", metadata_}};
}

BandwidthModel BandwidthModel::from_json(const nlohmann::json& j) {
  BandwidthModel m;
  if (j.value("format", "") != "vmplan-bandwidth-model")
    throw StructuralError("bandwidth model: unrecognized format");
  m.mtu_ = j.at("mtu").get<double>();
  m.floor_ = j.at("bandwidth_floor").get<double>();
  m.vocab_names_.assign(kVocabNames.begin(), kVocabNames.end());
  m.vocabs_.assign(4, {});
  const auto& vocabs = j.at("feature_encoding");
  for (std::size_t i = 0; i < m.vocab_names_.size(); ++i)
    if (vocabs.contains(m.vocab_names_[i]))
      m.vocabs_[i] = vocabs[m.vocab_names_[i]].get<std::vector<std::string>>();
  auto side_from = [](const nlohmann::json& sj) {
    Side s;
    if (sj.value("kind", "") == "nearest_neighbor") {
      s.fallback = true;
      for (const auto& r : sj.at("rows"))
        s.nn_rows.push_back({r[0].get<double>(), r[1].get<double>(),
                             r[2].get<double>()});
    } else {
      s.model = gbt::model_from_json(sj);
    }
    return s;
  };
  m.small_ = side_from(j.at("small_model"));
  m.large_ = side_from(j.at("large_model"));
  m.metadata_ = j.value("training_metadata", nlohmann::json::object());
  return m;
}

double evaluate_mape(const BandwidthModel& model,
                     std::span<const ProbeRecord> testset) {
  if (testset.empty()) throw DomainError("evaluate_mape: empty testset");
  double acc = 0.0;
  for (const auto& r : testset) {
    if (r.bus_bw <= 0.0)
      throw DomainError("evaluate_mape: labels must be > 0");
    acc += std::abs(model.predict(r.features) - r.bus_bw) / r.bus_bw;
  }
  return 100.0 * acc / static_cast<double>(testset.size());
}

ProbeFeatures features_for(const VmType& vm, double s_bytes, Count n, Count c) {
  ProbeFeatures f;
  f.region = vm.region;
  f.zone = vm.zone;
  f.device_kind = vm.device_kind;
  f.cpu_kind = "";
  f.rated_network_bps = vm.rated_network;
  f.buffer_bytes = s_bytes;
  f.world_size = n;
  f.concurrent_transfers = c;
  f.placement_group = !vm.placement_group.empty();
  return f;
}

double predict_min_over_types(const BandwidthModel& model,
                              std::span<const VmType> types, double s_bytes,
                              Count n, Count c) {
  if (types.empty()) throw DomainError("predict_min_over_types: no types");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : types)
    best = std::min(best, model.predict(features_for(t, s_bytes, n, c)));
  return best;
}

}  // namespace vmplan::netmodel
