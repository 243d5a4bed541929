#include "bt/harness/sweep.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "bt/core/errors.hpp"
#include "bt/core/hash.hpp"

namespace bt::harness {

using nlohmann::json;

std::vector<json> default_axis_values(const std::string& axis) {
  if (axis == kGuidanceAxis) return {2, 3.5, 5, 6.5, 8};
  if (axis == kShotsAxis) return {1, 2, 4, 8, 16};
  if (axis == kVolumeAxis) return {500, 1000, 1500, 2000, 2500, 3000};
  if (axis == kArchitectureAxis) return {"resnet18", "resnet50", "vit_b16", "vit_l16"};
  throw ConfigError("axis '" + axis + "' has no default values");
}

void SweepSpec::validate() const {
  if (!base.is_object()) throw ConfigError("sweep base must be an object");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  std::set<std::string> seen;
  for (const auto& [axis, values] : axes) {
    if (axis.empty()) throw ConfigError("sweep axis without a name");
    if (!seen.insert(axis).second) throw ConfigError("duplicate sweep axis '" + axis + "'");
    if (values.empty()) throw ConfigError("sweep axis '" + axis + "' has no values");
    std::set<std::string> distinct;
    for (const auto& v : values)
      if (!distinct.insert(v.dump()).second) {
        throw ConfigError("sweep axis '" + axis + "' repeats value " + v.dump());
      }
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("duplicate sweep seeds");
  }
}

std::size_t SweepSpec::cell_count() const {
  std::size_t n = seeds.size();
  for (const auto& [_, values] : axes) n *= values.size();
  return n;
}

SweepSpec SweepSpec::from_json(const json& j) {
  SweepSpec s;
  try {
    s.name = j.value("name", s.name);
    s.base = j.value("base", json::object());
    for (const auto& a : j.value("axes", json::array())) {
      const std::string name = a.at("name").get<std::string>();
      std::vector<json> values;
      if (a.contains("values")) {
        for (const auto& v : a.at("values")) values.push_back(v);
      } else {
        values = default_axis_values(name);
      }
      s.axes.emplace_back(name, std::move(values));
    }
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed sweep spec: ") + e.what());
  }
  s.validate();
  return s;
}

json SweepSpec::to_json() const {
  json axes_j = json::array();
  for (const auto& [name, values] : axes) axes_j.push_back({{"name", name}, {"values", values}});
  return {{"name", name}, {"base", base}, {"axes", axes_j}, {"seeds", seeds}};
}

std::string Cell::id() const { return config_hash.substr(0, 12) + "_s" + std::to_string(seed); }

std::vector<Cell> expand_cells(const SweepSpec& spec) {
  spec.validate();
  std::vector<Cell> cells;
  std::vector<std::size_t> idx(spec.axes.size(), 0);
  for (;;) {
    json coords = json::object();
    json config = spec.base;
    for (std::size_t a = 0; a < spec.axes.size(); ++a) {
      const auto& [name, values] = spec.axes[a];
      coords[name] = values[idx[a]];
      config[name] = values[idx[a]];
    }
    const std::string canon = config.dump();
    const std::string hash =
        sha256_hex({reinterpret_cast<const std::uint8_t*>(canon.data()), canon.size()});
    for (auto seed : spec.seeds) cells.push_back({coords, config, hash, seed});

    std::size_t a = spec.axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < spec.axes[a].second.size()) break;
      idx[a] = 0;
      if (a == 0) return cells;
    }
    if (spec.axes.empty()) return cells;
  }
}

json RunRecord::to_json() const {
  json j{{"config_hash", config_hash},
         {"coordinates", coordinates},
         {"seed", seed},
         {"final_accuracy", final_accuracy ? json(*final_accuracy) : json(nullptr)},
         {"metric", metric},
         {"traces", traces},
         {"wall_clock_seconds", wall_clock_seconds},
         {"status", status}};
  if (!error.empty()) j["error"] = error;
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.coordinates = j.at("coordinates");
  r.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("final_accuracy").is_null()) r.final_accuracy = j.at("final_accuracy").get<double>();
  r.metric = j.value("metric", "");
  r.traces = j.value("traces", "");
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  r.status = j.value("status", "ok");
  r.error = j.value("error", "");
  return r;
}

std::vector<RunRecord> load_records(const std::filesystem::path& store_dir) {
  std::vector<RunRecord> out;
  const auto path = store_dir / kRecordsFile;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) break;  // torn tail
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(RunRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

namespace {

json record_labels(const Cell& cell) {
  json labels = cell.coordinates;
  for (const char* key : {"dataset", "pipeline", "architecture"}) {
    if (labels.contains(key) || !cell.config.contains(key)) continue;
    const auto& v = cell.config.at(key);
    if (v.is_string()) labels[key] = v;
    else if (v.is_object() && v.contains("name")) labels[key] = v.at("name");
  }
  return labels;
}

std::string key_of(const std::string& hash, std::uint64_t seed) {
  return hash + "/" + std::to_string(seed);
}

void write_summary(const std::filesystem::path& path, const SweepSpec& spec, const SweepResult& r) {
  std::ostringstream s;
  std::size_t ok = 0;
  for (const auto& rec : r.records) ok += rec.ok();
  s << "sweep: " << spec.name << "\n"
    << "cells: " << spec.cell_count() << "\n"
    << "completed: " << ok << "\n"
    << "failed: " << r.failures.size() << "\n"
    << "executed this invocation: " << r.executed << "\n"
    << "skipped (already complete): " << r.skipped << "\n";
  if (!r.failures.empty()) {
    s << "\nfailures:\n";
    for (const auto& f : r.failures)
      s << "  " << f.config_hash.substr(0, 12) << "_s" << f.seed << " " << f.coordinates.dump() << ": " << f.error
        << "\n";
  }
  std::ofstream out(path, std::ios::binary);
  out << s.str();
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const std::filesystem::path& store_dir,
                      const CellRunner& runner, const SweepOptions& options) {
  const auto cells = expand_cells(spec);
  std::error_code ec;
  std::filesystem::create_directories(store_dir, ec);
  if (ec) throw IoError("cannot create sweep store " + store_dir.string() + ": " + ec.message());
  {
    std::ofstream spec_out(store_dir / kSpecFile, std::ios::binary);
    spec_out << spec.to_json().dump(2) << "\n";
    if (!spec_out) throw IoError("cannot write sweep spec");
  }

  // Rewrite the log without a torn tail before appending to it.
  auto previous = load_records(store_dir);
  {
    std::ofstream clean(store_dir / kRecordsFile, std::ios::binary | std::ios::trunc);
    for (const auto& r : previous) clean << r.to_json().dump() << '\n';
    if (!clean) throw IoError("cannot rewrite " + (store_dir / kRecordsFile).string());
  }
  std::map<std::string, RunRecord> latest;
  for (const auto& r : previous) latest[key_of(r.config_hash, r.seed)] = r;

  SweepResult result;
  std::vector<const Cell*> pending;
  for (const auto& c : cells) {
    auto it = latest.find(key_of(c.config_hash, c.seed));
    if (it != latest.end() && it->second.ok()) {
      ++result.skipped;
    } else {
      pending.push_back(&c);
    }
  }

  std::ofstream log(store_dir / kRecordsFile, std::ios::binary | std::ios::app);
  if (!log) throw IoError("cannot append to " + (store_dir / kRecordsFile).string());
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      {
        std::lock_guard lock(mu);
        if (fatal) return;
      }
      const Cell& cell = *pending[i];
      RunRecord rec;
      rec.config_hash = cell.config_hash;
      rec.coordinates = record_labels(cell);
      rec.seed = cell.seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const auto outcome = runner(cell, store_dir / "runs" / cell.id());
        rec.final_accuracy = outcome.final_accuracy;
        rec.metric = std::string(to_string(outcome.metric));
        rec.traces = outcome.traces;
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
      }
      rec.wall_clock_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard lock(mu);
      log << rec.to_json().dump() << '\n';
      log.flush();
      if (!log) {
        fatal = std::make_exception_ptr(IoError("append to the sweep record store failed"));
        return;
      }
      latest[key_of(rec.config_hash, rec.seed)] = rec;
      ++result.executed;
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.parallelism, pending.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  for (const auto& c : cells) {
    const auto& rec = latest.at(key_of(c.config_hash, c.seed));
    result.records.push_back(rec);
    if (!rec.ok()) result.failures.push_back(rec);
  }
  write_summary(store_dir / kSummaryFile, spec, result);
  return result;
}

}  // namespace bt::harness
