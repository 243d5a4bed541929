#include "bt/transfer/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "bt/core/errors.hpp"
#include "bt/core/rng.hpp"

namespace bt::transfer {

std::string_view to_string(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::vanilla: return "vanilla";
    case PipelineKind::mixed: return "mixed";
    case PipelineKind::bridged: return "bridged";
    case PipelineKind::bridged_pp: return "bridged++";
  }
  return "?";
}

PipelineKind parse_pipeline_kind(std::string_view s) {
  if (s == "vanilla") return PipelineKind::vanilla;
  if (s == "mixed") return PipelineKind::mixed;
  if (s == "bridged") return PipelineKind::bridged;
  if (s == "bridged++" || s == "bridged_pp") return PipelineKind::bridged_pp;
  throw ConfigError("unknown pipeline kind: " + std::string(s));
}

void PipelineConfig::validate() const {
  const std::string k(to_string(kind));
  stage2.validate();
  if (stage1) stage1->validate();
  switch (kind) {
    case PipelineKind::vanilla:
      if (stage1) throw ConfigError("vanilla transfer has no synthetic stage");
      if (synthetic) throw ConfigError("vanilla transfer takes no synthetic manifest");
      break;
    case PipelineKind::mixed:
      if (stage1) throw ConfigError("mixed transfer is a single stage over the union");
      if (!synthetic) throw ConfigError("mixed transfer requires a synthetic manifest");
      break;
    case PipelineKind::bridged:
    case PipelineKind::bridged_pp:
      if (!stage1) throw ConfigError(k + " transfer requires a synthetic stage");
      if (!synthetic) throw ConfigError(k + " transfer requires a synthetic manifest");
      break;
  }
  if (kind == PipelineKind::bridged_pp) {
    if (!stage1->mixup) throw ConfigError("bridged++ requires Mixup in the synthetic stage");
    if (!stage2.fc_reinit_before) throw ConfigError("bridged++ requires classifier reinit before stage 2");
  }
  if (mixed_synthetic_fraction) {
    if (kind != PipelineKind::mixed) throw ConfigError("synthetic fraction applies to mixed transfer only");
    if (!(*mixed_synthetic_fraction > 0 && *mixed_synthetic_fraction < 1)) {
      throw ConfigError("synthetic fraction must lie in (0, 1)");
    }
  }
  if (real.manifest.empty()) throw ConfigError("real training manifest is empty");
  const auto n = real.manifest.dataset().n_classes();
  if (synthetic && synthetic->manifest.dataset().n_classes() != n) {
    throw ConfigError("synthetic manifest's dataset has a different class count");
  }
  if (eval && eval->manifest.dataset().n_classes() != n) {
    throw ConfigError("eval manifest's dataset has a different class count");
  }
}

PipelineConfig PipelineConfig::make(PipelineKind kind, StageConfig stage, ImageSource real,
                                    std::optional<ImageSource> synthetic,
                                    std::optional<ImageSource> eval) {
  PipelineConfig c{kind, std::nullopt, stage, std::nullopt, std::move(real), std::move(eval), std::nullopt};
  if (kind != PipelineKind::vanilla) c.synthetic = std::move(synthetic);
  if (kind == PipelineKind::bridged || kind == PipelineKind::bridged_pp) {
    c.stage1 = stage;
    c.stage1->seed = derive_seed(stage.seed, {1});
    c.stage1->fc_reinit_before = false;
  }
  if (kind == PipelineKind::bridged_pp) {
    c.stage1->mixup = MixupConfig{};
    c.stage2.fc_reinit_before = true;
  }
  return c;
}

namespace {

LabeledImages subsample(const LabeledImages& data, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(splitmix64(seed));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(n, idx.size()));
  std::sort(idx.begin(), idx.end());
  LabeledImages out;
  for (auto i : idx) {
    out.images.push_back(data.images[i]);
    out.labels.push_back(data.labels[i]);
  }
  out.synthetic_count = data.synthetic_count ? out.images.size() : 0;
  out.real_count = out.images.size() - out.synthetic_count;
  return out;
}

constexpr std::uint64_t kHeadSeedTag = 0x4EAD;

}  // namespace

PipelineRun run_pipeline(const PipelineConfig& config, const BackboneHandle& pretrained) {
  config.validate();
  const DatasetSpec& dataset = config.real.manifest.dataset();
  const std::size_t n_classes = dataset.n_classes();

  const LabeledImages real = load_images(config.real.manifest, config.real.root);
  LabeledImages synthetic;
  if (config.synthetic) synthetic = load_images(config.synthetic->manifest, config.synthetic->root);
  LabeledImages eval_images;
  if (config.eval) eval_images = load_images(config.eval->manifest, config.eval->root);
  std::optional<EvalSet> eval;
  if (!eval_images.empty()) eval = EvalSet{&eval_images, dataset.metric(), n_classes};

  PipelineRun run;
  run.kind = config.kind;
  run.metric = dataset.metric();
  run.model = pretrained;

  struct Planned {
    const StageConfig* cfg;
    LabeledImages data;
  };
  std::vector<Planned> plan;
  switch (config.kind) {
    case PipelineKind::vanilla:
      plan.push_back({&config.stage2, real});
      break;
    case PipelineKind::mixed: {
      LabeledImages uni = real;
      if (config.mixed_synthetic_fraction) {
        const double f = *config.mixed_synthetic_fraction;
        const auto want = static_cast<std::size_t>(std::llround(f * double(real.size()) / (1.0 - f)));
        uni.append(subsample(synthetic, want, derive_seed(config.stage2.seed, {2})));
      } else {
        uni.append(synthetic);
      }
      plan.push_back({&config.stage2, std::move(uni)});
      break;
    }
    case PipelineKind::bridged:
    case PipelineKind::bridged_pp:
      plan.push_back({&*config.stage1, synthetic});
      plan.push_back({&config.stage2, real});
      break;
  }

  for (std::size_t s = 0; s < plan.size(); ++s) {
    const StageConfig& cfg = *plan[s].cfg;
    StageRecord rec;
    rec.name = "stage" + std::to_string(s + 1);
    rec.train_size = plan[s].data.size();
    rec.real_images = plan[s].data.real_count;
    rec.synthetic_images = plan[s].data.synthetic_count;
    rec.head_reinitialized = s == 0 || cfg.fc_reinit_before;
    if (rec.head_reinitialized) {
      run.model = reinit_classifier(run.model, n_classes, derive_seed(cfg.seed, {kHeadSeedTag}));
    }
    rec.extractor_digest_before = run.model.extractor_digest();
    rec.head_digest_before = run.model.head_digest();
    rec.trace = fine_tune_stage(run.model, plan[s].data, eval, cfg).trace;
    rec.extractor_digest_after = run.model.extractor_digest();
    rec.head_digest_after = run.model.head_digest();
    run.stages.push_back(std::move(rec));
  }
  if (eval) run.final_accuracy = run.stages.back().trace.back().eval_accuracy;
  return run;
}

LrSelection select_lr(const std::vector<double>& grid, const std::vector<std::uint64_t>& seeds,
                      const std::function<double(double, std::uint64_t)>& run) {
  if (grid.empty()) throw ConfigError("learning-rate grid is empty");
  if (grid.size() == 1) return {grid.front(), {}};
  if (seeds.empty()) throw ConfigError("learning-rate selection needs at least one seed");

  LrSelection out;
  std::optional<std::size_t> best;
  for (double lr : grid) {
    LrTrial trial{lr, std::nullopt, ""};
    double sum = 0;
    bool ok = true;
    for (auto seed : seeds) {
      try {
        sum += run(lr, seed);
      } catch (const DivergenceError& e) {
        ok = false;
        trial.diagnostics = e.what();
        break;
      }
    }
    if (ok) trial.score = sum / double(seeds.size());
    out.trials.push_back(trial);
    if (!trial.score) continue;
    const auto& cur = out.trials.back();
    if (!best || *cur.score > *out.trials[*best].score ||
        (*cur.score == *out.trials[*best].score && cur.learning_rate > out.trials[*best].learning_rate)) {
      best = out.trials.size() - 1;
    }
  }
  if (!best) {
    std::string msg = "every learning rate diverged:";
    for (const auto& t : out.trials) msg += "\n  lr " + std::to_string(t.learning_rate) + ": " + t.diagnostics;
    throw DivergenceError(msg);
  }
  out.learning_rate = out.trials[*best].learning_rate;
  return out;
}

std::function<double(double, std::uint64_t)> pipeline_lr_runner(const PipelineConfig& config,
                                                                const BackboneHandle& pretrained,
                                                                LrSelectOn on) {
  if (on == LrSelectOn::val && (!config.eval || config.eval->manifest.empty())) {
    throw ConfigError("learning-rate selection on val needs an eval manifest");
  }
  return [config, pretrained, on](double lr, std::uint64_t seed) {
    PipelineConfig c = config;
    c.stage2.learning_rate = lr;
    c.stage2.seed = derive_seed(seed, {2});
    if (c.stage1) {
      c.stage1->learning_rate = lr;
      c.stage1->seed = derive_seed(seed, {1});
    }
    if (on == LrSelectOn::train_holdout) {
      auto [keep, held] = stratified_holdout(config.real.manifest, 0.2, seed);
      c.real.manifest = std::move(keep);
      c.eval = ImageSource{std::move(held), config.real.root};
    }
    auto run = run_pipeline(c, pretrained);
    if (!run.final_accuracy) throw ValidationError("learning-rate selection produced no eval score");
    return *run.final_accuracy;
  };
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

void write_run_dir(const std::filesystem::path& dir, const PipelineRun& run,
                   const std::string& config_json) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "config.json", config_json);

  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& st : run.stages) {
    std::string csv = "epoch,lr,train_loss,train_acc,eval_acc\n";
    for (const auto& r : st.trace.records()) {
      csv += std::to_string(r.epoch) + "," + num(r.learning_rate) + "," + num(r.train_loss) + "," +
             num(r.train_accuracy) + "," + (r.eval_accuracy ? num(*r.eval_accuracy) : "") + "\n";
    }
    write_text(dir / (st.name + "_metrics.csv"), csv);
    stages.push_back({{"name", st.name},
                      {"train_size", st.train_size},
                      {"real_images", st.real_images},
                      {"synthetic_images", st.synthetic_images},
                      {"head_reinitialized", st.head_reinitialized},
                      {"extractor_digest_before", st.extractor_digest_before},
                      {"extractor_digest_after", st.extractor_digest_after},
                      {"head_digest_before", st.head_digest_before},
                      {"head_digest_after", st.head_digest_after}});
  }
  save_checkpoint(run.model, dir / "model.btm");

  nlohmann::ordered_json final_json;
  final_json["pipeline"] = std::string(to_string(run.kind));
  final_json["architecture"] = run.model.architecture;
  final_json["metric"] = std::string(to_string(run.metric));
  final_json["final_accuracy"] = run.final_accuracy ? nlohmann::ordered_json(*run.final_accuracy)
                                                    : nlohmann::ordered_json(nullptr);
  final_json["stages"] = stages;
  final_json["checkpoint"] = "model.btm";
  write_text(dir / "final.json", final_json.dump(2) + "\n");
}

}  // namespace bt::transfer
