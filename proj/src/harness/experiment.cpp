#include "bt/harness/experiment.hpp"

#include <cstdio>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "bt/core/errors.hpp"
#include "bt/core/rng.hpp"
#include "bt/dsi/style_inversion.hpp"
#include "bt/genesis/generate.hpp"

namespace bt::harness {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment key '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

transfer::ImageSource load_source(const fs::path& path) {
  return {load_manifest(path), path.parent_path()};
}

SplitManifest first_per_class(const SplitManifest& m, std::size_t n) {
  std::vector<std::size_t> taken(m.dataset().n_classes(), 0);
  std::vector<ImageRecord> out;
  for (const auto& r : m.records())
    if (taken[r.class_index] < n) {
      ++taken[r.class_index];
      out.push_back(r);
    }
  for (std::size_t c = 0; c < taken.size(); ++c)
    if (taken[c] < n) throw InsufficientDataError(m.dataset().class_name(c), taken[c], n);
  return SplitManifest(m.dataset(), m.role(), std::move(out));
}

// Cells that share a generation cache must not fill it concurrently.
std::mutex& cache_lock(const fs::path& dir) {
  static std::mutex guard;
  static std::map<std::string, std::unique_ptr<std::mutex>> locks;
  std::lock_guard lock(guard);
  auto& m = locks[fs::weakly_canonical(dir).string()];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

transfer::ImageSource generate_pool(const ExperimentConfig& c, const DatasetSpec& dataset) {
  if (!c.images_per_class) throw ConfigError("generating a synthetic pool requires images_per_class");
  char name[160];
  std::snprintf(name, sizeof name, "%s_%s_gs%g_n%zu_s%llu", c.generator->kind.c_str(), c.prompt_mode.c_str(),
                c.guidance_scale, *c.images_per_class, static_cast<unsigned long long>(c.generation_seed));
  const fs::path dir = c.generation_cache / dataset.name() / name;

  genesis::GenerationJob job{dataset, *c.images_per_class, {}, genesis::TemplatePrompts{}, c.generation_seed, dir};
  if (c.prompt_mode == "style") job.prompt_mode = genesis::StylePrompts{c.token_name};
  job.guidance.scale = c.guidance_scale;
  job.guidance.resolution = c.resolution;
  job.parallelism = std::max(1u, std::thread::hardware_concurrency());

  std::lock_guard lock(cache_lock(dir));
  auto backend = make_backend(*c.generator);
  auto result = genesis::generate_images(job, *backend);
  return {std::move(result.manifest), dir};
}

}  // namespace

BackendSpec BackendSpec::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"backend", "endpoint", "token_env", "style_token", "fit_manifest", "denoiser_seed", "fit_steps",
              "prompt_mode", "token_name", "resolution", "seed", "cache"},
             "generator");
  BackendSpec s;
  if (j.contains("backend")) s.kind = get<std::string>(j, "backend");
  if (s.kind != "stub" && s.kind != "toy" && s.kind != "remote")
    throw ConfigError("unknown generator backend '" + s.kind + "' (stub, toy, remote)");
  if (j.contains("endpoint")) s.endpoint = get<std::string>(j, "endpoint");
  if (j.contains("token_env")) s.token_env = get<std::string>(j, "token_env");
  if (j.contains("style_token")) s.style_token = resolve(base_dir, get<std::string>(j, "style_token"));
  if (j.contains("fit_manifest")) s.fit_manifest = resolve(base_dir, get<std::string>(j, "fit_manifest"));
  if (j.contains("denoiser_seed")) s.denoiser_seed = get<std::uint64_t>(j, "denoiser_seed");
  if (j.contains("fit_steps")) s.fit_steps = get<std::size_t>(j, "fit_steps");
  if (s.kind == "remote" && s.endpoint.empty()) throw ConfigError("remote generator needs an endpoint");
  if (s.kind == "toy" && !s.fit_manifest) throw ConfigError("toy generator needs a fit_manifest");
  return s;
}

std::shared_ptr<dsi::ToyDenoiser> fitted_toy_denoiser(const transfer::ImageSource& source, std::uint64_t seed,
                                                      std::size_t steps) {
  dsi::ToyDenoiserConfig cfg;
  cfg.seed = seed;
  auto d = std::make_shared<dsi::ToyDenoiser>(cfg);
  const auto& ds = source.manifest.dataset();
  std::vector<dsi::ToyDenoiser::TrainingPair> pairs;
  for (const auto& r : source.manifest.records()) {
    const auto img = read_png(r.path.is_absolute() ? r.path : source.root / r.path);
    pairs.push_back({d->encode(img), d->embed_prompt("a photo of a " + ds.class_name(r.class_index) + ".", "", nullptr)});
  }
  if (pairs.empty()) throw InsufficientDataError("(any)", 0, 1);
  dsi::ToyDenoiser::FitOptions fit;
  fit.steps = steps;
  fit.seed = derive_seed(seed, {1});
  d->fit(pairs, fit);
  return d;
}

std::unique_ptr<genesis::GeneratorBackend> make_backend(const BackendSpec& spec) {
  if (spec.kind == "stub") return std::make_unique<genesis::StubBackend>();
  if (spec.kind == "remote") {
    genesis::RemoteOptions o;
    o.endpoint = spec.endpoint;
    o.token_env = spec.token_env;
    return std::make_unique<genesis::RemoteBackend>(o);
  }
  if (spec.kind == "toy") {
    if (!spec.fit_manifest) throw ConfigError("toy generator needs a fit_manifest");
    auto d = fitted_toy_denoiser(load_source(*spec.fit_manifest), spec.denoiser_seed, spec.fit_steps);
    std::shared_ptr<const dsi::StyleToken> token;
    if (spec.style_token) token = std::make_shared<dsi::StyleToken>(dsi::load_token(*spec.style_token));
    return std::make_unique<genesis::ToyDiffusionBackend>(d, token);
  }
  throw ConfigError("unknown generator backend '" + spec.kind + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"pipeline", "architecture", "checkpoint", "input_size", "dataset", "real_manifest", "eval_manifest",
              "synthetic_manifest", "generator", "shots", "images_per_class", "guidance_scale", "learning_rate",
              "lr_grid", "lr_select_on", "lr_select_seeds", "epochs", "batch_size", "weight_decay", "momentum",
              "mixup_alpha", "augment_min_scale", "mixed_synthetic_fraction", "notes"},
             "experiment");
  ExperimentConfig c;
  if (j.contains("pipeline")) c.pipeline = transfer::parse_pipeline_kind(get<std::string>(j, "pipeline"));
  if (j.contains("architecture")) c.architecture = get<std::string>(j, "architecture");
  if (j.contains("checkpoint")) c.checkpoint = resolve(base_dir, get<std::string>(j, "checkpoint"));
  if (j.contains("input_size")) c.input_size = get<int>(j, "input_size");
  if (!j.contains("real_manifest")) throw ConfigError("experiment needs real_manifest");
  c.real_manifest = resolve(base_dir, get<std::string>(j, "real_manifest"));
  if (j.contains("eval_manifest")) c.eval_manifest = resolve(base_dir, get<std::string>(j, "eval_manifest"));
  if (j.contains("synthetic_manifest"))
    c.synthetic_manifest = resolve(base_dir, get<std::string>(j, "synthetic_manifest"));
  c.generation_cache = base_dir / "generated";
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    c.generator = BackendSpec::from_json(g, base_dir);
    if (g.contains("prompt_mode")) c.prompt_mode = get<std::string>(g, "prompt_mode");
    if (c.prompt_mode != "template" && c.prompt_mode != "style")
      throw ConfigError("prompt_mode must be 'template' or 'style'");
    if (g.contains("token_name")) c.token_name = get<std::string>(g, "token_name");
    if (g.contains("resolution")) c.resolution = get<int>(g, "resolution");
    if (g.contains("seed")) c.generation_seed = get<std::uint64_t>(g, "seed");
    if (g.contains("cache")) c.generation_cache = resolve(base_dir, get<std::string>(g, "cache"));
  }
  if (c.synthetic_manifest && c.generator) throw ConfigError("give synthetic_manifest or generator, not both");
  if (j.contains("shots")) c.shots = get<std::size_t>(j, "shots");
  if (j.contains("images_per_class")) c.images_per_class = get<std::size_t>(j, "images_per_class");
  if (j.contains("guidance_scale")) c.guidance_scale = get<double>(j, "guidance_scale");
  if (j.contains("learning_rate")) c.learning_rate = get<double>(j, "learning_rate");
  if (j.contains("lr_grid")) c.lr_grid = get<std::vector<double>>(j, "lr_grid");
  if (j.contains("lr_select_on")) {
    const auto on = get<std::string>(j, "lr_select_on");
    if (on == "val") c.lr_select_on = transfer::LrSelectOn::val;
    else if (on == "train_holdout") c.lr_select_on = transfer::LrSelectOn::train_holdout;
    else throw ConfigError("lr_select_on must be 'val' or 'train_holdout'");
  }
  if (j.contains("lr_select_seeds")) c.lr_select_seeds = get<std::vector<std::uint64_t>>(j, "lr_select_seeds");
  if (j.contains("epochs")) c.epochs = get<std::size_t>(j, "epochs");
  if (j.contains("batch_size")) c.batch_size = get<std::size_t>(j, "batch_size");
  if (j.contains("weight_decay")) c.weight_decay = get<double>(j, "weight_decay");
  if (j.contains("momentum")) c.momentum = get<double>(j, "momentum");
  if (j.contains("mixup_alpha")) c.mixup_alpha = get<double>(j, "mixup_alpha");
  if (j.contains("augment_min_scale")) c.augment_min_scale = get<double>(j, "augment_min_scale");
  if (j.contains("mixed_synthetic_fraction")) c.mixed_synthetic_fraction = get<double>(j, "mixed_synthetic_fraction");
  return c;
}

ExperimentResult run_experiment(const ExperimentConfig& c, std::uint64_t seed, const fs::path& run_dir,
                                const json& config_snapshot) {
  auto real = load_source(c.real_manifest);
  if (c.shots) real.manifest = sample_few_shot(real.manifest, *c.shots, derive_seed(seed, {0x5407}));
  const auto& dataset = real.manifest.dataset();

  std::optional<transfer::ImageSource> synthetic;
  if (c.synthetic_manifest) {
    synthetic = load_source(*c.synthetic_manifest);
    if (c.images_per_class) synthetic->manifest = first_per_class(synthetic->manifest, *c.images_per_class);
  } else if (c.generator) {
    synthetic = generate_pool(c, dataset);
  }
  std::optional<transfer::ImageSource> eval;
  if (c.eval_manifest) eval = load_source(*c.eval_manifest);

  const auto& registry = transfer::BackboneRegistry::builtin();
  transfer::BackboneHandle pretrained;
  if (c.checkpoint) {
    pretrained = transfer::load_checkpoint(*c.checkpoint);
  } else {
    pretrained = registry.build(c.architecture, dataset.n_classes(), c.input_size, derive_seed(seed, {0xBB}));
  }

  transfer::StageConfig stage = registry.contains(pretrained.architecture)
                                    ? transfer::StageConfig::defaults_for(registry.lookup(pretrained.architecture),
                                                                          c.shots.has_value())
                                    : transfer::StageConfig::defaults(c.shots.has_value());
  if (c.epochs) stage.epochs = *c.epochs;
  if (c.batch_size) stage.batch_size = *c.batch_size;
  if (c.weight_decay) stage.weight_decay = *c.weight_decay;
  if (c.momentum) stage.momentum = *c.momentum;
  if (c.augment_min_scale) stage.augment_min_scale = *c.augment_min_scale;
  stage.seed = seed;
  if (c.learning_rate) stage.learning_rate = *c.learning_rate;
  else if (c.lr_grid.size() == 1) stage.learning_rate = c.lr_grid.front();
  else if (auto ref = transfer::reference_learning_rate(dataset.name())) stage.learning_rate = *ref;

  auto pcfg = transfer::PipelineConfig::make(c.pipeline, stage, std::move(real), std::move(synthetic), std::move(eval));
  if (c.mixup_alpha && pcfg.stage1 && pcfg.stage1->mixup) pcfg.stage1->mixup->alpha = *c.mixup_alpha;
  pcfg.mixed_synthetic_fraction = c.mixed_synthetic_fraction;
  pcfg.validate();

  ExperimentResult result;
  if (c.lr_grid.size() > 1 && !c.learning_rate) {
    const auto seeds = c.lr_select_seeds.empty() ? std::vector<std::uint64_t>{seed} : c.lr_select_seeds;
    result.lr_selection =
        transfer::select_lr(c.lr_grid, seeds, transfer::pipeline_lr_runner(pcfg, pretrained, c.lr_select_on));
    pcfg.stage2.learning_rate = result.lr_selection->learning_rate;
    if (pcfg.stage1) pcfg.stage1->learning_rate = result.lr_selection->learning_rate;
  }
  result.learning_rate = pcfg.stage2.learning_rate;
  result.run = transfer::run_pipeline(pcfg, pretrained);

  transfer::write_run_dir(run_dir, result.run, config_snapshot.dump(2));
  if (result.lr_selection) {
    json trials = json::array();
    for (const auto& t : result.lr_selection->trials)
      trials.push_back({{"lr", t.learning_rate},
                        {"score", t.score ? json(*t.score) : json(nullptr)},
                        {"diagnostics", t.diagnostics}});
    const json sel = {{"selected", result.lr_selection->learning_rate},
                      {"selected_on", c.lr_select_on == transfer::LrSelectOn::val ? "val" : "train_holdout"},
                      {"trials", trials}};
    const auto text = sel.dump(2) + "\n";
    write_file(run_dir / "lr_selection.json", {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  }
  return result;
}

CellRunner experiment_cell_runner(fs::path base_dir) {
  return [base_dir](const Cell& cell, const fs::path& cell_dir) {
    const auto cfg = ExperimentConfig::from_json(cell.config, base_dir);
    if (!cfg.eval_manifest) throw ConfigError("sweep cells need an eval_manifest");
    const auto result = run_experiment(cfg, cell.seed, cell_dir, cell.config);
    if (!result.run.final_accuracy) throw ValidationError("run produced no final accuracy");
    CellOutcome out;
    out.final_accuracy = *result.run.final_accuracy;
    out.metric = result.run.metric;
    out.traces = (cell_dir.parent_path().filename() / cell_dir.filename()).generic_string();
    return out;
  };
}

}  // namespace bt::harness
