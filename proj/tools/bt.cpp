// bt: command-line front end for generation, style inversion, staged
// fine-tuning, LEEP scoring, sweeps and reports.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bt/core/dataset.hpp"
#include "bt/core/errors.hpp"
#include "bt/core/manifest.hpp"
#include "bt/core/rng.hpp"
#include "bt/dsi/style_inversion.hpp"
#include "bt/genesis/generate.hpp"
#include "bt/harness/config.hpp"
#include "bt/harness/experiment.hpp"
#include "bt/harness/report.hpp"
#include "bt/harness/sweep.hpp"
#include "bt/metrics/metrics.hpp"
#include "bt/transfer/model.hpp"
#include "bt/transfer/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitPartialSweep = 2;

void write_text(const fs::path& p, const std::string& s) {
  write_file(p, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

// ------------------------------------------------------------------ index

DatasetSpec resolve_dataset(const std::string& name, const std::string& classes_file) {
  if (classes_file.empty()) return register_dataset(name);
  auto names = read_class_names(classes_file);
  try {
    return register_dataset(name).with_class_names(std::move(names));
  } catch (const LookupError&) {
    return DatasetSpec::custom(name, std::move(names));
  }
}


struct IndexArgs {
  std::string root;
  std::string dataset;
  std::string classes;
  std::string role = "train";
  std::string out;
};

// <root>/<class>/<image>.png -> manifest; class directories sorted by name.
int run_index(const IndexArgs& a) {
  const fs::path root(a.root);
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path().filename().string());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw ConfigError("no class directories under " + root.string());

  const DatasetSpec dataset = a.classes.empty() ? DatasetSpec::custom(a.dataset, dirs) : resolve_dataset(a.dataset, a.classes);
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < dataset.n_classes(); ++c) index[dataset.class_name(c)] = c;

  const fs::path out = a.out.empty() ? root / (a.role + ".manifest") : fs::path(a.out);
  const fs::path base = fs::absolute(out).parent_path();
  std::vector<ImageRecord> records;
  for (const auto& d : dirs) {
    auto it = index.find(d);
    // Generated pools use "<index>_<class name>" directories.
    if (it == index.end() && d.find('_') != std::string::npos) it = index.find(d.substr(d.find('_') + 1));
    if (it == index.end()) throw ConfigError("directory '" + d + "' is not a class of " + dataset.name());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(root / d))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      records.push_back({fs::relative(fs::absolute(f), base), it->second, ImageOrigin::real, std::nullopt});
  }
  const auto role = a.role == "val" ? ManifestRole::val : ManifestRole::train;
  const SplitManifest manifest(dataset, role, std::move(records));
  persist_manifest(manifest, out);
  std::printf("%zu classes, %zu images -> %s\n", dataset.n_classes(), manifest.size(), out.c_str());
  return kExitOk;
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
  std::string dataset;
  std::string classes;
  std::size_t per_class = 1000;
  double gs = 2.0;
  std::string backend = "stub";
  std::string prompt_mode = "template";
  std::string token_name = "S*";
  std::uint64_t seed = 0;
  std::string out;
  int resolution = 512;
  std::size_t steps = 50;
  std::string negative_prompt;
  std::string endpoint;
  std::string token_env = "BT_GENERATOR_TOKEN";
  std::string fit_manifest;
  std::string style_token;
  std::uint64_t denoiser_seed = 0;
  std::size_t fit_steps = 3000;
  std::size_t parallelism = 1;
  std::size_t max_attempts = 3;
};


int run_generate(const GenerateArgs& a) {
  const auto dataset = resolve_dataset(a.dataset, a.classes);
  harness::BackendSpec spec;
  spec.kind = a.backend;
  spec.endpoint = a.endpoint;
  spec.token_env = a.token_env;
  if (!a.fit_manifest.empty()) spec.fit_manifest = a.fit_manifest;
  if (!a.style_token.empty()) spec.style_token = a.style_token;
  spec.denoiser_seed = a.denoiser_seed;
  spec.fit_steps = a.fit_steps;
  if (spec.kind == "toy" && !spec.fit_manifest) throw ConfigError("--backend toy requires --fit-manifest");
  if (spec.kind == "remote" && spec.endpoint.empty()) throw ConfigError("--backend remote requires --endpoint");
  auto backend = harness::make_backend(spec);

  genesis::GenerationJob job{dataset, a.per_class};
  job.guidance.scale = a.gs;
  job.guidance.steps = a.steps;
  job.guidance.resolution = a.resolution;
  if (!a.negative_prompt.empty()) job.guidance.negative_prompt = a.negative_prompt;
  if (a.prompt_mode == "style") job.prompt_mode = genesis::StylePrompts{a.token_name};
  job.seed = a.seed;
  job.out_dir = a.out;
  job.parallelism = a.parallelism;
  job.max_attempts = a.max_attempts;
  const auto result = genesis::generate_images(job, *backend);
  persist_manifest(result.manifest, fs::path(a.out) / "synthetic.manifest");
  std::printf("generated %zu, resumed %zu, total %zu images -> %s\n", result.generated, result.resumed,
              result.manifest.size(), (fs::path(a.out) / "synthetic.manifest").c_str());
  return kExitOk;
}

// ------------------------------------------------------------------ dsi

struct DsiArgs {
  std::string dataset;
  std::uint64_t iterations = 20000;
  std::uint64_t seed = 0;
  std::string out = "token.bt";
  std::size_t batch_size = 4;
  double lr = 5e-3;
  std::string token_name = "S*";
  std::uint64_t denoiser_seed = 0;
  std::size_t fit_steps = 3000;
};

int run_dsi(const DsiArgs& a) {
  const fs::path manifest_path(a.dataset);
  const transfer::ImageSource source{load_manifest(manifest_path), manifest_path.parent_path()};
  auto denoiser = harness::fitted_toy_denoiser(source, a.denoiser_seed, a.fit_steps);
  const auto data = dsi::encode_manifest(source.manifest, *denoiser, source.root);

  dsi::InversionConfig cfg;
  cfg.iterations = a.iterations;
  cfg.seed = a.seed;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = a.lr;
  cfg.token_name = a.token_name;
  const auto every = std::max<std::uint64_t>(1, a.iterations / 10);
  auto result = dsi::train_style_token(data, *denoiser, cfg, [&](std::uint64_t step, double loss) {
    if ((step + 1) % every == 0) std::printf("step %llu loss %.6f\n", static_cast<unsigned long long>(step + 1), loss);
  });
  dsi::save_token(result.token, a.out);
  std::printf("token %s (%zu dims, %llu steps) -> %s\n", result.token.name.c_str(), result.token.embedding.size(),
              static_cast<unsigned long long>(result.optimizer_steps), a.out.c_str());
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config;
  std::string pipeline;
  std::string dataset;
  std::string eval;
  std::string synthetic_manifest;
  std::optional<std::size_t> shots;
  std::optional<std::size_t> images_per_class;
  std::string arch;
  std::string checkpoint;
  std::vector<double> lr_grid;
  std::optional<double> lr;
  std::string lr_select_on;
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::string out;
};

int run_train(const TrainArgs& a) {
  json tree = json::object();
  fs::path base = fs::current_path();
  if (!a.config.empty()) {
    tree = harness::load_config(a.config);
    base = fs::absolute(a.config).parent_path();
  }
  // Flags are relative to the working directory; make them absolute so the
  // config's base directory does not apply to them.
  auto abs = [](const std::string& p) { return fs::absolute(p).string(); };
  if (!a.pipeline.empty()) tree["pipeline"] = a.pipeline;
  if (!a.dataset.empty()) tree["real_manifest"] = abs(a.dataset);
  if (!a.eval.empty()) tree["eval_manifest"] = abs(a.eval);
  if (!a.synthetic_manifest.empty()) tree["synthetic_manifest"] = abs(a.synthetic_manifest);
  if (a.shots) tree["shots"] = *a.shots;
  if (a.images_per_class) tree["images_per_class"] = *a.images_per_class;
  if (!a.arch.empty()) tree["architecture"] = a.arch;
  if (!a.checkpoint.empty()) tree["checkpoint"] = abs(a.checkpoint);
  if (!a.lr_grid.empty()) tree["lr_grid"] = a.lr_grid;
  if (a.lr) tree["learning_rate"] = *a.lr;
  if (!a.lr_select_on.empty()) tree["lr_select_on"] = a.lr_select_on == "train-holdout" ? "train_holdout" : a.lr_select_on;
  if (a.epochs) tree["epochs"] = *a.epochs;
  if (a.batch_size) tree["batch_size"] = *a.batch_size;
  if (!tree.contains("lr_select_seeds")) tree["lr_select_seeds"] = a.seeds;

  const auto cfg = harness::ExperimentConfig::from_json(tree, base);
  std::vector<double> scores;
  std::string metric;
  for (auto seed : a.seeds) {
    const fs::path dir = a.seeds.size() == 1 ? fs::path(a.out) : fs::path(a.out) / ("s" + std::to_string(seed));
    auto snapshot = tree;
    snapshot["seed"] = seed;
    const auto result = harness::run_experiment(cfg, seed, dir, snapshot);
    metric = std::string(to_string(result.run.metric));
    if (result.lr_selection) std::printf("seed %llu: selected lr %g\n", static_cast<unsigned long long>(seed), result.learning_rate);
    if (result.run.final_accuracy) {
      scores.push_back(*result.run.final_accuracy * 100.0);
      std::printf("seed %llu: %s %s accuracy %.2f%% -> %s\n", static_cast<unsigned long long>(seed),
                  std::string(transfer::to_string(result.run.kind)).c_str(), metric.c_str(), scores.back(),
                  dir.c_str());
    } else {
      std::printf("seed %llu: trained (no eval set) -> %s\n", static_cast<unsigned long long>(seed), dir.c_str());
    }
  }
  if (scores.size() > 1) {
    double mean = 0, var = 0;
    for (double s : scores) mean += s;
    mean /= double(scores.size());
    for (double s : scores) var += (s - mean) * (s - mean);
    harness::CellStats st{mean, std::sqrt(var / double(scores.size())), scores.size(), metric};
    std::printf("%s over %zu seeds: %s\n", metric.c_str(), scores.size(), harness::format_cell(st).c_str());
  }
  return kExitOk;
}

// ------------------------------------------------------------------ leep

struct LeepArgs {
  std::vector<std::string> runs;
  std::string dataset;
  std::string split = "train";
  std::string table;
};

fs::path checkpoint_of(const fs::path& run) {
  if (fs::is_directory(run)) return run / "model.btm";
  return run;
}

fs::path split_manifest(const fs::path& dataset, const std::string& split) {
  if (!fs::is_directory(dataset)) return dataset;
  const auto p = dataset / (split + ".manifest");
  if (!fs::exists(p)) throw ConfigError("no " + split + ".manifest in " + dataset.string());
  return p;
}

int run_leep(const LeepArgs& a) {
  const auto manifest_path = split_manifest(a.dataset, a.split);
  const auto target = load_manifest(manifest_path);
  const auto data = transfer::load_images(target, manifest_path.parent_path());
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& run : a.runs) {
    auto model = transfer::load_checkpoint(checkpoint_of(run));
    metrics::PredictionSet p;
    p.n = data.images.size();
    p.source_classes = model.n_classes();
    const auto probs = transfer::predict_probabilities(model, data.images);
    p.source_distributions.assign(probs.begin(), probs.end());
    p.target_labels = data.labels;
    const double score = metrics::leep_score(p);
    std::printf("leep %s on %s/%s: %.6f (natural log, %zu images)\n", run.c_str(), target.dataset().name().c_str(),
                a.split.c_str(), score, p.n);
    rows.emplace_back(run, score);
  }
  if (rows.size() >= 2) {
    const fs::path out = a.table.empty() ? fs::path("leep_table.md") : fs::path(a.table);
    std::string md = "| model | " + target.dataset().name() + " |\n|---|---|\n";
    for (const auto& [run, score] : rows) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", score);
      md += "| " + run + " | " + buf + " |\n";
    }
    md += "\nLEEP (natural log) on the " + a.split + " split; higher is more transferable.\n";
    write_text(out, md);
    std::printf("comparison table -> %s\n", out.c_str());
  }
  return kExitOk;
}

// ------------------------------------------------------------------ sweep

struct SweepArgs {
  std::string spec;
  std::string store;
  std::size_t parallel = 1;
};

int run_sweep_cmd(const SweepArgs& a) {
  const auto tree = harness::load_config(a.spec);
  const auto spec = harness::SweepSpec::from_json(tree);
  const fs::path store = a.store.empty() ? fs::path(a.spec).parent_path() / spec.name : fs::path(a.store);
  const auto result = harness::run_sweep(spec, store, harness::experiment_cell_runner(fs::absolute(a.spec).parent_path()),
                                         {a.parallel});
  std::printf("%zu cells: executed %zu, skipped %zu, failed %zu -> %s\n", result.records.size(), result.executed,
              result.skipped, result.failures.size(), store.c_str());
  for (const auto& f : result.failures)
    std::printf("  failed %s_s%llu: %s\n", f.config_hash.substr(0, 12).c_str(),
                static_cast<unsigned long long>(f.seed), f.error.c_str());
  return result.failures.empty() ? kExitOk : kExitPartialSweep;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
  std::string store;
  std::string kind = "table";
  std::string out;
  std::string rows = "pipeline";
  std::string columns = "dataset";
  std::string x = harness::kVolumeAxis;
  std::string series = "pipeline";
  bool per_column_metrics = false;
  std::string title;
  std::vector<std::string> order;
  std::vector<std::string> where;
  std::vector<std::string> contact;
  std::size_t max_classes = 10;
  std::size_t per_cell = 4;
  int thumb = 64;
};

int run_report(const ReportArgs& a) {
  harness::ReportOptions o;
  o.kind = harness::parse_report_kind(a.kind);
  o.row_key = a.rows;
  o.column_key = a.columns;
  o.x_key = a.x;
  o.series_key = a.series;
  o.per_column_metrics = a.per_column_metrics;
  o.title = a.title;
  o.contact_max_classes = a.max_classes;
  o.contact_per_cell = a.per_cell;
  o.contact_thumb = a.thumb;
  for (const auto& spec : a.order) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--order expects key=v1,v2,...");
    std::vector<std::string> values;
    std::stringstream ss(spec.substr(eq + 1));
    for (std::string v; std::getline(ss, v, ',');) values.push_back(v);
    o.order[spec.substr(0, eq)] = values;
  }
  for (const auto& spec : a.where) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--where expects key=value");
    o.where[spec.substr(0, eq)] = spec.substr(eq + 1);
  }
  for (const auto& spec : a.contact) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--contact expects label=manifest");
    const fs::path m(spec.substr(eq + 1));
    o.contact_columns.push_back({spec.substr(0, eq), {load_manifest(m), m.parent_path()}});
  }
  std::vector<harness::RunRecord> records;
  if (o.kind != harness::ReportKind::contact_sheet) {
    if (a.store.empty()) throw ConfigError("--store is required for " + a.kind + " reports");
    records = harness::load_records(a.store);
  }
  const fs::path out = a.out.empty() ? fs::path(a.store.empty() ? "." : a.store) / "report" : fs::path(a.out);
  for (const auto& f : harness::emit_report(records, o, out)) std::printf("%s\n", f.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bridged transfer with synthetic images: generation, style inversion, fine-tuning, evaluation"};
  app.require_subcommand(1);

  IndexArgs ia;
  auto* idx = app.add_subcommand("index", "Build a manifest from a <root>/<class>/*.png tree");
  idx->add_option("--root", ia.root, "Image tree root")->required();
  idx->add_option("--dataset", ia.dataset, "Dataset name")->required();
  idx->add_option("--classes", ia.classes, "Class-name file (default: directory names)");
  idx->add_option("--role", ia.role, "Manifest role")->check(CLI::IsMember({"train", "val"}))->capture_default_str();
  idx->add_option("--out", ia.out, "Manifest path (default <root>/<role>.manifest)");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic image pool");
  gen->add_option("--dataset", ga.dataset, "Dataset name (built-in or custom with --classes)")->required();
  gen->add_option("--classes", ga.classes, "Class-name file, one per line");
  gen->add_option("--per-class", ga.per_class, "Images per class")->capture_default_str();
  gen->add_option("--gs", ga.gs, "Guidance scale")->capture_default_str();
  gen->add_option("--backend", ga.backend, "Backend")->check(CLI::IsMember({"stub", "toy", "remote"}))->capture_default_str();
  gen->add_option("--prompt-mode", ga.prompt_mode, "Prompt mode")->check(CLI::IsMember({"template", "style"}))->capture_default_str();
  gen->add_option("--token-name", ga.token_name, "Style token name used in style prompts")->capture_default_str();
  gen->add_option("--seed", ga.seed, "Job seed")->capture_default_str();
  gen->add_option("--out", ga.out, "Output directory")->required();
  gen->add_option("--resolution", ga.resolution, "Image side in pixels")->capture_default_str();
  gen->add_option("--steps", ga.steps, "Sampling steps")->capture_default_str();
  gen->add_option("--negative-prompt", ga.negative_prompt, "Negative prompt (remote only)");
  gen->add_option("--endpoint", ga.endpoint, "Remote endpoint URL");
  gen->add_option("--token-env", ga.token_env, "Environment variable holding the bearer token")->capture_default_str();
  gen->add_option("--fit-manifest", ga.fit_manifest, "Manifest the toy denoiser is fitted on");
  gen->add_option("--style-token", ga.style_token, "Style token file (toy backend)");
  gen->add_option("--denoiser-seed", ga.denoiser_seed, "Toy denoiser seed")->capture_default_str();
  gen->add_option("--fit-steps", ga.fit_steps, "Toy denoiser fitting steps")->capture_default_str();
  gen->add_option("--parallelism", ga.parallelism, "Concurrent requests")->capture_default_str();
  gen->add_option("--max-attempts", ga.max_attempts, "Attempts per image")->capture_default_str();

  DsiArgs da;
  auto* dsi_cmd = app.add_subcommand("dsi", "Learn a dataset style token (toy denoiser)");
  dsi_cmd->add_option("--dataset", da.dataset, "Train manifest of the target dataset")->required();
  dsi_cmd->add_option("--iterations", da.iterations, "Optimizer steps")->capture_default_str();
  dsi_cmd->add_option("--seed", da.seed, "Seed")->capture_default_str();
  dsi_cmd->add_option("--out", da.out, "Token file")->capture_default_str();
  dsi_cmd->add_option("--batch-size", da.batch_size, "Latents per step")->capture_default_str();
  dsi_cmd->add_option("--lr", da.lr, "Adam learning rate")->capture_default_str();
  dsi_cmd->add_option("--token-name", da.token_name, "Token name")->capture_default_str();
  dsi_cmd->add_option("--denoiser-seed", da.denoiser_seed, "Toy denoiser seed")->capture_default_str();
  dsi_cmd->add_option("--fit-steps", da.fit_steps, "Toy denoiser fitting steps")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fine-tune with a transfer pipeline");
  train->add_option("--config", ta.config, "Experiment config (JSON); flags override it");
  train->add_option("--pipeline", ta.pipeline, "Pipeline")
      ->check(CLI::IsMember({"vanilla", "mixed", "bridged", "bridged++"}));
  train->add_option("--dataset", ta.dataset, "Real train manifest");
  train->add_option("--eval", ta.eval, "Evaluation manifest");
  train->add_option("--synthetic-manifest", ta.synthetic_manifest, "Synthetic pool manifest");
  train->add_option("--shots", ta.shots, "Few-shot k per class");
  train->add_option("--images-per-class", ta.images_per_class, "Synthetic images per class");
  train->add_option("--arch", ta.arch, "Backbone architecture");
  train->add_option("--checkpoint", ta.checkpoint, "Pretrained backbone checkpoint");
  train->add_option("--lr-grid", ta.lr_grid, "Learning-rate grid searched before training");
  train->add_option("--lr", ta.lr, "Fixed learning rate (skips the grid)");
  train->add_option("--lr-select-on", ta.lr_select_on, "Split used to select the LR")
      ->check(CLI::IsMember({"val", "train-holdout", "train_holdout"}));
  train->add_option("--seeds", ta.seeds, "Run seeds")->capture_default_str();
  train->add_option("--epochs", ta.epochs, "Epochs per stage");
  train->add_option("--batch-size", ta.batch_size, "Batch size");
  train->add_option("--out", ta.out, "Run directory")->required();

  LeepArgs la;
  auto* leep = app.add_subcommand("leep", "Score transferability with LEEP");
  leep->add_option("--model-run", la.runs, "Run directory or checkpoint (repeat to compare)")->required();
  leep->add_option("--dataset", la.dataset, "Target manifest, or a directory with <split>.manifest")->required();
  leep->add_option("--split", la.split, "Split used when --dataset is a directory")
      ->check(CLI::IsMember({"train", "val"}))
      ->capture_default_str();
  leep->add_option("--table", la.table, "Comparison table path (two or more runs)");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Run (or resume) a sweep");
  sweep->add_option("--spec", sa.spec, "Sweep spec (JSON)")->required();
  sweep->add_option("--store", sa.store, "Record store directory");
  sweep->add_option("--parallel", sa.parallel, "Concurrent cells")->capture_default_str();

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Emit tables and figures from a record store");
  report->add_option("--store", ra.store, "Record store directory");
  report->add_option("--kind", ra.kind, "Report kind")
      ->check(CLI::IsMember({"table", "line", "bar", "radar", "contact_sheet"}))
      ->capture_default_str();
  report->add_option("--out", ra.out, "Output directory");
  report->add_option("--rows", ra.rows, "Table row key")->capture_default_str();
  report->add_option("--columns", ra.columns, "Column / group / spoke key")->capture_default_str();
  report->add_option("--x", ra.x, "Line-chart x key")->capture_default_str();
  report->add_option("--series", ra.series, "Series key")->capture_default_str();
  report->add_flag("--per-column-metrics", ra.per_column_metrics, "Allow one metric kind per column");
  report->add_option("--title", ra.title, "Title");
  report->add_option("--order", ra.order, "Value order, key=v1,v2,...");
  report->add_option("--where", ra.where, "Keep records with key=value (repeatable)");
  report->add_option("--contact", ra.contact, "Contact-sheet column, label=manifest");
  report->add_option("--max-classes", ra.max_classes, "Contact-sheet rows")->capture_default_str();
  report->add_option("--per-cell", ra.per_cell, "Images per contact-sheet cell")->capture_default_str();
  report->add_option("--thumb", ra.thumb, "Thumbnail side")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*idx) return run_index(ia);
    if (*gen) return run_generate(ga);
    if (*dsi_cmd) return run_dsi(da);
    if (*train) return run_train(ta);
    if (*leep) return run_leep(la);
    if (*sweep) return run_sweep_cmd(sa);
    if (*report) return run_report(ra);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bt: error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
