// lidarnl: command-line front end for the noisy-label LiDAR segmentation
// pipeline. Every verb takes an explicit seed where randomness is involved
// and writes a manifest next to its outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lidarnl/augment.hpp"
#include "lidarnl/checkpoint.hpp"
#include "lidarnl/config.hpp"
#include "lidarnl/dataset.hpp"
#include "lidarnl/errors.hpp"
#include "lidarnl/eval.hpp"
#include "lidarnl/gradcheck.hpp"
#include "lidarnl/noise.hpp"
#include "lidarnl/report.hpp"
#include "lidarnl/rng.hpp"
#include "lidarnl/scan_io.hpp"
#include "lidarnl/synth.hpp"
#include "lidarnl/taxonomy.hpp"
#include "lidarnl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw lidarnl::IoError("cannot write " + path.string());
  out << text;
}

// Records every artifact with its FNV-1a-64 digest. Paths are relative to the
// manifest's directory and sorted, so identical runs give identical bytes.
class Manifest {
 public:
  Manifest(std::string verb, fs::path dir) : verb_(std::move(verb)), dir_(std::move(dir)) {}

  json& params() { return params_; }
  void add(const fs::path& rel) { artifacts_.push_back(rel.generic_string()); }

  void write(const fs::path& file) const {
    std::vector<std::string> sorted = artifacts_;
    std::sort(sorted.begin(), sorted.end());
    json arts = json::array();
    for (const std::string& rel : sorted) {
      const auto bytes = lidarnl::read_file_bytes(dir_ / rel);
      arts.push_back({{"path", rel},
                      {"bytes", bytes.size()},
                      {"fnv1a64", hex64(lidarnl::fnv1a64(bytes.data(), bytes.size()))}});
    }
    json j;
    j["tool"] = "lidarnl";
    j["version"] = kVersion;
    j["verb"] = verb_;
    j["rng"] = {{"name", lidarnl::kRngName}, {"version", lidarnl::kRngVersion}};
    j["params"] = params_;
    j["artifacts"] = arts;
    write_text(file, j.dump(2) + "\n");
  }

 private:
  std::string verb_;
  fs::path dir_;
  json params_ = json::object();
  std::vector<std::string> artifacts_;
};

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  int scenes = 0;
  int points = 1500;
  int classes = 6;
  int beams = 32;
  std::uint64_t seed = 0;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  lidarnl::SynthConfig cfg;
  cfg.points = a.points;
  cfg.classes = a.classes;
  cfg.beams = a.beams;
  cfg.validate();
  if (a.scenes < 1) throw lidarnl::ConfigError("--scenes must be >= 1");

  lidarnl::Dataset ds;
  ds.class_names = lidarnl::synth_class_names(a.classes);
  for (int i = 0; i < a.scenes; ++i) {
    ds.scenes.push_back(
        lidarnl::synth_scene(cfg, lidarnl::derive_seed(a.seed, static_cast<std::uint64_t>(i))));
    ds.stems.push_back(lidarnl::scene_stem(static_cast<std::size_t>(i)));
  }
  const fs::path root(a.out);
  Manifest m("synth", root);
  for (const auto& rel : lidarnl::write_dataset(root, ds)) m.add(rel);
  m.params() = {{"scenes", a.scenes}, {"points", a.points}, {"classes", a.classes},
                {"beams", a.beams},   {"seed", a.seed}};
  m.write(root / "manifest.json");
  std::cout << "wrote " << a.scenes << " scenes to " << root.string() << '\n';
  return 0;
}

// ---- inject-noise ---------------------------------------------------------

struct NoiseArgs {
  double ratio = 0.0;
  bool any_ratio = false;
  std::uint64_t seed = 0;
  std::string labels_in;
  std::string labels_out;
  std::string audit_out;
  int classes = 0;
};

int run_inject_noise(const NoiseArgs& a) {
  if (!a.any_ratio && !lidarnl::is_protocol_ratio(a.ratio)) {
    throw lidarnl::ConfigError(
        "--ratio must be one of 0.02, 0.05, 0.1, 0.2, 0.5 (pass --any-ratio to override)");
  }
  const fs::path in(a.labels_in);
  int classes = a.classes;
  if (classes == 0) {
    classes = static_cast<int>(lidarnl::read_class_names(in.parent_path() / "classes.txt").size());
  }
  lidarnl::NoiseConfig cfg{a.ratio, a.seed, classes};
  cfg.validate();

  const fs::path out(a.labels_out);
  fs::create_directories(out);
  Manifest m("inject-noise", out);
  lidarnl::NoiseAudit audit(classes);
  std::uint64_t offset = 0;
  for (const fs::path& file : lidarnl::list_files(in, ".label")) {
    const lidarnl::RawLabels raw = lidarnl::parse_labels(lidarnl::read_file_bytes(file));
    lidarnl::LabelArray labels{raw.semantic, classes};
    const lidarnl::NoisyLabels noisy = lidarnl::inject_symmetric_noise(labels, cfg, offset);
    offset += labels.size();
    audit.merge(noisy.audit);
    lidarnl::write_file_bytes(out / file.filename(),
                              lidarnl::serialize_labels(noisy.labels.labels, raw.instance_ids));
    m.add(file.filename());
  }
  const json audit_json = lidarnl::audit_to_json(audit, cfg);
  const fs::path audit_path = a.audit_out.empty() ? out / "noise_audit.json" : fs::path(a.audit_out);
  write_text(audit_path, audit_json.dump(2) + "\n");
  write_text(out / "noise_audit.txt", lidarnl::audit_to_text(audit));
  m.add("noise_audit.txt");
  m.params() = {{"ratio", a.ratio}, {"seed", a.seed}, {"classes", classes},
                {"audit", audit_path.generic_string()}};
  m.write(out / "manifest.json");
  std::cout << lidarnl::audit_to_text(audit);
  return 0;
}

// ---- augment --------------------------------------------------------------

struct AugmentArgs {
  std::string in;
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
  int scene = 0;
  int partner = -1;
};

int run_augment(const AugmentArgs& a) {
  const lidarnl::Dataset ds = lidarnl::read_dataset(a.in);
  const lidarnl::ExperimentConfig cfg =
      a.config.empty() ? lidarnl::ExperimentConfig{} : lidarnl::ExperimentConfig::load(a.config);
  const auto n = static_cast<int>(ds.scenes.size());
  if (a.scene < 0 || a.scene >= n) throw lidarnl::ConfigError("--scene out of range");
  int partner = a.partner;
  if (partner < 0) {
    lidarnl::Rng rng(lidarnl::derive_seed(a.seed, "partner"));
    partner = n > 1 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1))) : a.scene;
    if (n > 1 && partner >= a.scene) ++partner;
  }
  if (partner >= n) throw lidarnl::ConfigError("--partner out of range");

  const lidarnl::ViewPair vp =
      lidarnl::polarmix(ds.scenes[static_cast<std::size_t>(a.scene)],
                        ds.scenes[static_cast<std::size_t>(partner)],
                        cfg.augment.polarmix(ds.class_names), lidarnl::derive_seed(a.seed, "mix"));
  const lidarnl::DualViews v = lidarnl::build_views(vp, cfg.augment.grid, cfg.augment.drop_count,
                                                    lidarnl::derive_seed(a.seed, "views"));
  lidarnl::Dataset views;
  views.class_names = ds.class_names;
  views.scenes = {v.p_ss, v.p_sa, v.p_ws, v.p_wa};
  views.stems = {"ss", "sa", "ws", "wa"};
  const fs::path root(a.out);
  Manifest m("augment", root);
  for (const auto& rel : lidarnl::write_dataset(root, views)) m.add(rel);
  json maps = {{"idx_ss_in_sa", v.idx_ss_in_sa},
               {"idx_ws_in_wa", v.idx_ws_in_wa},
               {"sa_origin", v.sa_origin}};
  write_text(root / "index_maps.json", maps.dump() + "\n");
  m.add("index_maps.json");
  m.params() = {{"in", a.in},           {"seed", a.seed},
                {"scene", a.scene},     {"partner", partner},
                {"config_hash", hex64(cfg.hash())}};
  m.write(root / "manifest.json");
  std::cout << "views ss/sa/ws/wa: " << v.p_ss.size() << '/' << v.p_sa.size() << '/'
            << v.p_ws.size() << '/' << v.p_wa.size() << " points\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string labels;
  std::string out;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  lidarnl::ExperimentConfig cfg = lidarnl::ExperimentConfig::load(a.config);
  const lidarnl::Dataset ds = lidarnl::read_dataset(a.data, a.labels);
  const int classes = static_cast<int>(ds.class_names.size());
  if (cfg.network.classes != 0 && cfg.network.classes != classes) {
    throw lidarnl::ConfigError("network.classes does not match " + a.data + "/classes.txt");
  }
  cfg.network.classes = classes;
  const std::string cfg_text = cfg.to_text();
  const std::uint64_t cfg_hash = cfg.hash();

  const fs::path root(a.out);
  fs::create_directories(root);
  Manifest m("train", root);
  write_text(root / "config.cfg", cfg_text);
  m.add("config.cfg");

  const auto on_epoch = [&](int epoch, const lidarnl::Model& model) {
    const int every = cfg.train.checkpoint_every;
    if (every > 0 && (epoch + 1) % every == 0 && epoch + 1 < cfg.train.epochs) {
      char name[48];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch + 1);
      lidarnl::save_checkpoint(root / name,
                               lidarnl::make_checkpoint(model, a.seed, cfg_hash, cfg_text));
      m.add(name);
    }
  };

  lidarnl::TrainResult result;
  try {
    result = lidarnl::train(cfg, ds.scenes, ds.class_names, a.seed, on_epoch);
  } catch (const lidarnl::TrainingDiverged& e) {
    write_text(root / "history.json", e.history().to_json().dump(1) + "\n");
    std::cerr << "training diverged; partial history in " << (root / "history.json").string()
              << '\n';
    throw;
  }
  lidarnl::save_checkpoint(root / "model.ckpt",
                           lidarnl::make_checkpoint(result.model, a.seed, cfg_hash, cfg_text));
  m.add("model.ckpt");
  write_text(root / "history.json", result.history.to_json().dump(1) + "\n");
  write_text(root / "history.csv", result.history.to_csv());
  m.add("history.json");
  m.add("history.csv");
  m.params() = {{"config", a.config},
                {"config_hash", hex64(cfg_hash)},
                {"data", a.data},
                {"labels", a.labels},
                {"seed", a.seed},
                {"scenes", ds.scenes.size()}};
  m.write(root / "manifest.json");
  const auto& steps = result.history.steps;
  std::cout << "trained " << steps.size() << " steps";
  if (!steps.empty()) std::cout << ", final loss " << steps.back().total;
  std::cout << "\ncheckpoint " << (root / "model.ckpt").string() << '\n';
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::vector<std::string> data;
  std::vector<std::string> masks;
  std::string report;
};

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* flag) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    throw CLI::ValidationError(std::string(flag), "expected NAME=VALUE, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

int run_eval(const EvalArgs& a) {
  const lidarnl::Checkpoint ck = lidarnl::load_checkpoint(a.ckpt);
  const lidarnl::ExperimentConfig cfg = lidarnl::ExperimentConfig::parse(ck.config_text);
  const lidarnl::Model model = lidarnl::model_from_checkpoint(ck, cfg.network);

  std::map<std::string, std::vector<bool>> masks;
  for (const std::string& s : a.masks) {
    auto [name, bits] = split_assignment(s, "--mask");
    std::vector<bool> mask;
    for (char c : bits) {
      if (c != '0' && c != '1') throw lidarnl::ConfigError("--mask bits must be 0 or 1");
      mask.push_back(c == '1');
    }
    if (mask.size() != static_cast<std::size_t>(cfg.network.classes)) {
      throw lidarnl::ConfigError("--mask " + name + " needs one bit per class");
    }
    masks[name] = mask;
  }

  std::vector<lidarnl::Dataset> loaded;
  std::vector<std::string> names;
  for (const std::string& s : a.data) {
    auto [name, dir] = split_assignment(s, "--data");
    loaded.push_back(lidarnl::read_dataset(dir));
    names.push_back(name);
  }
  std::vector<std::string> class_names = loaded.front().class_names;
  std::vector<lidarnl::EvalDataset> sets;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (loaded[i].class_names != class_names) {
      throw lidarnl::ConfigError("dataset " + names[i] + " uses a different class list");
    }
    lidarnl::EvalDataset d{names[i], loaded[i].scenes, {}};
    if (auto it = masks.find(names[i]); it != masks.end()) d.present_mask = it->second;
    sets.push_back(std::move(d));
  }
  for (const auto& [name, mask] : masks) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw lidarnl::ConfigError("--mask names unknown dataset '" + name + "'");
    }
  }

  lidarnl::Provenance prov{ck.seed, cfg.train.eta_declared, ck.config_hash};
  const lidarnl::MetricsReport rep = lidarnl::evaluate(model, sets, class_names, prov);

  const fs::path report_path(a.report);
  const fs::path dir = report_path.has_parent_path() ? report_path.parent_path() : fs::path(".");
  const std::string stem = report_path.stem().string();
  write_text(report_path, lidarnl::report_to_json(rep).dump(2) + "\n");
  write_text(dir / (stem + ".txt"), lidarnl::report_to_table(rep));
  write_text(dir / (stem + ".csv"), lidarnl::report_to_csv(rep));
  Manifest m("eval", dir);
  m.add(report_path.filename());
  m.add(stem + ".txt");
  m.add(stem + ".csv");
  m.params() = {{"ckpt", a.ckpt}, {"data", a.data}, {"mask", a.masks}};
  m.write(dir / (stem + ".manifest.json"));
  std::cout << lidarnl::report_to_table(rep);
  return 0;
}

// ---- gradcheck ------------------------------------------------------------

int run_gradcheck(std::uint64_t seed, int trials) {
  const lidarnl::GradCheckReport r = lidarnl::run_gradcheck_suite(seed, trials);
  std::cout << r.to_text();
  return r.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lidarnl - noisy-label LiDAR segmentation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  c_synth->add_option("--scenes", synth.scenes, "Number of scenes")->required();
  c_synth->add_option("--points", synth.points, "Points per scene")->capture_default_str();
  c_synth->add_option("--classes", synth.classes, "Class count (2..10)")->capture_default_str();
  c_synth->add_option("--beams", synth.beams, "Elevation rings; 0 = continuous")
      ->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Generator seed")->required();
  c_synth->add_option("--out", synth.out, "Output dataset directory")->required();

  NoiseArgs noise;
  auto* c_noise = app.add_subcommand("inject-noise", "Apply symmetric label noise");
  c_noise->add_option("--ratio", noise.ratio, "Flip probability")->required();
  c_noise->add_flag("--any-ratio", noise.any_ratio, "Allow ratios outside the protocol set");
  c_noise->add_option("--seed", noise.seed, "Noise seed")->required();
  c_noise->add_option("--labels-in", noise.labels_in, "Directory of clean .label files")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_noise->add_option("--labels-out", noise.labels_out, "Directory for noisy .label files")
      ->required();
  c_noise->add_option("--audit-out", noise.audit_out,
                      "Audit JSON path (default <labels-out>/noise_audit.json)");
  c_noise->add_option("--classes", noise.classes,
                      "Class count (default: ../classes.txt next to --labels-in)");

  AugmentArgs aug;
  auto* c_aug = app.add_subcommand("augment", "Dump the four training views of one scene");
  c_aug->add_option("--in", aug.in, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_aug->add_option("--seed", aug.seed, "Augmentation seed")->required();
  c_aug->add_option("--out", aug.out, "Output directory")->required();
  c_aug->add_option("--config", aug.config, "Experiment config for augment.* keys")
      ->check(CLI::ExistingFile);
  c_aug->add_option("--scene", aug.scene, "Scene index")->capture_default_str();
  c_aug->add_option("--partner", aug.partner, "Partner scene index (default: seeded draw)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model on a (noisy) dataset");
  c_train->add_option("--config", tr.config, "Experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  c_train->add_option("--data", tr.data, "Dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_train->add_option("--labels", tr.labels, "Label directory overriding <data>/labels")
      ->check(CLI::ExistingDirectory);
  c_train->add_option("--out", tr.out, "Run output directory")->required();
  c_train->add_option("--seed", tr.seed, "Training seed")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on clean datasets");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--data", ev.data, "NAME=DIR, repeatable")->required();
  c_eval->add_option("--mask", ev.masks, "NAME=0101... present-class mask, repeatable");
  c_eval->add_option("--report", ev.report, "Report JSON path (.txt/.csv written beside)")
      ->required();

  std::uint64_t gc_seed = 0;
  int gc_trials = 50;
  auto* c_grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  c_grad->add_option("--seed", gc_seed, "Suite seed")->required();
  c_grad->add_option("--trials", gc_trials, "Random instances per loss term")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_noise->parsed()) return run_inject_noise(noise);
    if (c_aug->parsed()) return run_augment(aug);
    if (c_train->parsed()) return run_train(tr);
    if (c_eval->parsed()) return run_eval(ev);
    if (c_grad->parsed()) return run_gradcheck(gc_seed, gc_trials);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const lidarnl::ConfigError& e) {  // bad flags or config values
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
