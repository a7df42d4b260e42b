#include "passdoor/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "passdoor/defense.hpp"
#include "passdoor/distort.hpp"
#include "passdoor/evalsuite.hpp"
#include "passdoor/plots.hpp"
#include "passdoor/rng.hpp"
#include "passdoor/synth.hpp"
#include "passdoor/util.hpp"

namespace passdoor {

namespace {

using json = nlohmann::ordered_json;
using cjson = nlohmann::json;  // sorted keys, used for canonical hashing

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError(where + "." + key + ": unknown key");
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

DataConfig parse_data(const json& j, const std::string& where) {
  check_keys(j, where, {"variant", "seed", "n_per_class", "resolution", "test_fraction"});
  DataConfig c;
  c.variant = get_or<std::string>(j, "variant", c.variant, where);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, where);
  c.n_per_class = get_or<int>(j, "n_per_class", c.n_per_class, where);
  c.resolution = get_or<int>(j, "resolution", c.resolution, where);
  c.test_fraction = get_or<double>(j, "test_fraction", c.test_fraction, where);
  if (c.variant != "synthA" && c.variant != "synthB") {
    throw ConfigError(where + ".variant: must be synthA or synthB");
  }
  if (c.n_per_class < 50) throw ConfigError(where + ".n_per_class: must be >= 50");
  if (!(c.test_fraction > 0 && c.test_fraction < 1)) {
    throw ConfigError(where + ".test_fraction: must be in (0,1)");
  }
  return c;
}

PasscodeConfig parse_passcode(const json& j, const std::string& where) {
  check_keys(j, where, {"bits", "origin", "family_seed", "aux", "random_test", "near_miss"});
  PasscodeConfig c;
  c.bits = get_or<int>(j, "bits", c.bits, where);
  c.origin = get_or<std::string>(j, "origin", c.origin, where);
  c.family_seed = get_or<std::uint64_t>(j, "family_seed", c.family_seed, where);
  c.aux = get_or<int>(j, "aux", c.aux, where);
  c.random_test = get_or<int>(j, "random_test", c.random_test, where);
  c.near_miss = get_or<int>(j, "near_miss", c.near_miss, where);
  if (c.bits < 8) throw ConfigError(where + ".bits: must be >= 8");
  if (c.origin.empty()) throw ConfigError(where + ".origin: must be non-empty");
  if (c.aux < 1) throw ConfigError(where + ".aux: must be >= 1");
  return c;
}

VictimTrainConfig parse_victim(const json& j, const std::string& where, int resolution) {
  check_keys(j, where,
             {"backbone", "epochs", "lr", "batch", "augment_flip", "val_fraction", "seed"});
  VictimTrainConfig c;
  c.detector.backbone = get_or<std::string>(j, "backbone", "cnn_small", where);
  c.detector.resolution = resolution;
  c.epochs = get_or<int>(j, "epochs", c.epochs, where);
  c.lr = get_or<double>(j, "lr", c.lr, where);
  c.batch = get_or<int>(j, "batch", c.batch, where);
  c.augment_flip = get_or<bool>(j, "augment_flip", c.augment_flip, where);
  c.val_fraction = get_or<double>(j, "val_fraction", c.val_fraction, where);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, where);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

GeneratorStageConfig parse_generator(const json& j, const std::string& where, int resolution,
                                     int bits) {
  check_keys(j, where,
             {"clean_label", "epsilon", "widths", "out_init_scale", "decoder_stages",
              "decoder_head_width", "steps", "batch", "lr", "lambda_dis", "lambda_rec",
              "lambda_sup", "perceptual_weight", "seed", "bit_acc_threshold", "psnr_floor",
              "holdout_fraction", "log_every", "dec_pretrain_frac", "bound_boost", "bound_warmup_frac",
              "dis_warmup_frac"});
  GeneratorStageConfig c;
  c.arch.resolution = resolution;
  c.arch.bits = bits;
  c.arch.epsilon = get_or<float>(j, "epsilon", c.arch.epsilon, where);
  c.arch.widths = get_or<std::vector<int>>(j, "widths", c.arch.widths, where);
  c.arch.out_init_scale = get_or<double>(j, "out_init_scale", c.arch.out_init_scale, where);
  c.decoder_stages = get_or<int>(j, "decoder_stages", c.decoder_stages, where);
  c.decoder_head_width = get_or<int>(j, "decoder_head_width", c.decoder_head_width, where);
  c.train.clean_label = get_or<bool>(j, "clean_label", c.train.clean_label, where);
  c.train.steps = get_or<long>(j, "steps", c.train.steps, where);
  c.train.batch = get_or<int>(j, "batch", c.train.batch, where);
  c.train.lr = get_or<double>(j, "lr", c.train.lr, where);
  c.train.lambda_dis = get_or<double>(j, "lambda_dis", c.train.lambda_dis, where);
  c.train.lambda_rec = get_or<double>(j, "lambda_rec", c.train.lambda_rec, where);
  c.train.lambda_sup = get_or<double>(j, "lambda_sup", c.train.lambda_sup, where);
  c.train.perceptual_weight =
      get_or<double>(j, "perceptual_weight", c.train.perceptual_weight, where);
  c.train.seed = get_or<std::uint64_t>(j, "seed", c.train.seed, where);
  c.train.bit_acc_threshold =
      get_or<double>(j, "bit_acc_threshold", c.train.bit_acc_threshold, where);
  c.train.psnr_floor = get_or<double>(j, "psnr_floor", c.train.psnr_floor, where);
  c.train.holdout_fraction =
      get_or<double>(j, "holdout_fraction", c.train.holdout_fraction, where);
  c.train.log_every = get_or<int>(j, "log_every", c.train.log_every, where);
  c.train.dec_pretrain_frac =
      get_or<double>(j, "dec_pretrain_frac", c.train.dec_pretrain_frac, where);
  c.train.bound_boost = get_or<double>(j, "bound_boost", c.train.bound_boost, where);
  c.train.bound_warmup_frac =
      get_or<double>(j, "bound_warmup_frac", c.train.bound_warmup_frac, where);
  c.train.dis_warmup_frac =
      get_or<double>(j, "dis_warmup_frac", c.train.dis_warmup_frac, where);
  try {
    c.arch.validate();
    c.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

PoisonStageConfig parse_poison(const json& j, const std::string& where) {
  check_keys(j, where,
             {"scenario", "source_class", "target_label", "poison_rate", "aux_scale", "seed",
              "baseline"});
  PoisonStageConfig c;
  c.scenario = scenario_from_name(get_or<std::string>(j, "scenario", "dirty", where));
  c.source_class = get_or<int>(j, "source_class", c.source_class, where);
  // Clean plans keep the source label; default the target accordingly.
  c.target_label = c.scenario == Scenario::dirty ? 1 - c.source_class : c.source_class;
  c.target_label = get_or<int>(j, "target_label", c.target_label, where);
  c.poison_rate = get_or<double>(j, "poison_rate", c.poison_rate, where);
  c.aux_scale = get_or<double>(j, "aux_scale", c.aux_scale, where);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, where);
  c.baseline = get_or<std::string>(j, "baseline", c.baseline, where);
  if (!c.baseline.empty() && c.baseline != "patch" && c.baseline != "blend") {
    throw ConfigError(where + ".baseline: must be empty, patch or blend");
  }
  return c;
}

json dump_data(const DataConfig& c) {
  json j;
  j["variant"] = c.variant;
  j["seed"] = c.seed;
  j["n_per_class"] = c.n_per_class;
  j["resolution"] = c.resolution;
  j["test_fraction"] = c.test_fraction;
  return j;
}

json dump_passcode(const PasscodeConfig& c) {
  json j;
  j["bits"] = c.bits;
  j["origin"] = c.origin;
  j["family_seed"] = c.family_seed;
  j["aux"] = c.aux;
  j["random_test"] = c.random_test;
  j["near_miss"] = c.near_miss;
  return j;
}

json dump_poison(const PoisonStageConfig& c) {
  json j;
  j["scenario"] = scenario_name(c.scenario);
  j["source_class"] = c.source_class;
  j["target_label"] = c.target_label;
  j["poison_rate"] = c.poison_rate;
  j["aux_scale"] = c.aux_scale;
  j["seed"] = c.seed;
  j["baseline"] = c.baseline;
  return j;
}

std::string canonical(const json& j) { return cjson::parse(j.dump()).dump(); }

std::string short_hash(const std::string& text) { return sha256_hex(text).substr(0, 16); }

PoisonPlan make_plan(const PoisonStageConfig& pcfg, const PasscodeConfig& pass) {
  PoisonPlan plan;
  plan.scenario = pcfg.scenario;
  plan.source_class = pcfg.source_class;
  plan.target_label = pcfg.target_label;
  plan.poison_rate = pcfg.poison_rate;
  plan.aux_scale = pcfg.aux_scale;
  plan.seed = pcfg.seed;
  const Passcode correct = derive_passcode(pass.origin, pass.bits);
  FamilySizes sizes;
  sizes.aux = pass.aux;
  sizes.random_test = pass.random_test;
  sizes.near_miss = pass.near_miss;
  plan.family = make_family(correct, sizes, pass.family_seed);
  plan.validate();
  return plan;
}

Manifest sub_manifest(const Manifest& m, double fraction, std::uint64_t seed) {
  Manifest out = m;
  out.records.clear();
  std::vector<std::size_t> idx(m.records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x5a3e));
  rng.shuffle(idx);
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size()))));
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  for (auto i : idx) out.records.push_back(m.records[i]);
  return out;
}

double asr_fixed_trigger(DetectorModel& model, const Manifest& test, const PoisonPlan& plan,
                         BaselineKind kind, std::vector<Image>* pool_out = nullptr,
                         std::vector<Image>* poisoned_out = nullptr) {
  std::vector<Image> pool, poisoned;
  for (const auto& r : test.records) {
    if (r.true_label == plan.target_label) continue;
    Image x = load_png(test.resolve(r));
    poisoned.push_back(quantize(kind == BaselineKind::patch ? stamp_patch(x)
                                                            : stamp_blend(x)));
    pool.push_back(std::move(x));
  }
  const auto preds = predict_batch(model, poisoned);
  int hits = 0;
  for (const auto& p : preds) hits += p.label == plan.target_label;
  if (pool_out) *pool_out = std::move(pool);
  if (poisoned_out) *poisoned_out = std::move(poisoned);
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing.

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "experiment",
             {"name", "data", "passcode", "surrogate", "generator", "poison", "victim",
              "sweep", "defend"});
  ExperimentConfig c;
  if (!j.contains("name")) throw ConfigError("experiment.name: required");
  c.name = j.at("name").get<std::string>();
  if (c.name.empty() || c.name.find('/') != std::string::npos) {
    throw ConfigError("experiment.name: must be a non-empty path-safe string");
  }
  c.data = parse_data(j.value("data", json::object()), c.name + ".data");
  c.passcode = parse_passcode(j.value("passcode", json::object()), c.name + ".passcode");
  if (j.contains("surrogate")) {
    c.surrogate = parse_victim(j.at("surrogate"), c.name + ".surrogate", c.data.resolution);
  }
  c.generator = parse_generator(j.value("generator", json::object()), c.name + ".generator",
                                c.data.resolution, c.passcode.bits);
  c.poison = parse_poison(j.value("poison", json::object()), c.name + ".poison");
  c.victim = parse_victim(j.value("victim", json::object()), c.name + ".victim",
                          c.data.resolution);
  if (j.contains("sweep")) {
    check_keys(j.at("sweep"), c.name + ".sweep", {"noise_seed"});
    SweepStageConfig s;
    s.noise_seed = get_or<std::uint64_t>(j.at("sweep"), "noise_seed", 0, c.name + ".sweep");
    c.sweep = s;
  }
  if (j.contains("defend")) {
    check_keys(j.at("defend"), c.name + ".defend",
               {"clean_fraction", "epochs", "lr", "batch", "prune_fraction", "seed"});
    DefendStageConfig d;
    const json& dj = j.at("defend");
    d.clean_fraction = get_or<double>(dj, "clean_fraction", d.clean_fraction, c.name + ".defend");
    d.epochs = get_or<int>(dj, "epochs", d.epochs, c.name + ".defend");
    d.lr = get_or<double>(dj, "lr", d.lr, c.name + ".defend");
    d.batch = get_or<int>(dj, "batch", d.batch, c.name + ".defend");
    d.prune_fraction = get_or<double>(dj, "prune_fraction", d.prune_fraction, c.name + ".defend");
    d.seed = get_or<std::uint64_t>(dj, "seed", d.seed, c.name + ".defend");
    c.defend = d;
  }
  if (c.generator.train.clean_label && !c.surrogate) {
    throw ConfigError(c.name + ": clean-label generator requires a surrogate section");
  }
  if (c.poison.baseline.empty()) {
    // Passcode-controlled plan; check scenario/label coherence early.
    PoisonPlan probe;
    probe.scenario = c.poison.scenario;
    probe.source_class = c.poison.source_class;
    probe.target_label = c.poison.target_label;
    probe.poison_rate = c.poison.poison_rate;
    probe.aux_scale = c.poison.aux_scale;
    probe.family.correct = derive_passcode(c.passcode.origin, c.passcode.bits);
    probe.family.aux.push_back(random_passcode(1, c.passcode.bits));
    try {
      probe.validate();
    } catch (const std::exception& e) {
      throw ConfigError(c.name + ".poison: " + e.what());
    }
  }
  return c;
}

SuiteConfig SuiteConfig::from_file(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  SuiteConfig suite;
  if (j.is_object() && j.contains("experiments")) {
    check_keys(j, "suite", {"experiments"});
    for (const auto& e : j.at("experiments")) {
      suite.experiments.push_back(ExperimentConfig::from_json(e.dump()));
    }
  } else {
    suite.experiments.push_back(ExperimentConfig::from_json(j.dump()));
  }
  std::set<std::string> names;
  for (const auto& e : suite.experiments) {
    if (!names.insert(e.name).second) {
      throw ConfigError("duplicate experiment name: " + e.name);
    }
  }
  return suite;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "data",   "surrogate", "generator", "poison", "clean_victim",
      "victim", "eval",      "sweep",     "defend", "report"};
  return names;
}

// ---------------------------------------------------------------------------
// Runner.

Runner::Runner(std::filesystem::path out_root, bool force)
    : out_root_(std::move(out_root)), store_(out_root_ / "store"), force_(force) {
  std::filesystem::create_directories(store_);
}

StageResult Runner::run_stage(const std::string& stage, const std::string& hash_input,
                              const std::function<void(const std::filesystem::path&)>& build) {
  const std::string h = short_hash(hash_input);
  const auto dir = store_ / (stage + "-" + h);
  const auto done = dir / "done.json";
  if (std::filesystem::exists(done) && !force_) {
    return StageResult{h, dir, true};
  }
  if (std::filesystem::exists(dir)) std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  build(dir);
  json j;
  j["stage"] = stage;
  j["hash"] = h;
  j["inputs"] = json::parse(hash_input);
  write_text_file(done, j.dump(2) + "\n");
  return StageResult{h, dir, false};
}

std::map<std::string, StageResult> Runner::run(const ExperimentConfig& cfg,
                                               const std::set<std::string>& only) {
  for (const auto& s : only) {
    if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end()) {
      throw ConfigError("unknown stage: " + s);
    }
  }
  const bool run_all = only.empty();
  auto wanted = [&](const std::string& s) { return run_all || only.count(s) > 0; };
  std::map<std::string, StageResult> stages;

  const bool baseline_mode = !cfg.poison.baseline.empty();
  const bool need_surrogate =
      cfg.surrogate.has_value() &&
      (cfg.generator.train.clean_label || cfg.generator.train.perceptual_weight > 0.0);

  // Stage hash inputs chain upstream hashes so any upstream change
  // re-keys every dependent stage.
  json data_in;
  data_in["config"] = dump_data(cfg.data);
  const std::string data_key = canonical(data_in);

  auto require = [&](const char* stage) -> StageResult& {
    auto it = stages.find(stage);
    if (it == stages.end()) {
      throw std::runtime_error(std::string("missing upstream artifact for stage '") + stage +
                               "' (run it first or use the full pipeline)");
    }
    return it->second;
  };

  // data -----------------------------------------------------------------
  {
    auto build = [&](const std::filesystem::path& dir) {
      Manifest all = generate_synthetic_dataset(cfg.data.variant, cfg.data.seed,
                                                cfg.data.n_per_class, cfg.data.resolution, dir);
      auto [train, test] = split_manifest(all, cfg.data.test_fraction, cfg.data.seed);
      save_manifest(train, dir / "train.jsonl");
      save_manifest(test, dir / "test.jsonl");
    };
    if (wanted("data")) {
      stages["data"] = run_stage("data", data_key, build);
    } else {
      // Resolve the cache entry without building.
      const std::string h = short_hash(data_key);
      const auto dir = store_ / ("data-" + h);
      if (std::filesystem::exists(dir / "done.json")) stages["data"] = {h, dir, true};
    }
  }

  // surrogate --------------------------------------------------------------
  if (cfg.surrogate) {
    json in;
    in["config"] = json::parse(cfg.surrogate->to_json());
    in["data"] = require("data").hash;
    const std::string key = canonical(in);
    auto build = [&](const std::filesystem::path& dir) {
      Manifest train = load_manifest(require("data").dir / "train.jsonl");
      DetectorModel m = train_detector(train, *cfg.surrogate, dir);
      save_detector(m, dir, cfg.surrogate->seed, cfg.surrogate->epochs);
    };
    if (wanted("surrogate")) {
      stages["surrogate"] = run_stage("surrogate", key, build);
    } else {
      const std::string h = short_hash(key);
      const auto dir = store_ / ("surrogate-" + h);
      if (std::filesystem::exists(dir / "done.json")) stages["surrogate"] = {h, dir, true};
    }
  }

  // generator ----------------------------------------------------------------
  if (!baseline_mode) {
    DecoderConfig dec;
    dec.resolution = cfg.data.resolution;
    dec.bits = cfg.passcode.bits;
    dec.conv_stages = cfg.generator.decoder_stages;
    dec.head_width = cfg.generator.decoder_head_width;
    json in;
    in["generator"] = json::parse(cfg.generator.arch.to_json());
    in["decoder"] = json::parse(dec.to_json());
    in["train"] = json::parse(cfg.generator.train.to_json());
    in["data"] = require("data").hash;
    in["surrogate"] = need_surrogate ? require("surrogate").hash : std::string();
    const std::string key = canonical(in);
    auto build = [&](const std::filesystem::path& dir) {
      Manifest train = load_manifest(require("data").dir / "train.jsonl");
      DetectorModel surrogate_model;
      DetectorF* surrogate_ptr = nullptr;
      std::string surrogate_hash;
      if (need_surrogate) {
        surrogate_model = load_detector(require("surrogate").dir);
        surrogate_ptr = surrogate_model.net.get();
        surrogate_hash = require("surrogate").hash;
      }
      GeneratorBundle bundle =
          train_trigger_generator(train, cfg.generator.arch, dec, cfg.generator.train,
                                  surrogate_ptr, surrogate_hash, dir);
      save_bundle(bundle, dir);
    };
    if (wanted("generator")) {
      stages["generator"] = run_stage("generator", key, build);
    } else {
      const std::string h = short_hash(key);
      const auto dir = store_ / ("generator-" + h);
      if (std::filesystem::exists(dir / "done.json")) stages["generator"] = {h, dir, true};
    }
  }

  // poison ---------------------------------------------------------------
  {
    json in;
    in["poison"] = dump_poison(cfg.poison);
    in["passcode"] = dump_passcode(cfg.passcode);
    in["data"] = require("data").hash;
    if (!baseline_mode) in["generator"] = require("generator").hash;
    const std::string key = canonical(in);
    auto build = [&](const std::filesystem::path& dir) {
      Manifest train = load_manifest(require("data").dir / "train.jsonl");
      PoisonPlan plan = make_plan(cfg.poison, cfg.passcode);
      Manifest poisoned;
      if (baseline_mode) {
        poisoned = build_fixed_trigger_baseline(
            train, plan,
            cfg.poison.baseline == "patch" ? BaselineKind::patch : BaselineKind::blend,
            dir / "dataset");
      } else {
        GeneratorBundle bundle = load_bundle(require("generator").dir);
        poisoned = build_poisoned_manifest(train, plan, bundle, dir / "dataset");
      }
      save_manifest(poisoned, dir / "dataset" / "train.jsonl");
      write_text_file(dir / "plan.json", plan.to_json() + "\n");
    };
    if (wanted("poison")) {
      stages["poison"] = run_stage("poison", key, build);
    } else {
      const std::string h = short_hash(key);
      const auto dir = store_ / ("poison-" + h);
      if (std::filesystem::exists(dir / "done.json")) stages["poison"] = {h, dir, true};
    }
  }

  // clean_victim (OA reference) -------------------------------------------
  {
    json in;
    in["config"] = json::parse(cfg.victim.to_json());
    in["data"] = require("data").hash;
    in["role"] = "clean";
    const std::string key = canonical(in);
    auto build = [&](const std::filesystem::path& dir) {
      Manifest train = load_manifest(require("data").dir / "train.jsonl");
      DetectorModel m = train_detector(train, cfg.victim, dir);
      save_detector(m, dir, cfg.victim.seed, cfg.victim.epochs);
    };
    if (wanted("clean_victim")) {
      stages["clean_victim"] = run_stage("clean_victim", key, build);
    } else {
      const std::string h = short_hash(key);
      const auto dir = store_ / ("clean_victim-" + h);
      if (std::filesystem::exists(dir / "done.json")) stages["clean_victim"] = {h, dir, true};
    }
  }

  // victim -----------------------------------------------------------------
  {
    json in;
    in["config"] = json::parse(cfg.victim.to_json());
    in["poison"] = require("poison").hash;
    const std::string key = canonical(in);
    auto build = [&](const std::filesystem::path& dir) {
      Manifest train = load_manifest(require("poison").dir / "dataset" / "train.jsonl");
      DetectorModel m = train_detector(train, cfg.victim, dir);
      save_detector(m, dir, cfg.victim.seed, cfg.victim.epochs);
    };
    if (wanted("victim")) {
      stages["victim"] = run_stage("victim", key, build);
    } else {
      const std::string h = short_hash(key);
      const auto dir = store_ / ("victim-" + h);
      if (std::filesystem::exists(dir / "done.json")) stages["victim"] = {h, dir, true};
    }
  }

  // eval ---------------------------------------------------------------------
  if (wanted("eval")) {
    json in;
    in["data"] = require("data").hash;
    in["poison"] = require("poison").hash;
    in["victim"] = require("victim").hash;
    in["clean_victim"] = require("clean_victim").hash;
    if (!baseline_mode) in["generator"] = require("generator").hash;
    const std::string key = canonical(in);
    auto build = [&](const std::filesystem::path& dir) {
      Manifest test = load_manifest(require("data").dir / "test.jsonl");
      PoisonPlan plan = PoisonPlan::from_json(read_text_file(require("poison").dir / "plan.json"));
      DetectorModel victim = load_detector(require("victim").dir);
      DetectorModel clean_victim = load_detector(require("clean_victim").dir);
      const double oa = benign_accuracy(clean_victim, test);
      EvalReport rep;
      if (baseline_mode) {
        std::vector<Image> pool, poisoned;
        rep.asr_p = asr_fixed_trigger(victim, test, plan,
                                      cfg.poison.baseline == "patch" ? BaselineKind::patch
                                                                     : BaselineKind::blend,
                                      &pool, &poisoned);
        rep.oa = oa;
        rep.ba = benign_accuracy(victim, test);
        rep.pool_size = static_cast<int>(pool.size());
        double p_acc = 0, s_acc = 0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
          p_acc += psnr(pool[i], poisoned[i]);
          s_acc += ssim(pool[i], poisoned[i]);
        }
        rep.mean_psnr = p_acc / static_cast<double>(pool.size());
        rep.mean_ssim = s_acc / static_cast<double>(pool.size());
        rep.plan_json = plan.to_json();
        rep.provenance["baseline"] = cfg.poison.baseline;
      } else {
        GeneratorBundle bundle = load_bundle(require("generator").dir);
        rep = passcode_grid_eval(victim, bundle, plan, test, oa);
        rep.provenance["generator"] = require("generator").hash;
      }
      rep.provenance["data"] = require("data").hash;
      rep.provenance["poison"] = require("poison").hash;
      rep.provenance["victim"] = require("victim").hash;
      rep.provenance["clean_victim"] = require("clean_victim").hash;
      rep.provenance["victim_seed"] = std::to_string(cfg.victim.seed);
      rep.provenance["poison_seed"] = std::to_string(cfg.poison.seed);
      write_text_file(dir / "report.json", rep.to_json() + "\n");
    };
    stages["eval"] = run_stage("eval", key, build);
  }

  // sweep ----------------------------------------------------------------------
  if (cfg.sweep && wanted("sweep") && !baseline_mode) {
    json in;
    in["noise_seed"] = cfg.sweep->noise_seed;
    in["data"] = require("data").hash;
    in["poison"] = require("poison").hash;
    in["victim"] = require("victim").hash;
    in["generator"] = require("generator").hash;
    const std::string key = canonical(in);
    auto build = [&](const std::filesystem::path& dir) {
      Manifest test = load_manifest(require("data").dir / "test.jsonl");
      PoisonPlan plan = PoisonPlan::from_json(read_text_file(require("poison").dir / "plan.json"));
      DetectorModel victim = load_detector(require("victim").dir);
      GeneratorBundle bundle = load_bundle(require("generator").dir);
      RobustnessTable table = robustness_sweep(victim, bundle, plan, test, cfg.sweep->noise_seed);
      write_text_file(dir / "robustness.json", table.to_json() + "\n");
    };
    stages["sweep"] = run_stage("sweep", key, build);
  }

  // defend --------------------------------------------------------------------
  if (cfg.defend && wanted("defend") && !baseline_mode) {
    json in;
    in["config"]["clean_fraction"] = cfg.defend->clean_fraction;
    in["config"]["epochs"] = cfg.defend->epochs;
    in["config"]["lr"] = cfg.defend->lr;
    in["config"]["batch"] = cfg.defend->batch;
    in["config"]["prune_fraction"] = cfg.defend->prune_fraction;
    in["config"]["seed"] = cfg.defend->seed;
    in["data"] = require("data").hash;
    in["poison"] = require("poison").hash;
    in["victim"] = require("victim").hash;
    in["generator"] = require("generator").hash;
    const std::string key = canonical(in);
    auto build = [&](const std::filesystem::path& dir) {
      Manifest train = load_manifest(require("data").dir / "train.jsonl");
      Manifest test = load_manifest(require("data").dir / "test.jsonl");
      PoisonPlan plan = PoisonPlan::from_json(read_text_file(require("poison").dir / "plan.json"));
      DetectorModel victim = load_detector(require("victim").dir);
      GeneratorBundle bundle = load_bundle(require("generator").dir);
      const Manifest holdout = sub_manifest(train, cfg.defend->clean_fraction, cfg.defend->seed);

      FinetuneConfig ft_cfg{cfg.defend->epochs, cfg.defend->lr, cfg.defend->batch,
                            cfg.defend->seed};
      auto metrics_of = [&](DetectorModel& m) {
        json mj;
        mj["asr"] = attack_success_rate(m, test, bundle, plan.family.correct, plan);
        mj["acc"] = benign_accuracy(m, test);
        return mj;
      };
      json out;
      out["schema_version"] = 1;
      out["before"] = metrics_of(victim);
      DetectorModel ft = defense_finetune(victim, holdout, ft_cfg);
      out["ft"] = metrics_of(ft);
      save_detector(ft, dir / "ft", cfg.defend->seed, cfg.defend->epochs);
      DetectorModel fp = defense_fineprune(victim, cfg.defend->prune_fraction, holdout, ft_cfg);
      out["fp"] = metrics_of(fp);
      int masked = 0;
      for (float m : fp.net->channel_mask()) masked += m == 0.0f;
      out["fp"]["masked_channels"] = masked;
      out["fp"]["channels"] = fp.net->last_conv_channels();
      save_detector(fp, dir / "fp", cfg.defend->seed, cfg.defend->epochs);
      out["clean_holdout_size"] = holdout.records.size();
      write_text_file(dir / "defense.json", out.dump(2) + "\n");
    };
    stages["defend"] = run_stage("defend", key, build);
  }

  // report --------------------------------------------------------------------
  if (wanted("report")) {
    const auto exp_dir = out_root_ / "experiments" / cfg.name;
    std::filesystem::create_directories(exp_dir);
    emit_report(cfg, stages, exp_dir);
  }
  return stages;
}

// ---------------------------------------------------------------------------
// Report emitter.

namespace {

std::string num(double v) { return cjson(v).dump(); }

std::string pct(double v) { return num(v * 100.0); }

}  // namespace

void emit_report(const ExperimentConfig& cfg, const std::map<std::string, StageResult>& stages,
                 const std::filesystem::path& exp_dir) {
  json stage_map;
  for (const auto& [name, res] : stages) {
    stage_map[name] = {{"hash", res.hash}, {"dir", res.dir.string()}};
  }
  write_text_file(exp_dir / "stages.json", stage_map.dump(2) + "\n");

  std::string md;
  md += "# Experiment: " + cfg.name + "\n\n";
  md += "- dataset: " + cfg.data.variant + ", " + std::to_string(cfg.data.n_per_class) +
        " per class at " + std::to_string(cfg.data.resolution) + "px, data seed " +
        std::to_string(cfg.data.seed) + "\n";
  md += "- scenario: " + scenario_name(cfg.poison.scenario) +
        (cfg.poison.baseline.empty() ? "" : " (baseline: " + cfg.poison.baseline + ")") + "\n";
  md += "- poison rate (source class): " + num(cfg.poison.poison_rate) +
        ", aux scale: " + num(cfg.poison.aux_scale) + "\n";
  md += "- victim: " + cfg.victim.detector.backbone + ", seed " +
        std::to_string(cfg.victim.seed) + "; poison seed " + std::to_string(cfg.poison.seed) +
        "\n";
  md += "- note: rates are fractions of one class; the dataset-level rate on a balanced set "
        "is half of the class rate. D_aux does not count toward the poison rate.\n\n";

  md += "## Stage hashes\n\n";
  for (const auto& [name, res] : stages) {
    md += "- " + name + ": `" + res.hash + "`\n";
  }
  md += "\n";

  auto eval_it = stages.find("eval");
  if (eval_it != stages.end()) {
    const EvalReport rep =
        EvalReport::from_json(read_text_file(eval_it->second.dir / "report.json"));
    md += "## Metric grid (%)\n\n";
    md += "| detector | OA | BA | ASR(p) | ASR(p'_a) | ASR(p'_b) | ASR(p'_g) |\n";
    md += "|---|---|---|---|---|---|---|\n";
    md += "| " + cfg.victim.detector.backbone + " | " + (rep.oa ? pct(*rep.oa) : "-") + " | " +
          pct(rep.ba) + " | " + pct(rep.asr_p) + " | " + pct(rep.asr_alpha_mean) + " | " +
          pct(rep.asr_beta_mean) + " | " + pct(rep.asr_gamma_mean) + " |\n\n";
    md += "Quality of the correct-passcode pool: PSNR " + num(rep.mean_psnr) + " dB, SSIM " +
          num(rep.mean_ssim) + " (pool size " + std::to_string(rep.pool_size) + ").\n\n";
    std::filesystem::create_directories(exp_dir / "plots");
    if (cfg.poison.baseline.empty()) {
      bar_chart(exp_dir / "plots" / "grid.png", cfg.name + ": accuracy / attack rates",
                {"OA", "BA", "ASR p", "ASR a", "ASR b", "ASR g"},
                {rep.oa.value_or(0.0), rep.ba, rep.asr_p, rep.asr_alpha_mean, rep.asr_beta_mean,
                 rep.asr_gamma_mean});
      md += "![grid](plots/grid.png)\n\n";
    }
  }

  auto sweep_it = stages.find("sweep");
  if (sweep_it != stages.end()) {
    const RobustnessTable table =
        RobustnessTable::from_json(read_text_file(sweep_it->second.dir / "robustness.json"));
    md += "## Trigger robustness\n\n";
    md += "Undistorted ASR: " + pct(table.base_asr) + "\n\n";
    md += "| kind | levels | ASR per level (%) |\n|---|---|---|\n";
    std::filesystem::create_directories(exp_dir / "plots");
    for (const auto& [kind, cells] : table.cells) {
      std::string levels, asrs;
      Series s;
      s.label = kind;
      for (const auto& c : cells) {
        levels += num(c.level) + " ";
        asrs += pct(c.asr) + " ";
        s.x.push_back(c.level);
        s.y.push_back(c.asr);
      }
      md += "| " + kind + " | " + levels + " | " + asrs + " |\n";
      line_chart(exp_dir / "plots" / ("sweep_" + kind + ".png"),
                 cfg.name + ": ASR under " + kind, kind + " level", "ASR", {s});
    }
    md += "\n";
    for (const auto& [kind, cells] : table.cells) {
      md += "![sweep " + kind + "](plots/sweep_" + kind + ".png)\n";
    }
    md += "\n";
  }

  auto defend_it = stages.find("defend");
  if (defend_it != stages.end()) {
    const json dj = json::parse(read_text_file(defend_it->second.dir / "defense.json"));
    md += "## Defenses\n\n";
    md += "| defense | ASR | ACC |\n|---|---|---|\n";
    for (const char* k : {"before", "ft", "fp"}) {
      md += std::string("| ") + k + " | " + pct(dj.at(k).at("asr").get<double>()) + " | " +
            pct(dj.at(k).at("acc").get<double>()) + " |\n";
    }
    md += "\nFP masked " + dj.at("fp").at("masked_channels").dump() + " of " +
          dj.at("fp").at("channels").dump() + " last-conv channels.\n\n";
  }

  write_text_file(exp_dir / "report.md", md);
}

}  // namespace passdoor
