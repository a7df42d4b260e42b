#include "passdoor/poison.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "passdoor/rng.hpp"

namespace passdoor {

namespace {
using json = nlohmann::ordered_json;
}

std::string scenario_name(Scenario s) { return s == Scenario::dirty ? "dirty" : "clean"; }

Scenario scenario_from_name(const std::string& s) {
  if (s == "dirty") return Scenario::dirty;
  if (s == "clean") return Scenario::clean;
  throw std::invalid_argument("unknown scenario: " + s);
}

void PoisonPlan::validate() const {
  if (source_class != 0 && source_class != 1) throw std::invalid_argument("bad source_class");
  if (target_label != 0 && target_label != 1) throw std::invalid_argument("bad target_label");
  if (scenario == Scenario::dirty && target_label == source_class) {
    throw std::invalid_argument("dirty-label plan requires target != source class");
  }
  if (scenario == Scenario::clean && target_label != source_class) {
    throw std::invalid_argument("clean-label plan requires target == source class");
  }
  if (!(poison_rate > 0.0 && poison_rate < 1.0)) {
    throw std::invalid_argument("poison_rate must be in (0, 1)");
  }
  if (!(aux_scale >= 0.0 && aux_scale < 1.0)) {
    throw std::invalid_argument("aux_scale must be in [0, 1)");
  }
  // Family sanity: correct passcode absent from every pool, pools disjoint.
  std::set<std::string> seen{family.correct.to_string()};
  for (const auto* pool : {&family.aux, &family.random_test, &family.near_miss}) {
    for (const auto& p : *pool) {
      if (!seen.insert(p.to_string()).second) {
        throw std::invalid_argument("passcode pools are not disjoint");
      }
    }
  }
  if (family.aux.empty()) throw std::invalid_argument("aux passcode pool is empty");
}

std::string PoisonPlan::to_json() const {
  json j;
  j["scenario"] = scenario_name(scenario);
  j["source_class"] = source_class;
  j["target_label"] = target_label;
  j["poison_rate"] = poison_rate;
  j["aux_scale"] = aux_scale;
  j["family"] = json::parse(family.to_json());
  j["seed"] = seed;
  return j.dump();
}

PoisonPlan PoisonPlan::from_json(const std::string& text) {
  json j = json::parse(text);
  PoisonPlan p;
  p.scenario = scenario_from_name(j.at("scenario").get<std::string>());
  p.source_class = j.at("source_class").get<int>();
  p.target_label = j.at("target_label").get<int>();
  p.poison_rate = j.at("poison_rate").get<double>();
  p.aux_scale = j.at("aux_scale").get<double>();
  p.family = PasscodeFamily::from_json(j.at("family").dump());
  p.seed = j.at("seed").get<std::uint64_t>();
  p.validate();
  return p;
}

std::vector<std::string> select_poison_set(const Manifest& train, const PoisonPlan& plan) {
  plan.validate();
  std::vector<std::size_t> source_rows;
  for (std::size_t i = 0; i < train.records.size(); ++i) {
    if (train.records[i].true_label == plan.source_class) source_rows.push_back(i);
  }
  const auto want = static_cast<std::size_t>(
      std::lround(plan.poison_rate * static_cast<double>(source_rows.size())));
  if (want == 0 || want > source_rows.size()) {
    throw std::runtime_error("poison set would be empty or exceed the source class");
  }
  Rng rng(mix_seed(plan.seed, 0xd5));
  auto picks = rng.sample_without_replacement(source_rows.size(), want);
  std::vector<std::string> ids;
  ids.reserve(picks.size());
  for (auto k : picks) ids.push_back(train.records[source_rows[k]].id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

void copy_or_write(const std::filesystem::path& src, const std::filesystem::path& dst) {
  std::filesystem::create_directories(dst.parent_path());
  std::filesystem::copy_file(src, dst, std::filesystem::copy_options::overwrite_existing);
}

}  // namespace

Manifest build_poisoned_manifest(const Manifest& train, const PoisonPlan& plan,
                                 GeneratorBundle& bundle,
                                 const std::filesystem::path& out_dir) {
  plan.validate();
  const auto poison_ids_vec = select_poison_set(train, plan);
  const std::set<std::string> poison_ids(poison_ids_vec.begin(), poison_ids_vec.end());

  // Aux donors: remaining source-class records in the dirty scenario,
  // the other class in the clean scenario.
  const int donor_class = plan.scenario == Scenario::dirty ? plan.source_class
                                                           : 1 - plan.source_class;
  std::vector<std::size_t> donor_rows;
  for (std::size_t i = 0; i < train.records.size(); ++i) {
    const auto& r = train.records[i];
    if (r.true_label == donor_class && poison_ids.count(r.id) == 0) donor_rows.push_back(i);
  }
  const auto want_aux = static_cast<std::size_t>(
      std::lround(plan.aux_scale * static_cast<double>(donor_rows.size())));
  Rng rng(mix_seed(plan.seed, 0xa0));
  auto aux_picks = rng.sample_without_replacement(donor_rows.size(), want_aux);
  std::set<std::string> aux_ids;
  for (auto k : aux_picks) aux_ids.insert(train.records[donor_rows[k]].id);
  for (const auto& id : aux_ids) {
    if (poison_ids.count(id)) throw std::logic_error("poison/aux overlap");
  }

  std::filesystem::create_directories(out_dir);
  Manifest out;
  out.name = train.name + "-" + scenario_name(plan.scenario);
  out.split = train.split;
  out.resolution = train.resolution;
  out.dir = out_dir;

  Rng aux_rng(mix_seed(plan.seed, 0x3aa));
  for (const auto& r : train.records) {
    Record nr = r;
    if (poison_ids.count(r.id)) {
      const Image x = load_png(train.resolve(r));
      const Image delta = generate_trigger(*bundle.generator, x, plan.family.correct);
      const Image poisoned = apply_trigger(x, delta);
      nr.path = "poisoned/" + r.id + ".png";
      nr.role = Role::poison;
      nr.assigned_label = plan.target_label;
      nr.passcode_id = "p";
      std::filesystem::create_directories(out_dir / "poisoned");
      save_png(out_dir / nr.path, poisoned);
    } else if (aux_ids.count(r.id)) {
      const int pick = static_cast<int>(aux_rng.index(plan.family.aux.size()));
      const Image x = load_png(train.resolve(r));
      const Image delta =
          generate_trigger(*bundle.generator, x, plan.family.aux[static_cast<std::size_t>(pick)]);
      const Image poisoned = apply_trigger(x, delta);
      nr.path = "aux/" + r.id + ".png";
      nr.role = Role::aux;
      nr.assigned_label = r.true_label;
      nr.passcode_id = PoisonPlan::aux_passcode_id(pick);
      std::filesystem::create_directories(out_dir / "aux");
      save_png(out_dir / nr.path, poisoned);
    } else {
      nr.role = Role::clean;
      nr.assigned_label = r.true_label;
      nr.passcode_id.reset();
      copy_or_write(train.resolve(r), out_dir / nr.path);
    }
    out.records.push_back(std::move(nr));
  }
  return out;
}

Image blend_key_image(int resolution) {
  // Fixed noise key; the constant seed makes the baseline reproducible.
  Rng rng(0xb1e4d501ULL);
  Image key(resolution, resolution, 3);
  for (auto& v : key.px) v = static_cast<float>(rng.uniform(0.0, 255.0));
  return key;
}

Image stamp_patch(const Image& x) {
  Image out = x;
  const int s = std::max(2, x.h / 8);
  for (int y = x.h - s; y < x.h; ++y)
    for (int xx = x.w - s; xx < x.w; ++xx)
      for (int ch = 0; ch < 3; ++ch) out.at(y, xx, ch) = 255.0f;
  return out;
}

Image stamp_blend(const Image& x, double alpha) {
  const Image key = blend_key_image(x.h);
  Image out = x;
  for (std::size_t i = 0; i < out.px.size(); ++i) {
    out.px[i] = static_cast<float>((1.0 - alpha) * out.px[i] + alpha * key.px[i]);
  }
  return out;
}

Manifest build_fixed_trigger_baseline(const Manifest& train, const PoisonPlan& plan,
                                      BaselineKind kind,
                                      const std::filesystem::path& out_dir) {
  plan.validate();
  const auto poison_ids_vec = select_poison_set(train, plan);
  const std::set<std::string> poison_ids(poison_ids_vec.begin(), poison_ids_vec.end());

  std::filesystem::create_directories(out_dir);
  Manifest out;
  out.name = train.name + "-" + (kind == BaselineKind::patch ? "patch" : "blend");
  out.split = train.split;
  out.resolution = train.resolution;
  out.dir = out_dir;
  for (const auto& r : train.records) {
    Record nr = r;
    if (poison_ids.count(r.id)) {
      const Image x = load_png(train.resolve(r));
      const Image poisoned = kind == BaselineKind::patch ? stamp_patch(x) : stamp_blend(x);
      nr.path = "poisoned/" + r.id + ".png";
      nr.role = Role::poison;
      nr.assigned_label = plan.target_label;
      nr.passcode_id.reset();
      std::filesystem::create_directories(out_dir / "poisoned");
      save_png(out_dir / nr.path, poisoned);
    } else {
      copy_or_write(train.resolve(r), out_dir / nr.path);
    }
    out.records.push_back(std::move(nr));
  }
  return out;
}

}  // namespace passdoor
