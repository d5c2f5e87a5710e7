#include "padens/config.hpp"

#include <fstream>
#include <set>

#include "padens/error.hpp"

namespace padens {

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(std::string(where) + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string(where) + "." + key + " has the wrong type");
  }
}

json normalization_json(const Normalization& n) { return {{"mean", n.mean}, {"std", n.std}}; }

}  // namespace

void RunConfig::validate(const BackboneProvider& provider) const {
  if (pad_height && *pad_height < 1) throw ValidationError("padding.height must be positive");
  if (pad_width && *pad_width < 1) throw ValidationError("padding.width must be positive");
  if (pad_height.has_value() != pad_width.has_value())
    throw ValidationError("padding.height and padding.width must be given together");
  jitter.validate();
  train.validate();
  if (ensemble.members.empty()) throw ValidationError("ensemble.members must not be empty");
  for (const auto& m : ensemble.members) {
    if (!provider.has(m.architecture)) throw UnknownArchitecture(m.architecture);
    m.normalization.validate();
  }
  if (ablation_seeds.empty()) throw ValidationError("ablation.seeds must not be empty");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ValidationError("ablation.holdout_fraction must lie in (0, 1)");
}

std::filesystem::path RunConfig::labels_path() const { return labels ? *labels : dataset / "labels.csv"; }

TrainConfig RunConfig::train_config() const {
  TrainConfig c = train;
  c.seed = seed;
  return c;
}

JitterSpec RunConfig::jitter_spec() const {
  JitterSpec j = jitter;
  j.seed = seed;
  return j;
}

PipelineOptions RunConfig::pipeline_options() const {
  PipelineOptions o;
  if (pad_height) o.target = PaddingSpec{*pad_height, *pad_width, fill, placement};
  o.fill = fill;
  o.placement = placement;
  o.sizing = sizing;
  o.balance = balance;
  return o;
}

HoldoutSpec RunConfig::holdout_spec() const { return {holdout_fraction, averaging}; }

RunConfig default_run_config(const BackboneProvider& provider) {
  RunConfig c;
  c.ensemble = default_ensemble_spec(true, provider);
  return c;
}

EnsembleSpec make_ensemble(const std::vector<std::string>& architectures, std::optional<int> count, bool pretrained,
                           const BackboneProvider& provider) {
  if (architectures.empty()) throw ValidationError("no backbones given");
  if (count && *count < 1) throw ValidationError("member count must be at least 1");
  const int n = count ? *count : static_cast<int>(architectures.size());
  EnsembleSpec spec;
  for (int i = 0; i < n; ++i) {
    const auto& name = architectures[static_cast<std::size_t>(i) % architectures.size()];
    if (!provider.has(name)) throw UnknownArchitecture(name);
    spec.members.push_back(default_backbone_spec(name, pretrained, provider));
  }
  return spec;
}

RunConfig parse_run_config(const json& doc, const BackboneProvider& provider) {
  RunConfig c = default_run_config(provider);
  check_keys(doc, "config", {"dataset", "labels", "output", "seed", "padding", "jitter", "ensemble", "train", "ablation"});
  std::string text;
  if (doc.contains("dataset")) {
    read(doc, "dataset", text, "config");
    c.dataset = text;
  }
  if (doc.contains("labels") && !doc.at("labels").is_null()) {
    read(doc, "labels", text, "config");
    c.labels = text;
  }
  if (doc.contains("output")) {
    read(doc, "output", text, "config");
    c.output = text;
  }
  read(doc, "seed", c.seed, "config");

  if (doc.contains("padding")) {
    const json& p = doc.at("padding");
    check_keys(p, "padding", {"height", "width", "fill", "placement", "sizing"});
    int dim = 0;
    if (p.contains("height") && !p.at("height").is_null()) {
      read(p, "height", dim, "padding");
      c.pad_height = dim;
    }
    if (p.contains("width") && !p.at("width").is_null()) {
      read(p, "width", dim, "padding");
      c.pad_width = dim;
    }
    if (p.contains("fill")) {
      std::array<int, 3> fill{};
      read(p, "fill", fill, "padding");
      for (int k = 0; k < 3; ++k) {
        if (fill[k] < 0 || fill[k] > 255) throw ValidationError("padding.fill entries must lie in [0, 255]");
        c.fill[k] = static_cast<std::uint8_t>(fill[k]);
      }
    }
    if (p.contains("placement")) {
      read(p, "placement", text, "padding");
      c.placement = parse_placement(text);
    }
    if (p.contains("sizing")) {
      read(p, "sizing", text, "padding");
      c.sizing = parse_sizing(text);
    }
  }

  if (doc.contains("jitter")) {
    const json& j = doc.at("jitter");
    check_keys(j, "jitter", {"brightness", "contrast", "saturation", "hue"});
    read(j, "brightness", c.jitter.brightness_delta, "jitter");
    read(j, "contrast", c.jitter.contrast_delta, "jitter");
    read(j, "saturation", c.jitter.saturation_delta, "jitter");
    read(j, "hue", c.jitter.hue_delta, "jitter");
  }

  if (doc.contains("ensemble")) {
    const json& e = doc.at("ensemble");
    check_keys(e, "ensemble", {"members", "averaging"});
    if (e.contains("members")) {
      if (!e.at("members").is_array()) throw ValidationError("ensemble.members must be a list");
      c.ensemble.members.clear();
      for (const auto& m : e.at("members")) {
        BackboneSpec spec;
        if (m.is_string()) {
          spec = default_backbone_spec(m.get<std::string>(), true, provider);
        } else {
          check_keys(m, "ensemble member", {"architecture", "pretrained", "normalization"});
          if (!m.contains("architecture")) throw ValidationError("ensemble member lacks an architecture");
          read(m, "architecture", spec.architecture, "ensemble member");
          if (!provider.has(spec.architecture)) throw UnknownArchitecture(spec.architecture);
          spec.pretrained = true;
          read(m, "pretrained", spec.pretrained, "ensemble member");
          spec.normalization = provider.normalization(spec.architecture);
          if (m.contains("normalization")) {
            const json& n = m.at("normalization");
            check_keys(n, "normalization", {"mean", "std"});
            read(n, "mean", spec.normalization.mean, "normalization");
            read(n, "std", spec.normalization.std, "normalization");
          }
        }
        c.ensemble.members.push_back(std::move(spec));
      }
    }
    if (e.contains("averaging")) {
      read(e, "averaging", text, "ensemble");
      c.averaging = parse_averaging(text);
    }
  }

  if (doc.contains("train")) {
    const json& t = doc.at("train");
    check_keys(t, "train",
               {"epochs", "learning_rate", "momentum", "batch_size", "selection", "validation_fraction", "balance"});
    read(t, "epochs", c.train.epochs, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "momentum", c.train.momentum, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    if (t.contains("selection")) {
      read(t, "selection", text, "train");
      c.train.selection_mode = parse_selection_mode(text);
    }
    read(t, "validation_fraction", c.train.validation_fraction, "train");
    read(t, "balance", c.balance, "train");
  }

  if (doc.contains("ablation")) {
    const json& a = doc.at("ablation");
    check_keys(a, "ablation", {"seeds", "holdout_fraction"});
    read(a, "seeds", c.ablation_seeds, "ablation");
    read(a, "holdout_fraction", c.holdout_fraction, "ablation");
  }
  c.validate(provider);
  return c;
}

json to_json(const RunConfig& c) {
  json members = json::array();
  for (const auto& m : c.ensemble.members)
    members.push_back({{"architecture", m.architecture},
                       {"pretrained", m.pretrained},
                       {"normalization", normalization_json(m.normalization)}});
  return {
      {"dataset", c.dataset.string()},
      {"labels", c.labels ? json(c.labels->string()) : json(nullptr)},
      {"output", c.output.string()},
      {"seed", c.seed},
      {"padding",
       {{"height", c.pad_height ? json(*c.pad_height) : json(nullptr)},
        {"width", c.pad_width ? json(*c.pad_width) : json(nullptr)},
        {"fill", {c.fill[0], c.fill[1], c.fill[2]}},
        {"placement", to_string(c.placement)},
        {"sizing", to_string(c.sizing)}}},
      {"jitter",
       {{"brightness", c.jitter.brightness_delta},
        {"contrast", c.jitter.contrast_delta},
        {"saturation", c.jitter.saturation_delta},
        {"hue", c.jitter.hue_delta}}},
      {"ensemble", {{"members", members}, {"averaging", to_string(c.averaging)}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"learning_rate", c.train.learning_rate},
        {"momentum", c.train.momentum},
        {"batch_size", c.train.batch_size},
        {"selection", to_string(c.train.selection_mode)},
        {"validation_fraction", c.train.validation_fraction},
        {"balance", c.balance}}},
      {"ablation", {{"seeds", c.ablation_seeds}, {"holdout_fraction", c.holdout_fraction}}},
  };
}

RunConfig load_run_config(const std::filesystem::path& path, const BackboneProvider& provider) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, provider);
}

}  // namespace padens
