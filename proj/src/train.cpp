#include "padens/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "padens/error.hpp"
#include "padens/nn/sgd.hpp"

namespace padens {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<int> class_targets(std::span<const ImageSample> samples) {
  std::vector<int> t;
  t.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw ValidationError("training sample '" + s.id + "' has no label");
    t.push_back(class_index(*s.label));
  }
  return t;
}

void require_uniform_size(std::span<const ImageSample> samples, const char* what) {
  for (const auto& s : samples) {
    if (s.image.height() != samples.front().image.height() || s.image.width() != samples.front().image.width())
      throw ValidationError(std::string(what) + " images are not uniformly sized ('" + s.id + "')");
  }
}

nlohmann::json input_to_json(const InputSpec& in) {
  return {{"height", in.target.target_height},
          {"width", in.target.target_width},
          {"fill", {in.target.fill[0], in.target.fill[1], in.target.fill[2]}},
          {"placement", to_string(in.target.placement)},
          {"sizing", to_string(in.sizing)}};
}

InputSpec input_from_json(const nlohmann::json& j) {
  InputSpec in;
  in.target.target_height = j.at("height").get<int>();
  in.target.target_width = j.at("width").get<int>();
  const auto fill = j.at("fill").get<std::array<int, 3>>();
  for (int c = 0; c < 3; ++c) in.target.fill[c] = static_cast<std::uint8_t>(fill[c]);
  in.target.placement = parse_placement(j.at("placement").get<std::string>());
  in.sizing = parse_sizing(j.at("sizing").get<std::string>());
  return in;
}

}  // namespace

std::string to_string(SelectionMode m) {
  return m == SelectionMode::kValidationLoss ? "validation_loss" : "training_loss";
}

SelectionMode parse_selection_mode(const std::string& text) {
  if (text == "val" || text == "validation_loss") return SelectionMode::kValidationLoss;
  if (text == "train" || text == "training_loss") return SelectionMode::kTrainingLoss;
  throw ValidationError("unknown selection mode '" + text + "' (expected val or train)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be at least 1, got " + std::to_string(epochs));
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ValidationError("validation fraction must lie in (0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"selection_mode", to_string(c.selection_mode)},
          {"validation_fraction", c.validation_fraction}};
}

// ---------------------------------------------------------------------------
// Checkpoint files

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  Archive archive;
  archive.metadata = {
      {"kind", "checkpoint"},
      {"checkpoint_version", kCheckpointVersion},
      {"member_index", cp.member_index},
      {"architecture", cp.spec.architecture},
      {"pretrained", cp.spec.pretrained},
      {"normalization", {{"mean", cp.spec.normalization.mean}, {"std", cp.spec.normalization.std}}},
      {"num_classes", cp.num_classes},
      {"best_loss", cp.best_loss},
      {"best_epoch", cp.best_epoch},
      {"label_mapping", cp.label_mapping},
      {"input", input_to_json(cp.input)},
      {"selection_mode", to_string(cp.selection_mode)},
      {"fingerprint", cp.config_fingerprint},
  };
  archive.tensors = cp.parameters;
  write_archive(path, archive);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Archive archive = read_archive(path);
  const auto& m = archive.metadata;
  if (m.value("kind", "") != "checkpoint") throw CheckpointError(path.string() + " is not a checkpoint");
  if (!m.contains("checkpoint_version") || m.at("checkpoint_version") != kCheckpointVersion)
    throw CheckpointError("version mismatch in " + path.string() + ": checkpoint version " +
                          (m.contains("checkpoint_version") ? m.at("checkpoint_version").dump() : "absent") +
                          ", expected " + std::to_string(kCheckpointVersion));
  if (!m.contains("fingerprint") || !m.at("fingerprint").is_string() ||
      m.at("fingerprint").get<std::string>().empty())
    throw CheckpointError("fingerprint absent in " + path.string());
  Checkpoint cp;
  try {
    cp.member_index = m.at("member_index").get<int>();
    cp.spec.architecture = m.at("architecture").get<std::string>();
    cp.spec.pretrained = m.at("pretrained").get<bool>();
    cp.spec.normalization.mean = m.at("normalization").at("mean").get<std::array<double, 3>>();
    cp.spec.normalization.std = m.at("normalization").at("std").get<std::array<double, 3>>();
    cp.num_classes = m.at("num_classes").get<int>();
    cp.best_loss = m.at("best_loss").get<double>();
    cp.best_epoch = m.at("best_epoch").get<int>();
    cp.label_mapping = m.at("label_mapping").get<std::array<int, kNumClasses>>();
    cp.input = input_from_json(m.at("input"));
    cp.selection_mode = parse_selection_mode(m.at("selection_mode").get<std::string>());
    cp.config_fingerprint = m.at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint header in " + path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw CheckpointError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  cp.parameters = std::move(archive.tensors);
  return cp;
}

Classifier restore_classifier(const Checkpoint& checkpoint, const BackboneProvider& provider) {
  BackboneSpec spec = checkpoint.spec;
  // Saved parameters replace everything; no need to fetch pretrained weights.
  spec.pretrained = false;
  Classifier classifier = build_classifier(spec, checkpoint.num_classes, 0, provider);
  classifier.load_state(checkpoint.parameters);
  return Classifier(std::move(classifier));
}

// ---------------------------------------------------------------------------
// Training

BestEpoch select_earliest_minimum(std::span<const double> losses) {
  if (losses.empty()) throw ValidationError("no epochs to select from");
  BestEpoch best{losses[0], 1};
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] < best.loss) best = {losses[i], static_cast<int>(i) + 1};
  }
  return best;
}

double mean_loss(Classifier& classifier, std::span<const ImageSample> samples, int batch_size) {
  if (samples.empty()) throw ValidationError("mean loss of an empty set");
  nn::NoGradGuard no_grad;
  classifier.set_training(false);
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto batch = samples.subspan(start, std::min<std::size_t>(batch_size, samples.size() - start));
    const auto targets = class_targets(batch);
    nn::Var logits = classifier.logits(nn::Var::constant(to_input_batch(batch, classifier.spec().normalization)));
    total += nn::cross_entropy(logits, targets).value()[0] * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(samples.size());
}

MemberResult train_member(Classifier& classifier, std::span<const ImageSample> train_set,
                          std::span<const ImageSample> val_set, const TrainConfig& config, const MemberInfo& info,
                          const SelectionLossFn& selection_loss) {
  config.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  if (config.selection_mode == SelectionMode::kValidationLoss && val_set.empty() && !selection_loss)
    throw ValidationError("validation-loss selection needs a non-empty validation set");
  require_uniform_size(train_set, "training");
  const std::vector<int> targets = class_targets(train_set);

  std::vector<nn::Var> params;
  for (auto& p : classifier.parameters()) params.push_back(p.var);
  nn::Sgd optimizer(params, config.learning_rate, config.momentum);

  MemberResult result;
  result.initial_train_loss = mean_loss(classifier, train_set, config.batch_size);

  std::vector<std::size_t> order(train_set.size());
  std::vector<double> selection;
  std::vector<NamedTensor> best_state;
  double best = 0.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(config.seed, {0x5F, static_cast<std::uint64_t>(epoch)}));
    shuffle.shuffle(std::span<std::size_t>(order));

    classifier.set_training(true);
    double epoch_total = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, order.size() - start);
      std::vector<Image> images;
      std::vector<int> batch_targets;
      for (std::size_t k = start; k < start + count; ++k) {
        images.push_back(train_set[order[k]].image);
        batch_targets.push_back(targets[order[k]]);
      }
      nn::Var input = nn::Var::constant(to_input_batch(images, classifier.spec().normalization));
      optimizer.zero_grad();
      nn::Var loss = nn::cross_entropy(classifier.logits(input), batch_targets);
      const double value = loss.value()[0];
      if (!std::isfinite(value))
        throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      nn::backward(loss);
      optimizer.step();
      epoch_total += value * static_cast<double>(count);
      ++batch_index;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_total / static_cast<double>(train_set.size());
    if (!val_set.empty()) record.val_loss = mean_loss(classifier, val_set, config.batch_size);
    if (selection_loss) {
      record.selection_loss = selection_loss(classifier, epoch, record.train_loss);
    } else {
      record.selection_loss =
          config.selection_mode == SelectionMode::kValidationLoss ? *record.val_loss : record.train_loss;
    }
    if (!std::isfinite(record.selection_loss))
      throw Error("non-finite selection loss at epoch " + std::to_string(epoch));
    if (selection.empty() || record.selection_loss < best) {
      best = record.selection_loss;
      best_state = classifier.state();
    }
    selection.push_back(record.selection_loss);
    result.history.push_back(record);
  }

  const BestEpoch chosen = select_earliest_minimum(selection);
  classifier.load_state(best_state);
  classifier.set_training(false);

  Checkpoint& cp = result.checkpoint;
  cp.member_index = info.member_index;
  cp.spec = classifier.spec();
  cp.num_classes = classifier.num_classes();
  cp.parameters = std::move(best_state);
  cp.best_loss = chosen.loss;
  cp.best_epoch = chosen.epoch;
  cp.input = info.input;
  cp.selection_mode = config.selection_mode;
  cp.config_fingerprint = info.fingerprint;
  return result;
}

// ---------------------------------------------------------------------------
// Ensemble pipeline

InputSpec resolve_input_spec(const CorpusStats& stats, const PipelineOptions& options) {
  InputSpec in;
  in.sizing = options.sizing;
  if (options.target) {
    in.target = *options.target;
  } else {
    const bool crop = options.sizing == Sizing::kCrop;
    in.target = PaddingSpec{crop ? stats.min_height : stats.max_height, crop ? stats.min_width : stats.max_width,
                            options.fill, options.placement};
  }
  if (in.target.target_height < 1 || in.target.target_width < 1) throw ValidationError("input target must be positive");
  return in;
}

std::string config_fingerprint(const TrainConfig& config, std::span<const ManifestRow> manifest,
                               const InputSpec& input) {
  std::string canon = to_json(config).dump() + "|" + input_to_json(input).dump() + "|";
  for (const auto& row : manifest) canon += row.id + "," + row.source_id + "," + to_string(row.label) + ";";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(canon)));
  return buf;
}

std::uint64_t member_seed(std::uint64_t seed, int member_index) {
  return derive_seed(seed, {0x3E3B, static_cast<std::uint64_t>(member_index)});
}

EnsembleRun train_ensemble(const EnsembleSpec& spec, std::span<const ImageSample> corpus, const JitterSpec& jitter,
                           const TrainConfig& config, const PipelineOptions& options,
                           const BackboneProvider& provider) {
  config.validate();
  jitter.validate();
  if (spec.members.empty()) throw ValidationError("ensemble needs at least one member");
  for (const auto& m : spec.members) {
    if (!provider.has(m.architecture)) throw UnknownArchitecture(m.architecture);
  }
  if (corpus.empty()) throw ValidationError("training corpus is empty");
  for (const auto& s : corpus) {
    if (!s.label) throw ValidationError("training corpus sample '" + s.id + "' is unlabeled");
  }

  EnsembleRun run;
  run.input = resolve_input_spec(compute_stats(corpus), options);

  if (config.selection_mode == SelectionMode::kValidationLoss) {
    run.split = stratified_split(corpus, SplitSpec{config.validation_fraction, config.seed, true});
  } else {
    run.split.train.assign(corpus.begin(), corpus.end());
  }

  Corpus train_side;
  if (options.balance) {
    BalancedCorpus balanced = balance_with_manifest(run.split.train, jitter, config.seed);
    train_side = std::move(balanced.samples);
    run.train_manifest = std::move(balanced.manifest);
    const CorpusStats after = compute_stats(train_side);
    for (const auto& [label, count] : after.class_counts) {
      if (count != after.class_counts.begin()->second)
        throw Error("balanced training set has a non-uniform class histogram");
    }
  } else {
    train_side = run.split.train;
    for (const auto& s : train_side) run.train_manifest.push_back({s.id, s.id, *s.label, "original"});
  }

  const Corpus train_inputs = fit_all(train_side, run.input.sizing, run.input.target);
  const Corpus val_inputs = fit_all(run.split.validation, run.input.sizing, run.input.target);
  const std::string fingerprint = config_fingerprint(config, run.train_manifest, run.input);

  for (std::size_t i = 0; i < spec.members.size(); ++i) {
    const int index = static_cast<int>(i);
    TrainConfig member_config = config;
    member_config.seed = member_seed(config.seed, index);
    Classifier classifier = build_classifier(spec.members[i], kNumClasses, member_config.seed, provider);
    MemberResult result =
        train_member(classifier, train_inputs, val_inputs, member_config, {index, run.input, fingerprint});
    run.checkpoints.push_back(std::move(result.checkpoint));
    run.histories.push_back(std::move(result.history));
  }
  return run;
}

void write_training_log(const std::filesystem::path& path, std::span<const std::vector<EpochRecord>> histories) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write training log " + path.string());
  out << "member,epoch,train_loss,val_loss\n";
  for (std::size_t m = 0; m < histories.size(); ++m) {
    for (const auto& r : histories[m]) {
      out << m << ',' << r.epoch << ',' << format_double(r.train_loss) << ','
          << (r.val_loss ? format_double(*r.val_loss) : std::string()) << '\n';
    }
  }
}

}  // namespace padens
