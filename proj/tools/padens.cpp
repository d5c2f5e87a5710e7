// padens: prepare / train / predict / evaluate / ablate / synth.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "padens/config.hpp"
#include "padens/error.hpp"
#include "padens/eval.hpp"
#include "padens/synth.hpp"

namespace fs = std::filesystem;
using namespace padens;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string labels;
  std::optional<int> members;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> momentum;
  std::string selection;
  std::string backbones;
  std::string sizing;
  std::string averaging;
  bool no_pretrained = false;
  bool no_balance = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run-config JSON document");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--data", o.data, "Dataset root (images/ + labels.csv)");
  cmd->add_option("--labels", o.labels, "Label table (default <data>/labels.csv)");
  cmd->add_option("--members", o.members, "Member count (backbone list is cycled or truncated)");
  cmd->add_option("--epochs", o.epochs, "Epochs per member");
  cmd->add_option("--lr", o.lr, "Learning rate");
  cmd->add_option("--momentum", o.momentum, "SGD momentum");
  cmd->add_option("--selection", o.selection, "Checkpoint selection loss")->check(CLI::IsMember({"val", "train"}));
  cmd->add_option("--backbones", o.backbones, "Comma-separated architectures");
  cmd->add_option("--sizing", o.sizing, "pad, resize or crop")->check(CLI::IsMember({"pad", "resize", "crop"}));
  cmd->add_option("--averaging", o.averaging, "prob or logit")->check(CLI::IsMember({"prob", "logit"}));
  cmd->add_flag("--no-pretrained", o.no_pretrained, "Start every member from random weights");
  cmd->add_flag("--no-balance", o.no_balance, "Skip jitter oversampling");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? default_run_config() : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output = o.out;
  if (!o.data.empty()) c.dataset = o.data;
  if (!o.labels.empty()) c.labels = fs::path(o.labels);
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.lr) c.train.learning_rate = *o.lr;
  if (o.momentum) c.train.momentum = *o.momentum;
  if (!o.selection.empty()) c.train.selection_mode = parse_selection_mode(o.selection);
  if (!o.sizing.empty()) c.sizing = parse_sizing(o.sizing);
  if (!o.averaging.empty()) c.averaging = parse_averaging(o.averaging);
  if (o.no_balance) c.balance = false;
  if (!o.backbones.empty() || o.members) {
    std::vector<std::string> names;
    if (!o.backbones.empty()) {
      names = split_list(o.backbones);
    } else {
      for (const auto& m : c.ensemble.members) names.push_back(m.architecture);
    }
    c.ensemble = make_ensemble(names, o.members, true);
  }
  if (o.no_pretrained)
    for (auto& m : c.ensemble.members) m.pretrained = false;
  c.validate();
  return c;
}

Corpus load_labeled(const RunConfig& c) {
  if (c.dataset.empty()) throw ValidationError("no dataset given (use --data or the config's dataset key)");
  const fs::path labels = c.labels_path();
  if (!fs::exists(labels)) throw ValidationError("label table not found: " + labels.string());
  Corpus all = load_corpus(c.dataset, labels);
  Corpus labeled;
  for (auto& s : all)
    if (s.label) labeled.push_back(std::move(s));
  if (labeled.empty()) throw ValidationError("no labeled images under " + c.dataset.string());
  return labeled;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

int cmd_prepare(const RunConfig& c) {
  const Corpus labeled = load_labeled(c);
  const CorpusStats stats = compute_stats(labeled);
  fs::create_directories(c.output);
  write_text(c.output / "stats.txt", format_stats(stats));
  write_text(c.output / "stats.json", stats_to_json(stats).dump(2) + "\n");
  const BalancedCorpus balanced = balance_with_manifest(labeled, c.jitter_spec(), c.seed);
  write_manifest(c.output / "manifest.csv", balanced.manifest);
  std::cout << format_stats(stats) << "manifest: " << balanced.manifest.size() << " samples ("
            << balanced.manifest.size() - labeled.size() << " synthetic) -> " << (c.output / "manifest.csv").string()
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& c) {
  const Corpus labeled = load_labeled(c);
  fs::create_directories(c.output);
  const EnsembleRun run = train_ensemble(c.ensemble, labeled, c.jitter_spec(), c.train_config(), c.pipeline_options());
  for (const auto& cp : run.checkpoints) {
    const fs::path path = c.output / ("member_" + std::to_string(cp.member_index) + ".ckpt");
    save_checkpoint(cp, path);
    std::cout << "member " << cp.member_index << " (" << cp.spec.architecture << "): best " << to_string(cp.selection_mode)
              << " " << cp.best_loss << " at epoch " << cp.best_epoch << " -> " << path.string() << "\n";
  }
  write_training_log(c.output / "training_log.csv", run.histories);
  write_manifest(c.output / "train_manifest.csv", run.train_manifest);
  write_text(c.output / "config.json", to_json(c).dump(2) + "\n");
  return 0;
}

std::vector<fs::path> find_checkpoints(const fs::path& dir) {
  std::vector<fs::path> out;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".ckpt") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_predict(const RunConfig& c, std::vector<std::string> checkpoint_paths, const std::string& input) {
  std::vector<fs::path> paths(checkpoint_paths.begin(), checkpoint_paths.end());
  if (paths.empty()) paths = find_checkpoints(c.output);
  if (paths.empty()) throw ValidationError("no checkpoints given and none found in " + c.output.string());
  std::vector<Checkpoint> checkpoints;
  for (const auto& p : paths) checkpoints.push_back(load_checkpoint(p));
  check_compatible(checkpoints);
  if (input.empty()) throw ValidationError("no input directory given (use --input)");
  const Corpus images = load_corpus(input, std::nullopt);
  const InputSpec& spec = checkpoints.front().input;
  const Corpus sized = fit_all(images, spec.sizing, spec.target);
  const auto predictions = predict(checkpoints, sized, c.averaging);
  fs::create_directories(c.output);
  write_prediction_dump(c.output / "predictions.csv", predictions);
  write_submission(c.output / "submission.csv", predictions);
  std::cout << predictions.size() << " predictions from " << checkpoints.size() << " member(s) -> "
            << (c.output / "submission.csv").string() << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& c, const std::string& truth, const std::string& predictions) {
  if (truth.empty() || predictions.empty()) throw ValidationError("evaluate needs --truth and --predictions");
  const auto truth_rows = read_label_table(truth);
  const auto predicted = read_predictions(predictions);
  const Evaluation e = evaluate(truth_rows, predicted);
  fs::create_directories(c.output);
  write_text(c.output / "report.json", report_to_json(e.report, e.cm).dump(2) + "\n");
  const std::string text = format_report(e.report, e.cm);
  write_text(c.output / "report.txt", text);
  std::cout << text;
  return 0;
}

int cmd_ablate(const RunConfig& c) {
  const Corpus labeled = load_labeled(c);
  const auto variants = default_variants();
  const auto rows = ablation_report(variants, c.ensemble, labeled, c.jitter_spec(), c.train_config(),
                                    c.ablation_seeds, c.holdout_spec());
  fs::create_directories(c.output);
  write_ablation_table(c.output / "ablation.csv", rows);
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-20s macro F1 %.4f +- %.4f (%zu seeds)\n", r.variant.name.c_str(), r.mean,
                  r.stddev, r.seeds.size());
    std::cout << line;
  }
  return 0;
}

int cmd_synth(const std::string& kind, std::uint64_t seed, const std::string& out) {
  if (out.empty()) throw ValidationError("synth needs --out");
  SynthSpec spec;
  if (kind == "oxml") {
    spec = oxml_shaped_spec(seed);
  } else if (kind == "desk") {
    spec = desk_spec(seed);
  } else {
    throw ValidationError("unknown synthetic corpus kind '" + kind + "'");
  }
  const SynthCorpus corpus = make_synthetic(spec);
  write_synthetic(corpus, out);
  std::cout << corpus.labeled.size() << " labeled and " << corpus.unlabeled.size() << " unlabeled images -> " << out
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Padding + jitter balancing + ensemble image classification"};
  app.require_subcommand(1);

  Overrides o;
  auto* prepare = app.add_subcommand("prepare", "Corpus statistics and balanced manifest");
  auto* train = app.add_subcommand("train", "Train every ensemble member");
  auto* predict_cmd = app.add_subcommand("predict", "Ensemble predictions and submission file");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "F1 report for a prediction file");
  auto* ablate = app.add_subcommand("ablate", "Compare sizing and model strategies on held-out splits");
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  for (auto* cmd : {prepare, train, predict_cmd, evaluate_cmd, ablate}) add_common(cmd, o);

  std::vector<std::string> checkpoints;
  std::string input;
  predict_cmd->add_option("--checkpoints", checkpoints, "Checkpoint files (default: *.ckpt in --out)");
  predict_cmd->add_option("--input", input, "Directory of images to classify");
  std::string truth;
  std::string predictions;
  evaluate_cmd->add_option("--truth", truth, "Label table id,label");
  evaluate_cmd->add_option("--predictions", predictions, "Submission or prediction dump");
  std::string kind = "desk";
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--kind", kind, "oxml (36/14/12 + 124 unlabeled) or desk (30/18/12)");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(kind, synth_seed, synth_out);
    const RunConfig config = resolve(o);
    if (prepare->parsed()) return cmd_prepare(config);
    if (train->parsed()) return cmd_train(config);
    if (predict_cmd->parsed()) return cmd_predict(config, checkpoints, input);
    if (evaluate_cmd->parsed()) return cmd_evaluate(config, truth, predictions);
    if (ablate->parsed()) return cmd_ablate(config);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
