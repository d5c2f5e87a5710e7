#include "padens/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "padens/error.hpp"

namespace padens {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : cells)
    for (auto v : row) t += v;
  return t;
}

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size())
    throw ValidationError("truth has " + std::to_string(truth.size()) + " labels but predictions have " +
                          std::to_string(predicted.size()));
  if (truth.empty()) throw ValidationError("cannot score an empty label list");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = class_index(truth[i]);
    const int p = class_index(predicted[i]);
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses)
      throw ValidationError("label outside {-1, 0, 1} at position " + std::to_string(i));
    ++cm.cells[t][p];
  }
  return cm;
}

F1Report f1_report(const ConfusionMatrix& cm) {
  F1Report r;
  std::int64_t tp_all = 0;
  std::int64_t fp_all = 0;
  std::int64_t fn_all = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::int64_t tp = cm.cells[c][c];
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      if (k == c) continue;
      fp += cm.cells[k][c];
      fn += cm.cells[c][k];
    }
    r.support[c] = tp + fn;
    r.precision[c] = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
    r.recall[c] = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
    r.f1[c] = ratio(2.0 * r.precision[c] * r.recall[c], r.precision[c] + r.recall[c]);
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  r.macro_f1 = (r.f1[0] + r.f1[1] + r.f1[2]) / 3.0;
  const double p = ratio(static_cast<double>(tp_all), static_cast<double>(tp_all + fp_all));
  const double q = ratio(static_cast<double>(tp_all), static_cast<double>(tp_all + fn_all));
  r.micro_f1 = ratio(2.0 * p * q, p + q);
  return r;
}

nlohmann::json report_to_json(const F1Report& report, const ConfusionMatrix& cm) {
  nlohmann::json per_class = nlohmann::json::object();
  nlohmann::json precision = nlohmann::json::object();
  nlohmann::json recall = nlohmann::json::object();
  nlohmann::json support = nlohmann::json::object();
  nlohmann::json cells = nlohmann::json::array();
  for (Label l : kAllLabels) {
    const int c = class_index(l);
    per_class[to_string(l)] = report.f1[c];
    precision[to_string(l)] = report.precision[c];
    recall[to_string(l)] = report.recall[c];
    support[to_string(l)] = report.support[c];
    cells.push_back(cm.cells[c]);
  }
  return {{"per_class_f1", per_class}, {"precision", precision}, {"recall", recall},
          {"support", support},        {"macro_f1", report.macro_f1}, {"micro_f1", report.micro_f1},
          {"confusion", {{"labels", {-1, 0, 1}}, {"rows", "truth"}, {"columns", "predicted"}, {"cells", cells}}},
          {"samples", cm.total()}};
}

std::string format_report(const F1Report& report, const ConfusionMatrix& cm) {
  std::ostringstream out;
  char line[160];
  out << "class  precision  recall  f1      support\n";
  for (Label l : kAllLabels) {
    const int c = class_index(l);
    std::snprintf(line, sizeof line, "%5s  %9.4f  %6.4f  %6.4f  %7lld\n", to_string(l).c_str(), report.precision[c],
                  report.recall[c], report.f1[c], static_cast<long long>(report.support[c]));
    out << line;
  }
  std::snprintf(line, sizeof line, "macro F1 %.4f, micro F1 %.4f over %lld samples\n", report.macro_f1,
                report.micro_f1, static_cast<long long>(cm.total()));
  out << line << "confusion (rows truth -1/0/1, columns predicted -1/0/1)\n";
  for (const auto& row : cm.cells) {
    std::snprintf(line, sizeof line, "  %6lld %6lld %6lld\n", static_cast<long long>(row[0]),
                  static_cast<long long>(row[1]), static_cast<long long>(row[2]));
    out << line;
  }
  return out.str();
}

// ---------------------------------------------------------------------------

void write_submission(const std::filesystem::path& path, std::span<const SubmissionRow> rows) {
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (!seen.insert(r.id).second) throw ValidationError("duplicate id '" + r.id + "' in submission");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write submission " + path.string());
  out << "id,malignant\n";
  for (const auto& r : rows) out << r.id << ',' << label_value(r.label) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

void write_submission(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::vector<SubmissionRow> rows;
  rows.reserve(predictions.size());
  for (const auto& p : predictions) rows.push_back({p.id, p.label});
  write_submission(path, rows);
}

std::vector<SubmissionRow> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read predictions " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
  const auto header = split_csv(strip_cr(line));
  if (header.size() < 2 || header.front() != "id")
    throw ValidationError(path.string() + " lacks an id,... header");
  std::vector<SubmissionRow> rows;
  std::set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields");
    const auto label = parse_label(fields.back());
    if (!label)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": invalid label '" + fields.back() + "'");
    if (!seen.insert(fields.front()).second)
      throw ValidationError(path.string() + ": duplicate id '" + fields.front() + "'");
    rows.push_back({fields.front(), *label});
  }
  return rows;
}

Evaluation evaluate(std::span<const LabelRow> truth, std::span<const SubmissionRow> predicted) {
  std::map<std::string, Label> by_id;
  for (const auto& p : predicted) by_id.emplace(p.id, p.label);
  std::set<std::string> truth_ids;
  std::vector<std::string> missing;
  std::vector<Label> t;
  std::vector<Label> p;
  for (const auto& row : truth) {
    truth_ids.insert(row.id);
    auto it = by_id.find(row.id);
    if (it == by_id.end()) {
      missing.push_back(row.id);
      continue;
    }
    t.push_back(row.label);
    p.push_back(it->second);
  }
  std::vector<std::string> extra;
  for (const auto& [id, label] : by_id)
    if (!truth_ids.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "prediction ids do not match truth ids";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string("; ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
      if (ids.size() > 20) msg += " ... (" + std::to_string(ids.size()) + " total)";
    };
    list("missing predictions", missing);
    list("not in truth", extra);
    throw ValidationError(msg);
  }
  Evaluation e;
  e.cm = confusion(t, p);
  e.report = f1_report(e.cm);
  return e;
}

// ---------------------------------------------------------------------------

std::string to_string(Strategy s) { return s == Strategy::kEnsemble ? "ensemble" : "best_single"; }

Strategy parse_strategy(const std::string& text) {
  if (text == "ensemble") return Strategy::kEnsemble;
  if (text == "best_single" || text == "best-single") return Strategy::kBestSingle;
  throw ValidationError("unknown strategy '" + text + "' (expected ensemble or best_single)");
}

std::size_t best_single_index(std::span<const Checkpoint> checkpoints) {
  if (checkpoints.empty()) throw ValidationError("no checkpoints to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < checkpoints.size(); ++i)
    if (checkpoints[i].best_loss < checkpoints[best].best_loss) best = i;
  return best;
}

std::uint64_t holdout_seed(std::uint64_t seed) { return derive_seed(seed, {0x401D}); }

Split holdout_split(std::span<const ImageSample> corpus, std::uint64_t seed, double fraction) {
  return stratified_split(corpus, SplitSpec{fraction, holdout_seed(seed), true});
}

HoldoutResult score_holdout(EnsembleRun run, std::span<const ImageSample> held_out, Strategy strategy,
                            Averaging averaging, const BackboneProvider& provider) {
  std::vector<Checkpoint> chosen;
  if (strategy == Strategy::kEnsemble) {
    chosen = run.checkpoints;
  } else {
    chosen.push_back(run.checkpoints[best_single_index(run.checkpoints)]);
  }
  const Corpus inputs = fit_all(held_out, run.input.sizing, run.input.target);
  HoldoutResult result;
  result.predictions = predict(chosen, inputs, averaging, provider);
  std::vector<Label> truth;
  std::vector<Label> pred;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    if (!held_out[i].label) throw ValidationError("held-out sample '" + held_out[i].id + "' is unlabeled");
    truth.push_back(*held_out[i].label);
    pred.push_back(result.predictions[i].label);
  }
  result.evaluation.cm = confusion(truth, pred);
  result.evaluation.report = f1_report(result.evaluation.cm);
  result.run = std::move(run);
  return result;
}

namespace {

PipelineOptions with_corpus_target(std::span<const ImageSample> corpus, PipelineOptions options) {
  if (!options.target) options.target = resolve_input_spec(compute_stats(corpus), options).target;
  return options;
}

}  // namespace

HoldoutResult run_holdout(const EnsembleSpec& spec, std::span<const ImageSample> corpus, const JitterSpec& jitter,
                          const TrainConfig& config, const PipelineOptions& options, Strategy strategy,
                          const HoldoutSpec& holdout, const BackboneProvider& provider) {
  const Split split = holdout_split(corpus, config.seed, holdout.fraction);
  EnsembleRun run = train_ensemble(spec, split.train, jitter, config, with_corpus_target(corpus, options), provider);
  return score_holdout(std::move(run), split.validation, strategy, holdout.averaging, provider);
}

std::vector<Variant> default_variants() {
  std::vector<Variant> out;
  for (Sizing sizing : {Sizing::kPad, Sizing::kResize, Sizing::kCrop})
    for (Strategy strategy : {Strategy::kEnsemble, Strategy::kBestSingle})
      out.push_back({to_string(sizing) + "/" + to_string(strategy), sizing, strategy, true});
  return out;
}

std::pair<double, double> mean_stddev(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean of no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<AblationRow> ablation_report(std::span<const Variant> variants, const EnsembleSpec& spec,
                                         std::span<const ImageSample> corpus, const JitterSpec& jitter,
                                         const TrainConfig& config, std::span<const std::uint64_t> seeds,
                                         const HoldoutSpec& holdout, const BackboneProvider& provider) {
  if (variants.size() < 2) throw ValidationError("a comparison needs at least 2 variants");
  if (seeds.empty()) throw ValidationError("a comparison needs at least 1 seed");
  std::vector<AblationRow> rows;
  for (const auto& v : variants) rows.push_back({v, {seeds.begin(), seeds.end()}, {}, 0.0, 0.0});

  for (std::uint64_t seed : seeds) {
    TrainConfig cfg = config;
    cfg.seed = seed;
    const Split split = holdout_split(corpus, seed, holdout.fraction);
    // Variants differing only in strategy share one trained run.
    std::map<std::tuple<Sizing, bool>, EnsembleRun> runs;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      const Variant& v = variants[i];
      const auto key = std::make_tuple(v.sizing, v.balance);
      auto it = runs.find(key);
      if (it == runs.end()) {
        PipelineOptions options;
        options.sizing = v.sizing;
        options.balance = v.balance;
        it = runs.emplace(key, train_ensemble(spec, split.train, jitter, cfg, with_corpus_target(corpus, options),
                                              provider))
                 .first;
      }
      const HoldoutResult r = score_holdout(it->second, split.validation, v.strategy, holdout.averaging, provider);
      rows[i].macro_f1.push_back(r.evaluation.report.macro_f1);
    }
  }
  for (auto& row : rows) std::tie(row.mean, row.stddev) = mean_stddev(row.macro_f1);
  return rows;
}

void write_ablation_table(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "variant,sizing,strategy,balance,seeds,macro_f1_mean,macro_f1_std,per_seed\n";
  for (const auto& r : rows) {
    out << r.variant.name << ',' << to_string(r.variant.sizing) << ',' << to_string(r.variant.strategy) << ','
        << (r.variant.balance ? "true" : "false") << ',' << r.seeds.size() << ',' << format_double(r.mean) << ','
        << format_double(r.stddev) << ',';
    for (std::size_t i = 0; i < r.macro_f1.size(); ++i) out << (i ? ";" : "") << format_double(r.macro_f1[i]);
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace padens
