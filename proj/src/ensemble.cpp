#include "padens/ensemble.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "padens/error.hpp"

namespace padens {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string target_string(const InputSpec& in) {
  return std::to_string(in.target.target_height) + "x" + std::to_string(in.target.target_width) + " (" +
         to_string(in.sizing) + ")";
}

Probs to_probs(std::span<const double> row) {
  const auto p = softmax(row);
  return {p[0], p[1], p[2]};
}

}  // namespace

std::string to_string(Averaging a) { return a == Averaging::kProbability ? "prob" : "logit"; }

Averaging parse_averaging(const std::string& text) {
  if (text == "prob" || text == "probability") return Averaging::kProbability;
  if (text == "logit") return Averaging::kLogit;
  throw ValidationError("unknown averaging mode '" + text + "' (expected prob or logit)");
}

Label classify(std::span<const double> mean_probs, const std::array<int, kNumClasses>& label_mapping) {
  if (mean_probs.size() != static_cast<std::size_t>(kNumClasses))
    throw ValidationError("probability vector must have " + std::to_string(kNumClasses) + " entries");
  double total = 0.0;
  for (double p : mean_probs) {
    if (!std::isfinite(p) || p < 0.0) throw ValidationError("probability entries must be finite and nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ValidationError("probabilities sum to " + format_double(total));
  std::size_t best = 0;
  for (std::size_t i = 1; i < mean_probs.size(); ++i)
    if (mean_probs[i] > mean_probs[best]) best = i;
  const auto label = label_from_value(label_mapping[best]);
  if (!label) throw ValidationError("label mapping holds invalid class " + std::to_string(label_mapping[best]));
  return *label;
}

std::vector<Prediction> combine_scores(std::span<const std::string> ids, std::span<const nn::Tensor> member_scores,
                                       Averaging averaging, const std::array<int, kNumClasses>& label_mapping) {
  if (member_scores.empty()) throw ValidationError("ensemble has no members");
  const int n = static_cast<int>(ids.size());
  for (const auto& s : member_scores) {
    if (s.shape() != nn::Shape{n, kNumClasses})
      throw ValidationError("member scores have shape " + nn::shape_string(s.shape()) + ", expected [" +
                            std::to_string(n) + ", 3]");
  }
  const double members = static_cast<double>(member_scores.size());
  std::vector<Prediction> out(ids.size());
  for (int i = 0; i < n; ++i) {
    Prediction& p = out[i];
    p.id = ids[i];
    std::array<double, kNumClasses> mean_logits{};
    for (const auto& s : member_scores) {
      const std::array<double, kNumClasses> row{s.at(i, 0), s.at(i, 1), s.at(i, 2)};
      p.per_member_probs.push_back(to_probs(row));
      for (int c = 0; c < kNumClasses; ++c) mean_logits[c] += row[c];
    }
    if (averaging == Averaging::kProbability) {
      for (int c = 0; c < kNumClasses; ++c) {
        double sum = 0.0;
        for (const auto& row : p.per_member_probs) sum += row[c];
        p.mean_probs[c] = sum / members;
      }
    } else {
      for (double& v : mean_logits) v /= members;
      p.mean_probs = to_probs(mean_logits);
    }
    p.label = classify(p.mean_probs, label_mapping);
  }
  return out;
}

std::vector<Prediction> predict(std::span<const EnsembleMember> members, std::span<const ImageSample> corpus,
                                Averaging averaging, int batch_size) {
  if (members.empty()) throw ValidationError("ensemble has no members");
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  const EnsembleMember& first = members.front();
  for (const auto& m : members) {
    if (m.label_mapping != first.label_mapping)
      throw ValidationError("members '" + first.name + "' and '" + m.name + "' use different label mappings");
    if (m.input != first.input)
      throw ValidationError("members '" + first.name + "' and '" + m.name + "' expect different inputs: " +
                            target_string(first.input) + " vs " + target_string(m.input));
  }
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& s : corpus) {
    if (s.image.height() != first.input.target.target_height || s.image.width() != first.input.target.target_width)
      throw ValidationError("image '" + s.id + "' is " + std::to_string(s.image.height()) + "x" +
                            std::to_string(s.image.width()) + ", not sized to the ensemble input " +
                            target_string(first.input));
    if (!seen.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "'");
    ids.push_back(s.id);
  }
  const int n = static_cast<int>(corpus.size());
  std::vector<nn::Tensor> scores;
  for (const auto& m : members) {
    nn::Tensor all({n, kNumClasses});
    for (int start = 0; start < n; start += batch_size) {
      const int count = std::min(batch_size, n - start);
      const nn::Tensor part = m.scores(corpus.subspan(start, count));
      if (part.shape() != nn::Shape{count, kNumClasses})
        throw Error("member '" + m.name + "' returned scores of shape " + nn::shape_string(part.shape()));
      for (int r = 0; r < count; ++r)
        for (int c = 0; c < kNumClasses; ++c) all.at(start + r, c) = part.at(r, c);
    }
    scores.push_back(std::move(all));
  }
  return combine_scores(ids, scores, averaging, first.label_mapping);
}

void check_compatible(std::span<const Checkpoint> checkpoints) {
  if (checkpoints.empty()) throw ValidationError("no checkpoints given");
  const Checkpoint& first = checkpoints.front();
  for (const auto& cp : checkpoints) {
    const std::string who = "checkpoints " + std::to_string(first.member_index) + " and " +
                            std::to_string(cp.member_index);
    if (cp.label_mapping != first.label_mapping) throw ValidationError(who + " use different label mappings");
    if (cp.input != first.input)
      throw ValidationError(who + " have mismatched input targets: " + target_string(first.input) + " vs " +
                            target_string(cp.input));
    if (cp.num_classes != kNumClasses)
      throw ValidationError("checkpoint " + std::to_string(cp.member_index) + " has " +
                            std::to_string(cp.num_classes) + " classes");
  }
}

LoadedEnsemble::LoadedEnsemble(std::vector<Checkpoint> checkpoints, const BackboneProvider& provider)
    : checkpoints_(std::move(checkpoints)) {
  check_compatible(checkpoints_);
  for (const auto& cp : checkpoints_) classifiers_.push_back(restore_classifier(cp, provider));
}

std::vector<EnsembleMember> LoadedEnsemble::members() {
  std::vector<EnsembleMember> out;
  for (std::size_t i = 0; i < classifiers_.size(); ++i) {
    Classifier* c = &classifiers_[i];
    const Checkpoint& cp = checkpoints_[i];
    out.push_back({cp.spec.architecture + "#" + std::to_string(cp.member_index),
                   [c](std::span<const ImageSample> batch) { return forward(*c, batch); }, cp.input,
                   cp.label_mapping});
  }
  return out;
}

std::vector<Prediction> predict(std::span<const Checkpoint> checkpoints, std::span<const ImageSample> corpus,
                                Averaging averaging, const BackboneProvider& provider) {
  LoadedEnsemble ensemble(std::vector<Checkpoint>(checkpoints.begin(), checkpoints.end()), provider);
  const auto members = ensemble.members();
  return predict(members, corpus, averaging);
}

void write_prediction_dump(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write prediction dump " + path.string());
  out << "id,p_neg1,p_0,p_1,label\n";
  for (const auto& p : predictions) {
    out << p.id << ',' << format_double(p.mean_probs[0]) << ',' << format_double(p.mean_probs[1]) << ','
        << format_double(p.mean_probs[2]) << ',' << label_value(p.label) << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace padens
