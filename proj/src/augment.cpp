#include "padens/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <opencv2/imgproc.hpp>

#include "padens/error.hpp"

namespace padens {

namespace {

double clamp255(double v) { return std::clamp(v, 0.0, 255.0); }

double gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// RGB and HSV on [0, 1]; hue in [0, 1).
void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) {
    h = (g - b) / d;
  } else if (mx == g) {
    h = 2.0 + (b - r) / d;
  } else {
    h = 4.0 + (r - g) / d;
  }
  h /= 6.0;
  h -= std::floor(h);
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double h6 = h * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

std::string format_transform(const JitterParams& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "jitter:b=%.6f;c=%.6f;s=%.6f;h=%.6f", p.brightness, p.contrast, p.saturation,
                p.hue);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Padding

std::string to_string(Placement p) { return p == Placement::kCenter ? "center" : "top_left"; }

Placement parse_placement(const std::string& text) {
  if (text == "center") return Placement::kCenter;
  if (text == "top_left") return Placement::kTopLeft;
  throw ValidationError("unknown placement '" + text + "' (expected center or top_left)");
}

PaddingSpec padding_from_stats(const CorpusStats& stats, Rgb fill, Placement placement) {
  return PaddingSpec{stats.max_height, stats.max_width, fill, placement};
}

Offset placement_offset(int height, int width, const PaddingSpec& spec) {
  if (spec.placement == Placement::kTopLeft) return {0, 0};
  return {(spec.target_height - height) / 2, (spec.target_width - width) / 2};
}

Image pad_image(const Image& image, const PaddingSpec& spec) {
  if (image.height() > spec.target_height || image.width() > spec.target_width)
    throw ValidationError("image of size " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                          " exceeds padding target " + std::to_string(spec.target_height) + "x" +
                          std::to_string(spec.target_width));
  if (image.height() == spec.target_height && image.width() == spec.target_width) return image;
  Image out(spec.target_height, spec.target_width, spec.fill);
  const Offset off = placement_offset(image.height(), image.width(), spec);
  const std::size_t row_bytes = static_cast<std::size_t>(image.width()) * Image::kChannels;
  for (int y = 0; y < image.height(); ++y) {
    const auto* src = &image.pixels()[static_cast<std::size_t>(y) * row_bytes];
    std::copy(src, src + row_bytes, &out.at(y + off.row, off.col, 0));
  }
  return out;
}

ImageSample pad_to(const ImageSample& sample, const PaddingSpec& spec) {
  try {
    return {sample.id, pad_image(sample.image, spec), sample.label};
  } catch (const ValidationError& e) {
    throw ValidationError("cannot pad '" + sample.id + "': " + e.what());
  }
}

Corpus pad_all(std::span<const ImageSample> corpus, const PaddingSpec& spec) {
  Corpus out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(pad_to(s, spec));
  return out;
}

Image crop(const Image& image, Offset origin, int height, int width) {
  if (origin.row < 0 || origin.col < 0 || origin.row + height > image.height() ||
      origin.col + width > image.width())
    throw ValidationError("crop window outside image");
  Image out(height, width);
  const std::size_t row_bytes = static_cast<std::size_t>(width) * Image::kChannels;
  for (int y = 0; y < height; ++y) {
    const auto* src = &image.pixels()[(static_cast<std::size_t>(origin.row + y) * image.width() + origin.col) * Image::kChannels];
    std::copy(src, src + row_bytes, &out.at(y, 0, 0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Jitter

void JitterSpec::validate() const {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!finite_nonneg(brightness_delta) || !finite_nonneg(contrast_delta) || !finite_nonneg(saturation_delta))
    throw ValidationError("jitter deltas must be finite and non-negative");
  if (!(hue_delta >= 0.0 && hue_delta <= 0.5)) throw ValidationError("hue delta must lie in [0, 0.5]");
}

JitterParams draw_jitter(const JitterSpec& spec, Rng& draw) {
  spec.validate();
  auto factor = [&](double delta) { return draw.uniform(std::max(0.0, 1.0 - delta), 1.0 + delta); };
  JitterParams p;
  p.brightness = factor(spec.brightness_delta);
  p.contrast = factor(spec.contrast_delta);
  p.saturation = factor(spec.saturation_delta);
  p.hue = draw.uniform(-spec.hue_delta, spec.hue_delta);
  return p;
}

Image apply_jitter(const Image& image, const JitterParams& params) {
  const std::size_t n = static_cast<std::size_t>(image.height()) * image.width();
  std::vector<double> px(n * 3);
  const auto src = image.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = src[i];

  if (params.brightness != 1.0) {
    for (double& v : px) v = clamp255(v * params.brightness);
  }
  if (params.contrast != 1.0) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += gray(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    mean /= static_cast<double>(n);
    for (double& v : px) v = clamp255(params.contrast * v + (1.0 - params.contrast) * mean);
  }
  if (params.saturation != 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double g = gray(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
      for (int c = 0; c < 3; ++c) px[3 * i + c] = clamp255(params.saturation * px[3 * i + c] + (1.0 - params.saturation) * g);
    }
  }
  if (params.hue != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double h, s, v;
      rgb_to_hsv(px[3 * i] / 255.0, px[3 * i + 1] / 255.0, px[3 * i + 2] / 255.0, h, s, v);
      h += params.hue;
      h -= std::floor(h);
      double r, g, b;
      hsv_to_rgb(h, s, v, r, g, b);
      px[3 * i] = clamp255(r * 255.0);
      px[3 * i + 1] = clamp255(g * 255.0);
      px[3 * i + 2] = clamp255(b * 255.0);
    }
  }

  std::vector<std::uint8_t> out(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) out[i] = static_cast<std::uint8_t>(std::lround(px[i]));
  return Image(image.height(), image.width(), std::move(out));
}

std::string jitter_copy_id(const std::string& source_id, int copy_index) {
  return source_id + "~j" + std::to_string(copy_index);
}

ImageSample apply_jitter(const ImageSample& sample, const JitterSpec& spec, Rng& draw, int copy_index) {
  const JitterParams params = draw_jitter(spec, draw);
  return {jitter_copy_id(sample.id, copy_index), apply_jitter(sample.image, params), sample.label};
}

Rng jitter_stream(std::uint64_t seed, const JitterSpec& spec, const std::string& source_id, int copy_index) {
  return Rng(derive_seed(seed, {spec.seed, hash_string(source_id), static_cast<std::uint64_t>(copy_index)}));
}

// ---------------------------------------------------------------------------
// Oversampling

int OversamplePlan::total_additional() const {
  int n = 0;
  for (const auto& [_, k] : additional_copies) n += k;
  return n;
}

OversamplePlan plan_oversample(const CorpusStats& stats, std::span<const ImageSample> corpus, std::uint64_t seed) {
  std::map<Label, std::vector<const ImageSample*>> members;
  for (const auto& s : corpus) {
    if (!s.label) throw ValidationError("cannot oversample unlabeled sample '" + s.id + "'");
    members[*s.label].push_back(&s);
  }
  int majority = 0;
  for (const auto& [label, count] : stats.class_counts) {
    if (count <= 0) throw ValidationError("class " + to_string(label) + " has no samples to oversample from");
    const auto found = members.count(label) ? static_cast<int>(members[label].size()) : 0;
    if (found != count)
      throw ValidationError("statistics report " + std::to_string(count) + " samples of class " + to_string(label) +
                            " but the corpus holds " + std::to_string(found));
    majority = std::max(majority, count);
  }

  OversamplePlan plan;
  for (const auto& [label, count] : stats.class_counts) {
    const int extra = majority - count;
    plan.additional_copies[label] = extra;
    auto& list = plan.sources[label];
    if (extra == 0) continue;
    const auto& pool = members[label];
    const int n = static_cast<int>(pool.size());
    // Every source gets `base` copies; `remainder` seeded picks get one more.
    const int base = extra / n;
    const int remainder = extra % n;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(label_value(label) + 1), 0x0E5A}));
    rng.shuffle(std::span<int>(order));
    std::vector<int> copies(static_cast<std::size_t>(n), base);
    for (int i = 0; i < remainder; ++i) ++copies[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < copies[static_cast<std::size_t>(i)]; ++k) list.push_back({pool[static_cast<std::size_t>(i)]->id, k});
  }
  return plan;
}

BalancedCorpus balance_with_manifest(std::span<const ImageSample> corpus, const JitterSpec& jitter,
                                     std::uint64_t seed) {
  jitter.validate();
  const CorpusStats stats = compute_stats(corpus);
  const OversamplePlan plan = plan_oversample(stats, corpus, seed);

  BalancedCorpus out;
  out.samples.assign(corpus.begin(), corpus.end());
  std::set<std::string> ids;
  std::map<std::string, const ImageSample*> by_id;
  for (const auto& s : corpus) {
    ids.insert(s.id);
    by_id[s.id] = &s;
    out.manifest.push_back({s.id, s.id, *s.label, "original"});
  }
  for (const auto& [label, list] : plan.sources) {
    for (const auto& src : list) {
      const ImageSample& source = *by_id.at(src.source_id);
      Rng draw = jitter_stream(seed, jitter, src.source_id, src.copy_index);
      const JitterParams params = draw_jitter(jitter, draw);
      ImageSample copy{jitter_copy_id(source.id, src.copy_index), apply_jitter(source.image, params), source.label};
      if (!ids.insert(copy.id).second) throw ValidationError("synthetic id '" + copy.id + "' collides with an existing id");
      out.manifest.push_back({copy.id, source.id, label, format_transform(params)});
      out.samples.push_back(std::move(copy));
    }
  }
  return out;
}

Corpus balance_corpus(std::span<const ImageSample> corpus, const JitterSpec& jitter, std::uint64_t seed) {
  return balance_with_manifest(corpus, jitter, seed).samples;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << "id,source_id,class,transform\n";
  for (const auto& r : rows) out << r.id << ',' << r.source_id << ',' << to_string(r.label) << ',' << r.transform << '\n';
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "id,source_id,class,transform") throw ValidationError("unexpected manifest header in " + path.string());
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    const auto c = line.find(',', b + 1);
    if (c == std::string::npos) throw ValidationError("malformed manifest row: " + line);
    auto label = parse_label(line.substr(b + 1, c - b - 1));
    if (!label) throw ValidationError("malformed manifest class: " + line);
    rows.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), *label, line.substr(c + 1)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sizing strategies

std::string to_string(Sizing s) {
  switch (s) {
    case Sizing::kPad: return "pad";
    case Sizing::kResize: return "resize";
    case Sizing::kCrop: return "crop";
  }
  return "pad";
}

Sizing parse_sizing(const std::string& text) {
  if (text == "pad") return Sizing::kPad;
  if (text == "resize") return Sizing::kResize;
  if (text == "crop") return Sizing::kCrop;
  throw ValidationError("unknown sizing '" + text + "' (expected pad, resize or crop)");
}

Image fit_image(const Image& image, Sizing sizing, const PaddingSpec& target) {
  switch (sizing) {
    case Sizing::kPad: return pad_image(image, target);
    case Sizing::kResize: {
      if (image.height() == target.target_height && image.width() == target.target_width) return image;
      cv::Mat src(image.height(), image.width(), CV_8UC3, const_cast<std::uint8_t*>(image.pixels().data()));
      cv::Mat dst;
      cv::resize(src, dst, cv::Size(target.target_width, target.target_height), 0, 0, cv::INTER_LINEAR);
      std::vector<std::uint8_t> px(dst.data, dst.data + dst.total() * 3);
      return Image(target.target_height, target.target_width, std::move(px));
    }
    case Sizing::kCrop: {
      const int h = std::min(image.height(), target.target_height);
      const int w = std::min(image.width(), target.target_width);
      const Image window = crop(image, {(image.height() - h) / 2, (image.width() - w) / 2}, h, w);
      return pad_image(window, target);
    }
  }
  throw std::logic_error("unhandled sizing");
}

Corpus fit_all(std::span<const ImageSample> corpus, Sizing sizing, const PaddingSpec& target) {
  Corpus out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    try {
      out.push_back({s.id, fit_image(s.image, sizing, target), s.label});
    } catch (const ValidationError& e) {
      throw ValidationError("cannot size '" + s.id + "': " + e.what());
    }
  }
  return out;
}

}  // namespace padens
