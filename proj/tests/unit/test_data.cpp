#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "padens/corpus.hpp"
#include "padens/error.hpp"
#include "padens/label.hpp"
#include "padens/rng.hpp"
#include "test_support.hpp"

using namespace padens;
using padens::testing::TempDir;

namespace {

void write_labels(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::ofstream out(path);
  out << "id,label\n";
  for (const auto& [id, v] : rows) out << id << ',' << v << '\n';
}

}  // namespace

TEST_SUITE("rng") {
  TEST_CASE("streams are reproducible and seeds separate") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      CHECK(x != c.next_u64());
    }
    CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
  }

  TEST_CASE("uniform, below and normal stay in range with plausible moments") {
    Rng rng(7);
    double sum = 0, sq = 0;
    std::map<std::uint64_t, int> hist;
    for (int i = 0; i < 20000; ++i) {
      const double u = rng.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      ++hist[rng.below(5)];
      const double z = rng.normal();
      sum += z;
      sq += z * z;
    }
    CHECK(hist.size() == 5);
    for (auto& [k, n] : hist) CHECK(std::abs(n - 4000) < 300);
    CHECK(std::abs(sum / 20000) < 0.05);
    CHECK(std::abs(sq / 20000 - 1.0) < 0.05);
  }

  TEST_CASE("shuffle is a permutation") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<int> v(static_cast<std::size_t>(trial));
      for (int i = 0; i < trial; ++i) v[static_cast<std::size_t>(i)] = i;
      auto w = v;
      rng.shuffle(std::span<int>(w));
      std::sort(w.begin(), w.end());
      CHECK(w == v);
    }
  }
}

TEST_SUITE("label") {
  TEST_CASE("class index mapping") {
    CHECK(class_index(Label::kNegative) == 0);
    CHECK(class_index(Label::kBenign) == 1);
    CHECK(class_index(Label::kMalignant) == 2);
    for (Label l : kAllLabels) CHECK(label_from_index(class_index(l)) == l);
    CHECK_THROWS(label_from_index(3));
  }

  TEST_CASE("parsing") {
    CHECK(parse_label("-1") == Label::kNegative);
    CHECK(parse_label(" 0 ") == Label::kBenign);
    CHECK(parse_label("1") == Label::kMalignant);
    CHECK_FALSE(parse_label("2"));
    CHECK_FALSE(parse_label("1.0"));
    CHECK_FALSE(parse_label(""));
    CHECK(to_string(Label::kNegative) == "-1");
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("compute_stats examples") {
    Corpus single{{"a", Image(50, 70), std::nullopt}};
    const auto s = compute_stats(single);
    CHECK(s.max_height == 50);
    CHECK(s.max_width == 70);
    CHECK(s.total == 1);
    CHECK(s.labeled() == 0);

    Corpus three{{"a", Image(10, 10), Label::kNegative}, {"b", Image(40, 5), Label::kBenign},
                 {"c", Image(5, 40), std::nullopt}};
    const auto t = compute_stats(three);
    // Brute-force max over the three sizes.
    int mh = 0, mw = 0;
    for (const auto& x : three) {
      mh = std::max(mh, x.image.height());
      mw = std::max(mw, x.image.width());
    }
    CHECK(t.max_height == mh);
    CHECK(t.max_width == mw);
    CHECK(t.total == 3);
    CHECK(t.labeled() == 2);
    CHECK_THROWS_AS(compute_stats(Corpus{}), ValidationError);
  }

  TEST_CASE("OxML-shaped counts") {
    Rng rng(1);
    const auto c = testing::labeled_corpus(rng, 36, 14, 12);
    const auto s = compute_stats(c);
    CHECK(s.class_counts.at(Label::kNegative) == 36);
    CHECK(s.class_counts.at(Label::kBenign) == 14);
    CHECK(s.class_counts.at(Label::kMalignant) == 12);
    CHECK(s.total == 62);
  }

  TEST_CASE("stratified split examples") {
    Rng rng(2);
    const auto c = testing::labeled_corpus(rng, 36, 14, 12);
    const auto split = stratified_split(c, {0.2, 5, true});
    std::map<Label, int> val;
    for (const auto& s : split.validation) ++val[*s.label];
    CHECK(val[Label::kNegative] == 7);
    CHECK(val[Label::kBenign] == 3);
    CHECK(val[Label::kMalignant] == 2);

    const auto small = testing::labeled_corpus(rng, 2, 2, 2);
    const auto half = stratified_split(small, {0.5, 1, true});
    std::map<Label, int> a, b;
    for (const auto& s : half.train) ++a[*s.label];
    for (const auto& s : half.validation) ++b[*s.label];
    for (Label l : kAllLabels) {
      CHECK(a[l] == 1);
      CHECK(b[l] == 1);
    }

    const auto again = stratified_split(c, {0.2, 5, true});
    CHECK(again.train == split.train);
    CHECK(again.validation == split.validation);
  }

  TEST_CASE("split errors") {
    Rng rng(3);
    auto c = testing::labeled_corpus(rng, 3, 1, 3);
    CHECK_THROWS_AS(stratified_split(c, {0.2, 0, true}), ValidationError);
    c = testing::labeled_corpus(rng, 3, 3, 3);
    c[0].label.reset();
    CHECK_THROWS_AS(stratified_split(c, {0.2, 0, true}), ValidationError);
    CHECK_THROWS_AS(stratified_split(testing::labeled_corpus(rng, 3, 3, 3), {1.0, 0, true}), ValidationError);
  }

  TEST_CASE("property: split is a partition with per-class share within one sample") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      const int n0 = 2 + static_cast<int>(rng.below(15));
      const int n1 = 2 + static_cast<int>(rng.below(15));
      const int n2 = 2 + static_cast<int>(rng.below(15));
      const auto c = testing::labeled_corpus(rng, n0, n1, n2, 1, 2);
      const double f = rng.uniform(0.05, 0.95);
      const auto split = stratified_split(c, {f, rng.next_u64(), true});
      std::multiset<std::string> ids;
      for (const auto& s : split.train) ids.insert(s.id);
      for (const auto& s : split.validation) ids.insert(s.id);
      std::multiset<std::string> expected;
      for (const auto& s : c) expected.insert(s.id);
      CHECK(ids == expected);
      std::map<Label, int> val;
      for (const auto& s : split.validation) ++val[*s.label];
      const std::map<Label, int> total{{Label::kNegative, n0}, {Label::kBenign, n1}, {Label::kMalignant, n2}};
      for (const auto& [l, n] : total) CHECK(std::abs(val[l] - f * n) <= 1.0);
    }
  }

  TEST_CASE("load_corpus: layout, ordering, labels") {
    TempDir dir("corpus");
    std::filesystem::create_directories(dir.path() / "images");
    Rng rng(5);
    for (const char* id : {"img_b", "img_a", "img_c"})
      write_png(dir.path() / "images" / (std::string(id) + ".png"), testing::random_image(rng, 3, 4));
    write_labels(dir.path() / "labels.csv", {{"img_b", "1"}, {"img_a", "-1"}});
    const auto c = load_corpus(dir.path(), dir.path() / "labels.csv");
    REQUIRE(c.size() == 3);
    CHECK(c[0].id == "img_a");
    CHECK(c[1].id == "img_b");
    CHECK(c[2].id == "img_c");
    CHECK(c[0].label == Label::kNegative);
    CHECK(c[1].label == Label::kMalignant);
    CHECK_FALSE(c[2].label);
    CHECK(c[0].image.height() == 3);

    const auto unlabeled = load_corpus(dir.path(), std::nullopt);
    CHECK(std::none_of(unlabeled.begin(), unlabeled.end(), [](const auto& s) { return s.label.has_value(); }));
  }

  TEST_CASE("load_corpus: empty label table gives unlabeled samples") {
    TempDir dir("corpus_empty");
    Rng rng(6);
    for (int i = 0; i < 5; ++i)
      write_png(dir.path() / ("x" + std::to_string(i) + ".png"), testing::random_image(rng, 2, 2));
    write_labels(dir.path() / "labels.csv", {});
    const auto c = load_corpus(dir.path(), dir.path() / "labels.csv");
    CHECK(c.size() == 5);
    for (const auto& s : c) CHECK_FALSE(s.label);
  }

  TEST_CASE("load_corpus: errors name the offending id") {
    TempDir dir("corpus_err");
    Rng rng(7);
    write_png(dir.path() / "img_7.png", testing::random_image(rng, 2, 2));
    write_labels(dir.path() / "labels.csv", {{"img_7", "2"}});
    try {
      load_corpus(dir.path(), dir.path() / "labels.csv");
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("img_7") != std::string::npos);
      CHECK(msg.find('2') != std::string::npos);
    }
    write_labels(dir.path() / "labels.csv", {{"ghost", "1"}});
    CHECK_THROWS_WITH_AS(load_corpus(dir.path(), dir.path() / "labels.csv"), doctest::Contains("ghost"),
                         ValidationError);
    { std::ofstream(dir.path() / "broken.png") << "not an image"; }
    write_labels(dir.path() / "labels.csv", {});
    CHECK_THROWS_WITH(load_corpus(dir.path(), dir.path() / "labels.csv"), doctest::Contains("broken"));
    CHECK_THROWS_AS(load_corpus(dir.path() / "missing", std::nullopt), ValidationError);
  }

  TEST_CASE("grayscale files become three equal channels") {
    TempDir dir("gray");
    cv::Mat gray(2, 3, CV_8UC1);
    for (int i = 0; i < 6; ++i) gray.data[i] = static_cast<std::uint8_t>(40 * i);
    REQUIRE(cv::imwrite((dir.path() / "g.png").string(), gray));
    const auto c = load_corpus(dir.path(), std::nullopt);
    REQUIRE(c.size() == 1);
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) {
        const auto v = static_cast<std::uint8_t>(40 * (y * 3 + x));
        CHECK(c[0].image.pixel(y, x) == Rgb{v, v, v});
      }
  }

  TEST_CASE("property: stats agree with brute-force counting over files") {
    TempDir dir("stats");
    Rng rng(8);
    std::vector<std::pair<std::string, std::string>> rows;
    std::map<Label, int> counts;
    int mh = 0, mw = 0;
    for (int i = 0; i < 12; ++i) {
      const int h = 1 + static_cast<int>(rng.below(9));
      const int w = 1 + static_cast<int>(rng.below(9));
      mh = std::max(mh, h);
      mw = std::max(mw, w);
      const std::string id = "f" + std::to_string(i);
      write_png(dir.path() / (id + ".png"), testing::random_image(rng, h, w));
      if (rng.bernoulli(0.8)) {
        const Label l = label_from_index(static_cast<int>(rng.below(3)));
        ++counts[l];
        rows.push_back({id, to_string(l)});
      }
    }
    write_labels(dir.path() / "labels.csv", rows);
    const auto s = compute_stats(load_corpus(dir.path(), dir.path() / "labels.csv"));
    CHECK(s.max_height == mh);
    CHECK(s.max_width == mw);
    CHECK(s.total == 12);
    CHECK(s.class_counts == counts);
  }
}
