#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aarm/introspection.hpp"
#include "support/synthetic.hpp"
#include "support/tmpdir.hpp"

#include <cmath>

using namespace aarm;
using testsup::TmpDir;

namespace {

ModelParams params_for(const DatasetBundle& bundle, std::uint64_t seed, int dim = 6) {
  ModelConfig config;
  config.aspect_dim = dim;
  config.global_dim = dim;
  config.strategy = EmbeddingStrategy::random_tune;
  return init_params(config, bundle.user_count(), bundle.item_count(), bundle.vocab.size(),
                     nullptr, seed);
}

}  // namespace

TEST_CASE("attention dumps are normalized and labeled") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 16, 12, 51);
  auto params = params_for(bundle, 3);

  const auto dump = attention_trace(params, bundle, "u3", "i5");
  CHECK(dump.user_id == "u3");
  CHECK(dump.item_id == "i5");
  REQUIRE(dump.user_att.size() == static_cast<Eigen::Index>(dump.user_aspects.size()));
  if (dump.user_att.size() > 0) CHECK(std::abs(dump.user_att.sum() - 1.0) < 1e-6);
  REQUIRE(dump.aspect_att.rows() == static_cast<Eigen::Index>(dump.user_aspects.size()));
  REQUIRE(dump.aspect_att.cols() == static_cast<Eigen::Index>(dump.item_aspects.size()));
  for (Eigen::Index i = 0; i < dump.aspect_att.rows(); ++i)
    CHECK(std::abs(dump.aspect_att.row(i).sum() - 1.0) < 1e-6);
  CHECK(dump.shared.size() == dump.user_aspects.size());
}

TEST_CASE("zero user-attention weights dump as equal alphas") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 10, 8, 53);
  auto params = params_for(bundle, 5);
  params.user_att.setZero();
  const auto dump = attention_trace(params, bundle, "u1", "i2");
  for (Eigen::Index i = 1; i < dump.user_att.size(); ++i)
    CHECK(dump.user_att(i) == doctest::Approx(dump.user_att(0)));
}

TEST_CASE("a singleton item set makes every beta entry one") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 10, 8, 57);
  auto params = params_for(bundle, 7);
  int singleton = bundle.sets.item_sets[2][0];
  if (singleton == kPadIndex) singleton = 1;
  std::fill(bundle.sets.item_sets[2].begin(), bundle.sets.item_sets[2].end(), kPadIndex);
  bundle.sets.item_sets[2][0] = singleton;

  const auto dump = attention_trace(params, bundle, "u0", "i2");
  REQUIRE(dump.aspect_att.cols() == 1);
  for (Eigen::Index i = 0; i < dump.aspect_att.rows(); ++i)
    CHECK(dump.aspect_att(i, 0) == doctest::Approx(1.0));
}

TEST_CASE("dumps reject unknown identifiers") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 6, 6, 59);
  auto params = params_for(bundle, 9);
  CHECK_THROWS_WITH_AS(attention_trace(params, bundle, "ghost", "i0"),
                       doctest::Contains("unknown user"), std::runtime_error);
  CHECK_THROWS_WITH_AS(attention_trace(params, bundle, "u0", "ghost"),
                       doctest::Contains("unknown item"), std::runtime_error);
}

TEST_CASE("dumps are pure reads: repeated calls serialize identically") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 10, 8, 61);
  auto params = params_for(bundle, 11);
  const auto j1 = dump_to_json(attention_trace(params, bundle, "u2", "i3"));
  const auto j2 = dump_to_json(attention_trace(params, bundle, "u2", "i3"));
  CHECK(j1.dump() == j2.dump());
}

TEST_CASE("json dump carries rounded alphas with a 4-decimal display form") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 10, 8, 63);
  auto params = params_for(bundle, 13);
  const auto dump = attention_trace(params, bundle, "u0", "i1");
  const auto j = dump_to_json(dump);
  REQUIRE(j.contains("user_aspects"));
  for (const auto& entry : j.at("user_aspects")) {
    if (!entry.contains("alpha")) continue;
    const std::string display = entry.at("alpha_display").get<std::string>();
    CHECK(display.find('.') == 1);
    CHECK(display.size() == 6);  // "0.1234"
    const double alpha = entry.at("alpha").get<double>();
    CHECK(std::abs(alpha - std::stod(display)) < 5e-5);
  }
}

TEST_CASE("csv heatmap has one row per user aspect") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 10, 8, 65);
  auto params = params_for(bundle, 15);
  const auto dump = attention_trace(params, bundle, "u1", "i1");
  const auto csv = dump_to_csv(dump);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == static_cast<long>(dump.user_aspects.size()) + 1);
  CHECK(csv.rfind("user_aspect", 0) == 0);
}

TEST_CASE("disjoint vocabularies put all pairs in the zero bucket") {
  DatasetBundle b;
  b.users = {"u0", "u1"};
  b.items = {"i0", "i1", "i2"};
  b.vocab.aspects = {"<PAD>", "a", "b", "c", "d"};
  for (int i = 0; i < b.vocab.size(); ++i) b.vocab.index.emplace(b.vocab.aspects[i], i);
  b.sets.user_len = b.sets.item_len = 2;
  b.sets.user_sets = {{1, 0}, {2, 0}};
  b.sets.item_sets = {{3, 0}, {4, 0}, {3, 4}};
  b.sets.raw_user_sets = {{1}, {2}};
  b.sets.raw_item_sets = {{3}, {4}, {3, 4}};

  const auto hist = shared_aspect_distribution(b, false, -1, 1);
  CHECK(hist.counts[0] == 6);
  CHECK(hist.ratios[0] == doctest::Approx(1.0));
  double total = 0;
  for (double r : hist.ratios) total += r;
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("histogram buckets always sum to one") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 20, 16, 67);
  for (bool truncated : {false, true}) {
    const auto hist = shared_aspect_distribution(bundle, truncated, -1, 1);
    double total = 0;
    for (double r : hist.ratios) total += r;
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(hist.pairs == 20 * 16);
    CHECK_FALSE(hist.sampled);
  }
}

TEST_CASE("sampled histogram tracks the exact one within half a point") {
  TmpDir dir("insp");
  auto bundle = testsup::make_synth_bundle(dir, 30, 24, 69);
  const auto exact = shared_aspect_distribution(bundle, false, -1, 1);
  const auto sampled = shared_aspect_distribution(bundle, false, 200000, 7);
  CHECK(sampled.sampled);
  CHECK(sampled.sample_size == 200000);
  for (std::size_t b = 0; b < exact.ratios.size(); ++b)
    CHECK(std::abs(exact.ratios[b] - sampled.ratios[b]) < 0.005);
}

TEST_CASE("truncated mode counts the padded sets") {
  DatasetBundle b;
  b.users = {"u0"};
  b.items = {"i0"};
  b.vocab.aspects = {"<PAD>", "a", "b", "c"};
  for (int i = 0; i < b.vocab.size(); ++i) b.vocab.index.emplace(b.vocab.aspects[i], i);
  b.sets.user_len = b.sets.item_len = 1;
  b.sets.user_sets = {{1}};
  b.sets.item_sets = {{2}};
  b.sets.raw_user_sets = {{1, 2, 3}};
  b.sets.raw_item_sets = {{1, 2, 3}};

  CHECK(shared_aspect_distribution(b, false, -1, 1).counts[3] == 1);  // raw share 3
  CHECK(shared_aspect_distribution(b, true, -1, 1).counts[0] == 1);   // truncated share 0
}

TEST_CASE("histogram json rounds percentages to three decimals") {
  SharedAspectHistogram hist;
  hist.counts = {1, 2, 0, 0, 0, 0, 0};
  hist.pairs = 3;
  for (std::size_t b = 0; b < hist.ratios.size(); ++b)
    hist.ratios[b] = static_cast<double>(hist.counts[b]) / 3.0;
  const auto j = histogram_to_json(hist);
  CHECK(j.at("buckets")[0].at("percent").get<double>() == doctest::Approx(33.333));
  CHECK(j.at("mode").get<std::string>() == "exact");
}
