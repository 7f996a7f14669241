#include "doctest_torch.hpp"

#include "fedclean/completion.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <set>

using namespace fedclean;
using namespace fedclean::completion;

namespace {

// Saturate the final layer so tanh returns its extremes.
void saturate(models::Generator& g, double bias) {
  torch::NoGradGuard no_grad;
  auto params = g->body->parameters();
  params.back().fill_(bias);  // last bias
}

}  // namespace

TEST_SUITE("completion") {

TEST_CASE("unit-range endpoints") {
  const auto r = to_unit_range(torch::tensor({-1.0, 0.0, 1.0}));
  CHECK(r[0].item<double>() == 0.0);
  CHECK(r[1].item<double>() == 0.5);
  CHECK(r[2].item<double>() == 1.0);
}

TEST_CASE("per-class counts and labels") {
  auto g = models::build_generator(1);
  const auto out = generate_missing(g, {{3, 5, 7}, 100, 4});
  CHECK(out.size() == 300);
  const auto h = out.class_histogram();
  for (std::int64_t c = 0; c < 10; ++c) {
    CHECK(h[static_cast<std::size_t>(c)] == ((c == 3 || c == 5 || c == 7) ? 100 : 0));
  }
  CHECK(out.features.min().item<float>() >= 0.0f);
  CHECK(out.features.max().item<float>() <= 1.0f);
  for (auto o : out.origin_vector()) CHECK(o == datakit::kSyntheticOrigin);
  CHECK(g->is_training());
}

TEST_CASE("features stay in [0, 1] at saturation") {
  for (double b : {-1e4, 1e4}) {
    auto g = models::build_generator(2);
    saturate(g, b);
    const auto out = generate_missing(g, {{0}, 16, 1});
    CHECK(out.features.min().item<float>() >= 0.0f);
    CHECK(out.features.max().item<float>() <= 1.0f);
    CHECK(out.features.mean().item<float>() == doctest::Approx(b > 0 ? 1.0 : 0.0).epsilon(1e-6));
  }
}

TEST_CASE("synthesis is deterministic per seed") {
  auto g = models::build_generator(3);
  const auto a = generate_missing(g, {{1, 2}, 10, 8});
  const auto b = generate_missing(g, {{1, 2}, 10, 8});
  const auto c = generate_missing(g, {{1, 2}, 10, 9});
  CHECK(testutil::tensors_equal(a.features, b.features));
  CHECK(testutil::tensors_equal(a.labels, b.labels));
  CHECK_FALSE(testutil::tensors_equal(a.features, c.features));
}

TEST_CASE("synthesis errors") {
  auto g = models::build_generator(3);
  CHECK_THROWS_AS(generate_missing(g, {{}, 10, 1}), CompletionError);
  CHECK_THROWS_AS(generate_missing(g, {{1}, 0, 1}), CompletionError);
  CHECK_THROWS_AS(generate_missing(g, {{10}, 1, 1}), CompletionError);
}

TEST_CASE("complete_client: counting, coverage and preservation") {
  // client without class 7
  auto base = testutil::toy_dataset(700, 10, 3);
  std::vector<std::int64_t> keep;
  const auto y = base.label_vector();
  for (std::size_t i = 0; i < y.size() && keep.size() < 600; ++i)
    if (y[i] != 7) keep.push_back(static_cast<std::int64_t>(i));
  const auto ds = base.subset(keep);
  REQUIRE(ds.size() == 600);

  auto g = models::build_generator(4);
  const auto syn = generate_missing(g, {{7, 8, 9}, 100, 1});
  const auto out = complete_client(ds, syn, 6);
  CHECK(out.size() == 900);
  const auto present = out.present_classes();
  CHECK(std::find(present.begin(), present.end(), 7) != present.end());

  // every original row is present unchanged
  std::int64_t originals = 0;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const auto o = out.origin[i].item<std::int64_t>();
    if (o == datakit::kSyntheticOrigin) continue;
    ++originals;
    CHECK(torch::equal(out.features[i], base.features[o]));
    CHECK(out.labels[i].item<std::int64_t>() == base.labels[o].item<std::int64_t>());
  }
  CHECK(originals == 600);

  // empty synthetic: same rows, possibly reordered
  const auto same = complete_client(ds, datakit::empty_dataset(10), 6);
  auto o1 = same.origin_vector();
  auto o2 = ds.origin_vector();
  std::sort(o1.begin(), o1.end());
  std::sort(o2.begin(), o2.end());
  CHECK(o1 == o2);

  CHECK_THROWS_AS(complete_client(ds, datakit::empty_dataset(5), 1), CompletionError);
}

TEST_CASE("default samples per class") {
  auto ds = testutil::toy_dataset(80, 10, 1);  // 8 per class
  CHECK(default_samples_per_class(ds) == 8);
  std::vector<std::int64_t> idx;
  for (std::int64_t i = 0; i < 80; ++i)
    if (i % 10 < 4) idx.push_back(i);  // 4 classes x 8
  idx.push_back(5);  // one sample of class 5
  CHECK(default_samples_per_class(ds.subset(idx)) == 7);  // 33 / 5 = 6.6
  CHECK(default_samples_per_class(datakit::empty_dataset(10)) == 1);
}

TEST_CASE("export synthetic as IDX") {
  testutil::TempDir tmp;
  auto g = models::build_generator(5);
  const auto syn = generate_missing(g, {{2}, 3, 1});
  export_synthetic(syn, tmp.path / "x", "client0");
  CHECK(datakit::read_idx_images(tmp.path / "x" / "client0-images.idx").count == 3);
  CHECK(datakit::read_idx_labels(tmp.path / "x" / "client0-labels.idx") == std::vector<std::uint8_t>{2, 2, 2});
}

}  // TEST_SUITE
