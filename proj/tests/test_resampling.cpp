#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "film/resampling.hpp"
#include "support.hpp"

using Catch::Matchers::WithinAbs;
using film::Errc;
using film::Label;
using support::error_code_of;

namespace {

std::multiset<std::vector<double>> row_bag(const film::Dataset& d, Label cls) {
  std::multiset<std::vector<double>> rows;
  for (std::size_t i = 0; i < d.n_rows(); ++i)
    if (d.label(i) == cls) rows.insert({d.row(i).begin(), d.row(i).end()});
  return rows;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

film::TrainedModel constant_model(double probability) {
  film::LogisticState state;
  state.coefficients = {0.0};
  state.intercept = logit(probability);
  film::LearnerSpec spec;
  spec.kind = film::LearnerKind::logistic;
  return {spec, 1, state};
}

}  // namespace

TEST_CASE("upsample balances by replicating minority rows") {
  const auto d = support::make_blobs(10, 40, 2, 1.0, 3);
  const auto u = film::upsample(d, 7);
  REQUIRE(u.count(Label::positive) == 40);
  REQUIRE(u.count(Label::negative) == 40);

  const auto originals = row_bag(d, Label::positive);
  std::set<std::vector<double>> distinct(originals.begin(), originals.end());
  for (const auto& row : row_bag(u, Label::positive)) REQUIRE(distinct.count(row) == 1);
  // the majority side is untouched
  REQUIRE(row_bag(u, Label::negative) == row_bag(d, Label::negative));
}

TEST_CASE("upsample leaves balanced data unchanged") {
  const auto d = support::make_blobs(12, 12, 2, 1.0, 5);
  const auto u = film::upsample(d, 3);
  REQUIRE(u.n_rows() == d.n_rows());
  REQUIRE(row_bag(u, Label::positive) == row_bag(d, Label::positive));
}

TEST_CASE("upsample duplicates a single minority row to parity") {
  const auto d = support::make_dataset({{1.0}, {2.0}, {3.0}, {4.0}, {5.0}, {6.0}},
                                       {1, 0, 0, 0, 0, 0});
  const auto u = film::upsample(d, 11);
  REQUIRE(u.count(Label::positive) == 5);
  for (const auto& row : row_bag(u, Label::positive)) REQUIRE(row == std::vector<double>{1.0});
}

TEST_CASE("downsample trims the majority class to parity") {
  const auto d = support::make_blobs(10, 40, 2, 1.0, 3);
  const auto s = film::downsample(d, 7);
  REQUIRE(s.count(Label::positive) == 10);
  REQUIRE(s.count(Label::negative) == 10);
  const auto source = row_bag(d, Label::negative);
  for (const auto& row : row_bag(s, Label::negative)) REQUIRE(source.count(row) >= 1);
  REQUIRE(row_bag(s, Label::positive) == row_bag(d, Label::positive));

  const auto balanced = support::make_blobs(6, 6, 2, 1.0, 4);
  const auto same = film::downsample(balanced, 1);
  REQUIRE(row_bag(same, Label::negative) == row_bag(balanced, Label::negative));

  const auto tiny = support::make_dataset({{1.0}, {2.0}, {3.0}}, {1, 0, 0});
  const auto forced = film::downsample(tiny, 2);
  REQUIRE(forced.n_rows() == 2);
  REQUIRE(forced.count(Label::positive) == 1);
}

TEST_CASE("smote synthesizes along minority segments") {
  const auto d = support::make_dataset({{0.0, 0.0}, {1.0, 1.0}, {5.0, 0.0}, {5.0, 1.0},
                                        {6.0, 0.0}, {6.0, 1.0}, {7.0, 0.0}, {7.0, 1.0}},
                                       {1, 1, 0, 0, 0, 0, 0, 0});
  const auto result = film::smote(d, 1, 0.0, 13);
  REQUIRE(result.data.count(Label::positive) == 6);  // balanced against 6 negatives
  REQUIRE(result.synthesis.size() == 4);
  for (std::size_t s = 0; s < result.synthesis.size(); ++s) {
    const auto& rec = result.synthesis[s];
    const auto synth = result.data.row(d.n_rows() + s);
    // convex-combination identity against the recorded pair and lambda
    for (std::size_t c = 0; c < d.n_cols(); ++c) {
      const double expected =
          d.at(rec.base_row, c) + rec.lambda * (d.at(rec.neighbor_row, c) - d.at(rec.base_row, c));
      REQUIRE_THAT(synth[c], WithinAbs(expected, 1e-12));
    }
    // both minority points sit on y=x, so every synthetic point does too
    REQUIRE_THAT(synth[0], WithinAbs(synth[1], 1e-12));
    REQUIRE(synth[0] >= 0.0);
    REQUIRE(synth[0] <= 1.0);
  }
}

TEST_CASE("smote keeps synthetic rows inside the minority bounding box") {
  const auto d = support::make_blobs(15, 60, 3, 1.0, 31);
  std::vector<double> lo(3, 1e300), hi(3, -1e300);
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    if (d.label(i) != Label::positive) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], d.at(i, c));
      hi[c] = std::max(hi[c], d.at(i, c));
    }
  }
  const auto result = film::smote(d, 5, 0.0, 17);
  for (std::size_t r = d.n_rows(); r < result.data.n_rows(); ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      REQUIRE(result.data.at(r, c) >= lo[c] - 1e-12);
      REQUIRE(result.data.at(r, c) <= hi[c] + 1e-12);
    }
}

TEST_CASE("smote repairs one-hot blocks to valid indicators") {
  // two one-hot columns, then one numeric
  std::vector<double> values = {1, 0, 0.1, 0, 1, 0.9, 1, 0, 0.5,
                                0, 1, 0.2, 1, 0, 0.7, 0, 1, 0.3};
  std::vector<film::Label> labels = {film::Label::positive, film::Label::positive,
                                     film::Label::positive, film::Label::negative,
                                     film::Label::negative, film::Label::negative};
  film::Dataset d(std::move(values), 3, std::move(labels), {"c=a", "c=b", "x"}, "pos", "onehot",
                  {{"c", {"a", "b"}}, {"x", {}}}, {{0, 2, "c"}});
  const auto result = film::smote(d, 2, 1.0, 5);
  REQUIRE(result.synthesis.size() == 3);
  for (std::size_t r = 6; r < result.data.n_rows(); ++r) {
    const double a = result.data.at(r, 0), b = result.data.at(r, 1);
    REQUIRE((a == 0.0 || a == 1.0));
    REQUIRE((b == 0.0 || b == 1.0));
    REQUIRE(a + b == 1.0);
  }
}

TEST_CASE("smote rejects too few minority rows") {
  const auto single = support::make_dataset({{1.0}, {2.0}, {3.0}}, {1, 0, 0});
  REQUIRE(error_code_of([&] { film::smote(single, 1, 0.0, 1); }) == Errc::too_few_minority);
  const auto pair = support::make_dataset({{1.0}, {2.0}, {3.0}, {4.0}}, {1, 1, 0, 0});
  REQUIRE(error_code_of([&] { film::smote(pair, 3, 0.0, 1); }) == Errc::too_few_minority);
}

TEST_CASE("under_bagging with one bag equals a single downsample and train") {
  const auto d = support::make_blobs(12, 48, 2, 2.0, 41);
  film::LearnerSpec spec;
  spec.kind = film::LearnerKind::logistic;
  const std::uint64_t seed = 1234;
  const auto bagged = film::under_bagging(d, 1, spec, seed);

  const std::uint64_t bag_seed = film::derive_seed(seed, std::uint64_t{0});
  const auto bag = film::downsample(d, bag_seed);
  film::LearnerSpec manual_spec = spec;
  manual_spec.seed = film::derive_seed(bag_seed, "train");
  const auto manual = film::train(manual_spec, bag);

  REQUIRE(bagged.predict_proba(d.matrix()) == manual.predict_proba(d.matrix()));
}

TEST_CASE("under_bagging votes and averages as documented") {
  const auto probe = support::make_dataset({{0.0}, {0.0}}, {1, 0});
  SECTION("two of three members voting positive wins") {
    film::BaggedModel model;
    model.members = {constant_model(0.8), constant_model(0.7), constant_model(0.2)};
    REQUIRE(model.predict_labels(probe.matrix())[0] == Label::positive);
  }
  SECTION("mean probability of members") {
    film::BaggedModel model;
    model.members = {constant_model(0.2), constant_model(0.4), constant_model(0.9)};
    REQUIRE_THAT(model.predict_proba(probe.matrix())[0], WithinAbs(0.5, 1e-9));
    // one positive vote out of three loses
    REQUIRE(model.predict_labels(probe.matrix())[0] == Label::negative);
  }
  SECTION("an even split goes to the majority class") {
    film::BaggedModel model;
    model.members = {constant_model(0.9), constant_model(0.1)};
    REQUIRE(model.predict_labels(probe.matrix())[0] == Label::negative);
  }
}

TEST_CASE("balance_subsampling draws the documented majority count") {
  REQUIRE(film::majority_draw_count(75, 0.45) == 92);
  REQUIRE(film::majority_draw_count(100, 0.5) == 100);

  const auto d = support::make_blobs(100, 400, 2, 1.0, 51);
  const auto subsets = film::balance_subsampling(d, 0.45, 75, 4, 9);
  REQUIRE(subsets.size() == 4);
  for (const auto& s : subsets) {
    REQUIRE(s.count(Label::positive) == 75);
    REQUIRE(s.count(Label::negative) == 92);
    const auto stats = film::class_stats(s);
    REQUIRE(std::abs(stats.p_min - 0.45) <= 1.0 / static_cast<double>(s.n_rows()));
  }
}

TEST_CASE("balance_subsampling p=0.5 draws equal classes") {
  const auto d = support::make_blobs(50, 200, 2, 1.0, 52);
  const auto subsets = film::balance_subsampling(d, 0.5, 40, 2, 10);
  for (const auto& s : subsets) {
    REQUIRE(s.count(Label::positive) == 40);
    REQUIRE(s.count(Label::negative) == 40);
  }
}

TEST_CASE("balance_subsampling validates the draw size") {
  const auto d = support::make_blobs(20, 80, 2, 1.0, 53);
  REQUIRE(error_code_of([&] { film::balance_subsampling(d, 0.45, 21, 1, 1); }) ==
          Errc::bad_counts);
  REQUIRE(error_code_of([&] { film::balance_subsampling(d, 0.6, 10, 1, 1); }) == Errc::bad_counts);
}

TEST_CASE("balance_subsampling is deterministic with independent subsets") {
  const auto d = support::make_blobs(30, 120, 2, 1.0, 54);
  const auto a = film::balance_subsampling(d, 0.45, 20, 3, 77);
  const auto b = film::balance_subsampling(d, 0.45, 20, 3, 77);
  for (std::size_t s = 0; s < a.size(); ++s) {
    REQUIRE(a[s].n_rows() == b[s].n_rows());
    for (std::size_t r = 0; r < a[s].n_rows(); ++r)
      REQUIRE(a[s].at(r, 0) == b[s].at(r, 0));
  }
  // distinct subsets draw different rows
  bool differ = false;
  for (std::size_t r = 0; r < a[0].n_rows() && !differ; ++r)
    differ = a[0].at(r, 0) != a[1].at(r, 0);
  REQUIRE(differ);
}

TEST_CASE("upsample and downsample are deterministic per seed") {
  const auto d = support::make_blobs(9, 33, 2, 1.0, 55);
  for (int which = 0; which < 2; ++which) {
    const auto a = which ? film::upsample(d, 5) : film::downsample(d, 5);
    const auto b = which ? film::upsample(d, 5) : film::downsample(d, 5);
    REQUIRE(a.n_rows() == b.n_rows());
    for (std::size_t r = 0; r < a.n_rows(); ++r) REQUIRE(a.at(r, 0) == b.at(r, 0));
  }
}
