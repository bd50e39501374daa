#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "film/uic.hpp"
#include "support.hpp"

using Catch::Matchers::WithinAbs;
using film::Errc;
using film::Metric;
using support::error_code_of;

namespace {

film::RunRecord make_record(std::size_t variant, std::size_t fold, const std::string& technique,
                            const std::vector<std::pair<Metric, double>>& values) {
  film::RunRecord rec;
  rec.variant = variant;
  rec.fold = fold;
  rec.technique = technique;
  for (const auto& [m, v] : values) rec.metrics.set(m, v);
  return rec;
}

// two-pass textbook formula, kept deliberately naive
double pearson_two_pass(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (double x : xs) mx += x;
  for (double y : ys) my += y;
  mx /= n;
  my /= n;
  double num = 0, dx2 = 0, dy2 = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    dx2 += (xs[i] - mx) * (xs[i] - mx);
    dy2 += (ys[i] - my) * (ys[i] - my);
  }
  return num / (std::sqrt(dx2) * std::sqrt(dy2));
}

}  // namespace

TEST_CASE("pearson on exact linear relationships") {
  const std::vector<double> xs = {1, 2, 3, 4, 5};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(2.0 * x);
  REQUIRE_THAT(*film::pearson(xs, ys), WithinAbs(1.0, 1e-12));
  ys.clear();
  for (double x : xs) ys.push_back(-x + 7.0);
  REQUIRE_THAT(*film::pearson(xs, ys), WithinAbs(-1.0, 1e-12));
}

TEST_CASE("pearson hand value and edge cases") {
  REQUIRE_THAT(*film::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}),
               WithinAbs(0.5, 1e-12));
  REQUIRE(!film::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{4, 4, 4}).has_value());
  REQUIRE(error_code_of([] {
            film::pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3});
          }) == Errc::length_mismatch);
  REQUIRE(error_code_of([] {
            film::pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2});
          }) == Errc::too_few);
}

TEST_CASE("pearson matches the two-pass formula on random sequences") {
  film::Rng rng(71);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng.index(30);
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back(rng.real01() * 10.0 - 5.0);
      ys.push_back(rng.real01() * 10.0 - 5.0);
    }
    const auto r = film::pearson(xs, ys);
    REQUIRE(r.has_value());
    REQUIRE_THAT(*r, WithinAbs(pearson_two_pass(xs, ys), 1e-12));
    REQUIRE(std::abs(*r) <= 1.0 + 1e-12);
  }
}

TEST_CASE("gaussian_weight spot values") {
  const film::GaussianParams quarter{1.0, 0.0, 0.25};
  REQUIRE_THAT(film::gaussian_weight(0.0, quarter), WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(film::gaussian_weight(0.5, quarter), WithinAbs(std::exp(-2.0), 1e-12));
  const film::GaussianParams narrow{1.0, 0.0, 0.15};
  REQUIRE(film::gaussian_weight(1.0, narrow) < 1e-9);
  REQUIRE(film::gaussian_weight(std::nullopt, {2.5, 0.0, 0.25}) == 2.5);
}

TEST_CASE("gaussian_weight stays in (0, a] and decreases away from the centre") {
  const film::GaussianParams g{1.0, 0.0, 0.25};
  double previous = 2.0;
  for (double r = 0.0; r <= 1.0; r += 0.05) {
    const double w = film::gaussian_weight(r, g);
    REQUIRE(w > 0.0);
    REQUIRE(w <= g.a);
    REQUIRE(w < previous);
    previous = w;
  }
}

TEST_CASE("bias_profile averages folds and correlates against p_min") {
  const std::vector<double> p_min = {0.1, 0.2, 0.3};
  const std::vector<std::string> techniques = {"a"};
  const std::vector<Metric> metrics = {Metric::acc, Metric::kappa, Metric::f1};
  std::vector<film::RunRecord> records;
  for (std::size_t v = 0; v < 3; ++v)
    for (std::size_t f = 0; f < 2; ++f) {
      const double wobble = f == 0 ? 0.01 : -0.01;
      records.push_back(make_record(v, f, "a",
                                    {{Metric::acc, p_min[v] + wobble},   // tracks p_min exactly
                                     {Metric::kappa, 0.4 + wobble},      // constant mean
                                     {Metric::f1, 1.0 - p_min[v] + wobble}}));
    }
  const auto profile = film::bias_profile(records, p_min, techniques, metrics);
  REQUIRE_THAT(*profile.correlation(0, 0), WithinAbs(1.0, 1e-12));
  REQUIRE(!profile.correlation(0, 1).has_value());
  REQUIRE_THAT(*profile.correlation(0, 2), WithinAbs(-1.0, 1e-12));
  REQUIRE_THAT(profile.mean_value(0, 0, 1), WithinAbs(0.4, 1e-12));
}

TEST_CASE("bias_profile rejects an incomplete grid") {
  const std::vector<double> p_min = {0.1, 0.2, 0.3};
  const std::vector<std::string> techniques = {"a"};
  const std::vector<Metric> metrics = {Metric::acc};
  std::vector<film::RunRecord> records = {make_record(0, 0, "a", {{Metric::acc, 0.5}}),
                                          make_record(1, 0, "a", {{Metric::acc, 0.5}})};
  REQUIRE(error_code_of([&] { film::bias_profile(records, p_min, techniques, metrics); }) ==
          Errc::incomplete_grid);
}

TEST_CASE("uic_score sums unit-weighted metrics") {
  const std::vector<double> p_min = {0.1, 0.2, 0.3};
  const std::vector<std::string> techniques = {"a"};
  const std::vector<Metric> metrics(film::kAggregatedMetrics.begin(),
                                    film::kAggregatedMetrics.end());
  std::vector<film::RunRecord> records;
  for (std::size_t v = 0; v < 3; ++v) {
    std::vector<std::pair<Metric, double>> vals;
    for (Metric m : metrics) vals.emplace_back(m, 0.5);  // constant: weight stays a=1
    records.push_back(make_record(v, 0, "a", vals));
  }
  const auto profile = film::bias_profile(records, p_min, techniques, metrics);
  const auto report = film::uic_score(profile, film::GaussianParams{});
  REQUIRE_THAT(report.entries[0].uic, WithinAbs(4.0, 1e-12));
  REQUIRE(report.winner == "a");
}

TEST_CASE("uic_score masks a fully biased metric") {
  const std::vector<double> p_min = {0.1, 0.2, 0.3};
  const std::vector<std::string> techniques = {"a"};
  const std::vector<Metric> metrics = {Metric::acc, Metric::kappa};
  std::vector<film::RunRecord> records;
  for (std::size_t v = 0; v < 3; ++v)
    records.push_back(make_record(v, 0, "a",
                                  {{Metric::acc, 0.9},          // constant -> weight 1
                                   {Metric::kappa, p_min[v]}}));  // r = 1 -> weight ~ 0
  const auto profile = film::bias_profile(records, p_min, techniques, metrics);
  const auto report = film::uic_score(profile, film::GaussianParams{1.0, 0.0, 0.15});
  REQUIRE_THAT(report.entries[0].uic, WithinAbs(0.9, 1e-9));
}

TEST_CASE("uic is near zero when every metric is fully biased") {
  const std::vector<double> p_min = {0.1, 0.2, 0.3, 0.4};
  const std::vector<std::string> techniques = {"a"};
  const std::vector<Metric> metrics(film::kAggregatedMetrics.begin(),
                                    film::kAggregatedMetrics.end());
  std::vector<film::RunRecord> records;
  for (std::size_t v = 0; v < 4; ++v) {
    std::vector<std::pair<Metric, double>> vals;
    for (std::size_t m = 0; m < metrics.size(); ++m)
      vals.emplace_back(metrics[m], (m % 2 ? 1.0 : -1.0) * p_min[v]);  // |r| = 1 everywhere
    records.push_back(make_record(v, 0, "a", vals));
  }
  const auto profile = film::bias_profile(records, p_min, techniques, metrics);
  const auto report = film::uic_score(profile, film::GaussianParams{1.0, 0.0, 0.15});
  REQUIRE(std::abs(report.entries[0].uic) < 1e-8);
}

TEST_CASE("scaling every technique's metrics preserves the winner") {
  const std::vector<double> p_min = {0.1, 0.2, 0.3};
  const std::vector<std::string> techniques = {"a", "b", "c"};
  const std::vector<Metric> metrics = {Metric::acc, Metric::gmean, Metric::kappa};
  film::Rng rng(73);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<film::RunRecord> records;
    std::vector<std::vector<double>> originals;
    for (const auto& t : techniques) {
      for (std::size_t v = 0; v < 3; ++v) {
        std::vector<std::pair<Metric, double>> vals;
        for (Metric m : metrics) vals.emplace_back(m, rng.real01());
        records.push_back(make_record(v, 0, t, vals));
      }
    }
    const auto profile = film::bias_profile(records, p_min, techniques, metrics);
    const auto base = film::uic_score(profile, film::GaussianParams{});

    std::vector<std::vector<double>> scaled;
    for (std::size_t t = 0; t < techniques.size(); ++t) {
      scaled.push_back({});
      for (std::size_t m = 0; m < metrics.size(); ++m)
        scaled[t].push_back(3.7 * profile.mean_value(t, 0, m));
    }
    const auto scaled_report = film::uic_score(profile, scaled, film::GaussianParams{});
    REQUIRE(scaled_report.winner == base.winner);
    for (std::size_t t = 0; t < techniques.size(); ++t)
      REQUIRE_THAT(scaled_report.entries[t].uic, WithinAbs(3.7 * base.entries[t].uic, 1e-9));
  }
}

TEST_CASE("bias_distance is a Euclidean norm that skips undefined entries") {
  std::vector<std::optional<double>> zeros = {0.0, 0.0, 0.0};
  REQUIRE(film::bias_distance(zeros) == 0.0);
  std::vector<std::optional<double>> pythagoras = {0.6, 0.8};
  REQUIRE_THAT(film::bias_distance(pythagoras), WithinAbs(1.0, 1e-12));
  std::vector<std::optional<double>> with_gap = {0.6, std::nullopt, 0.8};
  std::size_t undefined = 0;
  REQUIRE_THAT(film::bias_distance(with_gap, &undefined), WithinAbs(1.0, 1e-12));
  REQUIRE(undefined == 1);
}

TEST_CASE("wilcoxon rejects all-zero differences") {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};
  REQUIRE(error_code_of([&] { film::wilcoxon_signed_rank(a, a); }) == Errc::too_few);
}

TEST_CASE("wilcoxon exact p for five positive differences") {
  const std::vector<double> a = {2, 3, 4, 5, 6};
  const std::vector<double> b = {1, 1, 1, 1, 1};
  const auto result = film::wilcoxon_signed_rank(a, b);
  REQUIRE(result.exact);
  REQUIRE(result.statistic == 15.0);
  REQUIRE_THAT(result.p_value, WithinAbs(0.0625, 1e-12));
}

TEST_CASE("wilcoxon exact mode matches full enumeration") {
  film::Rng rng(79);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 5 + rng.index(6);  // 5..10 pairs
    std::vector<double> a(n), b(n, 0.0);
    for (auto& v : a) {
      v = std::round((rng.real01() * 2.0 - 1.0) * 4.0) / 2.0;  // ties likely
      if (v == 0.0) v = 0.5;
    }
    const auto result = film::wilcoxon_signed_rank(a, b);

    // independent enumeration: ranks of |d| with average ranks, all 2^n signs
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(a[i]);
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n; ++i) {
      double below = 0, equal = 0;
      for (std::size_t j = 0; j < n; ++j) {
        below += mag[j] < mag[i] ? 1 : 0;
        equal += mag[j] == mag[i] ? 1 : 0;
      }
      ranks[i] = below + (equal + 1.0) / 2.0;
    }
    double w = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (a[i] > 0) w += ranks[i];
    REQUIRE_THAT(result.statistic, WithinAbs(w, 1e-12));

    std::size_t le = 0, ge = 0;
    const std::size_t patterns = 1u << n;
    for (std::size_t mask = 0; mask < patterns; ++mask) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) s += ranks[i];
      le += s <= w ? 1 : 0;
      ge += s >= w ? 1 : 0;
    }
    const double expected =
        std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(patterns));
    REQUIRE_THAT(result.p_value, WithinAbs(expected, 1e-12));
  }
}

TEST_CASE("wilcoxon normal approximation behaves sensibly beyond 25 pairs") {
  std::vector<double> shifted, zeros(30, 0.0);
  film::Rng rng(83);
  for (int i = 0; i < 30; ++i) shifted.push_back(0.5 + rng.real01());
  const auto one_sided = film::wilcoxon_signed_rank(shifted, zeros);
  REQUIRE(!one_sided.exact);
  REQUIRE(one_sided.p_value < 1e-4);

  // swapping the arguments mirrors the statistic but keeps the two-sided p
  const auto mirrored = film::wilcoxon_signed_rank(zeros, shifted);
  REQUIRE_THAT(mirrored.p_value, WithinAbs(one_sided.p_value, 1e-12));

  std::vector<double> balanced;
  for (int i = 0; i < 30; ++i) balanced.push_back(i % 2 ? 1.0 + 0.01 * i : -1.0 - 0.01 * i);
  const auto centred = film::wilcoxon_signed_rank(balanced, zeros);
  REQUIRE(centred.p_value > 0.5);
}

TEST_CASE("bonferroni multiplies and clamps") {
  const std::vector<double> ps = {0.3, 0.001, 0.2};
  const auto adjusted = film::bonferroni(ps, 8);
  REQUIRE(adjusted[0] == 1.0);
  REQUIRE_THAT(adjusted[1], WithinAbs(0.008, 1e-15));
  REQUIRE(adjusted[2] == 1.0);
}
