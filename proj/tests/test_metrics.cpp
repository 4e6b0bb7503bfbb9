#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "ssbd/metrics.hpp"

using namespace ssbd;

TEST_CASE("binary hand case") {
  const std::vector<Index> truth = {1, 1, 0, 0};
  const std::vector<Index> pred = {1, 0, 0, 0};
  const auto r = compute_metrics(truth, pred, 2);

  CHECK(r.accuracy == doctest::Approx(0.75));
  CHECK(r.precision[1] == doctest::Approx(1.0));
  CHECK(r.recall[1] == doctest::Approx(0.5));
  CHECK(r.f1[1] == doctest::Approx(2.0 / 3.0));
  CHECK(r.precision[0] == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall[0] == doctest::Approx(1.0));
  CHECK(r.f1[0] == doctest::Approx(0.8));
  CHECK(r.support[0] == 2);
  CHECK(r.support[1] == 2);
  CHECK(r.macro_f1 == doctest::Approx((0.8 + 2.0 / 3.0) / 2.0));
  CHECK(binary_f1(truth, pred) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("confusion rows are truth and columns are predictions") {
  const std::vector<Index> truth = {0, 0, 1, 2, 2, 2};
  const std::vector<Index> pred = {0, 1, 1, 0, 2, 2};
  const auto r = compute_metrics(truth, pred, 3);

  CHECK(r.confusion(0, 0) == 1);
  CHECK(r.confusion(0, 1) == 1);
  CHECK(r.confusion(1, 1) == 1);
  CHECK(r.confusion(2, 0) == 1);
  CHECK(r.confusion(2, 2) == 2);
  CHECK(r.confusion(1, 0) == 0);
  CHECK(r.confusion.sum() == 6);
  CHECK(r.support[2] == 3);
  CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("macro f1 over actions skips class zero") {
  // Perfect on classes 1 and 2, hopeless on class 0.
  const std::vector<Index> truth = {0, 0, 1, 1, 2, 2, 3, 3};
  const std::vector<Index> pred = {3, 3, 1, 1, 2, 2, 3, 3};
  const auto r = compute_metrics(truth, pred, 4);

  CHECK(r.f1[0] == doctest::Approx(0.0));
  CHECK(r.f1[1] == doctest::Approx(1.0));
  CHECK(r.f1[2] == doctest::Approx(1.0));
  // Class 3: tp=2, fp=2, fn=0 so precision 0.5, recall 1, f1 = 2/3.
  CHECK(r.f1[3] == doctest::Approx(2.0 / 3.0));
  CHECK(r.macro_f1 == doctest::Approx((0.0 + 1.0 + 1.0 + 2.0 / 3.0) / 4.0));
  CHECK(r.macro_f1_actions == doctest::Approx((1.0 + 1.0 + 2.0 / 3.0) / 3.0));
}

TEST_CASE("classes absent from truth and prediction score zero without dividing by zero") {
  const std::vector<Index> truth = {0, 0, 0};
  const std::vector<Index> pred = {0, 0, 0};
  const auto r = compute_metrics(truth, pred, 4);
  CHECK(r.accuracy == doctest::Approx(1.0));
  for (int c = 1; c < 4; ++c) {
    CHECK(r.precision[static_cast<std::size_t>(c)] == 0.0);
    CHECK(r.recall[static_cast<std::size_t>(c)] == 0.0);
    CHECK(r.f1[static_cast<std::size_t>(c)] == 0.0);
    CHECK(r.support[static_cast<std::size_t>(c)] == 0);
  }
  CHECK(r.macro_f1_actions == 0.0);
}

TEST_CASE("metrics input validation") {
  CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 2), LengthMismatch);
  CHECK_THROWS_AS(compute_metrics({}, {}, 2), EmptyInput);
  CHECK_THROWS_AS(compute_metrics({0, 2}, {0, 1}, 2), ShapeMismatch);
  CHECK_THROWS_AS(compute_metrics({0, 1}, {0, -1}, 2), ShapeMismatch);
}

TEST_CASE("metrics serialize with stable keys") {
  const auto r = compute_metrics({1, 1, 0, 0}, {1, 0, 0, 0}, 2);
  const auto j = metrics_to_json(r);
  CHECK(j.at("num_classes").get<Index>() == 2);
  CHECK(j.at("accuracy").get<double>() == doctest::Approx(0.75));
  CHECK(j.at("confusion").size() == 2);
  CHECK(j.at("confusion")[0][0].get<int>() == 2);
  CHECK(j.at("confusion")[1][0].get<int>() == 1);
  CHECK(j.at("f1")[1].get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(j.at("precision").size() == 2);
  CHECK(j.at("recall").size() == 2);
  CHECK(j.at("support")[1].get<Index>() == 2);
  CHECK(j.contains("macro_f1"));
  CHECK(j.contains("macro_f1_actions"));
}
