#include <doctest.h>

#include "fer4d/collaboration.hpp"
#include "fer4d/error.hpp"
#include "properties.hpp"

using namespace fer4d;

namespace {

Dataset corpus(int subjects) {
  Dataset ds;
  for (int s = 0; s < subjects; ++s) {
    for (int l = 1; l <= kNumClasses; ++l) ds.sequences.push_back({"S" + std::to_string(s), l, {}});
  }
  return ds;
}

}  // namespace

TEST_CASE("collaborate: view order does not matter, empty view set rejected") {
  ScoreTensor a(1, 3), b(1, 3);
  const Probabilities p{0.5, 0.1, 0.1, 0.1, 0.1, 0.1}, q{0.0, 1.0, 0, 0, 0, 0}, r{0.2, 0.2, 0.2, 0.2, 0.1, 0.1};
  a.at(0, 0) = p, a.at(0, 1) = q, a.at(0, 2) = r;
  b.at(0, 0) = r, b.at(0, 1) = p, b.at(0, 2) = q;
  const auto ca = collaborate(a).front(), cb = collaborate(b).front();
  for (int l = 0; l < kNumClasses; ++l) CHECK(ca[l] == doctest::Approx(cb[l]).epsilon(1e-15));
  try {
    collaborate(ScoreTensor(2, 0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Domain);
  }
}

TEST_CASE("collaboration laws") {
  const auto r = props::collaboration_laws(10000, 23);
  INFO(r.detail);
  CHECK(r.ok);
}

TEST_CASE("evaluate: perfect, constant and hand-tallied predictions") {
  std::vector<int> truth;
  for (int i = 0; i < 12; ++i) truth.push_back(1 + i % 6);
  const auto perfect = evaluate(truth, truth);
  CHECK(perfect.accuracy == 1.0);
  for (int t = 0; t < 6; ++t) {
    for (int p = 0; p < 6; ++p) CHECK(perfect.confusion[t][p] == (t == p ? 2u : 0u));
    CHECK(perfect.recall[t] == 1.0);
  }

  const std::vector<int> ones(12, 1);
  CHECK(evaluate(ones, truth).accuracy == doctest::Approx(1.0 / 6.0));

  // Two errors: one fear scored as surprise, one sadness as anger.
  std::vector<int> pred = truth;
  pred[2] = 6;
  pred[10] = 1;
  REQUIRE(truth[2] == 3);
  REQUIRE(truth[10] == 5);
  const auto r = evaluate(pred, truth);
  CHECK(r.total == 12);
  CHECK(r.accuracy == doctest::Approx(10.0 / 12.0));
  CHECK(r.confusion[2][5] == 1);
  CHECK(r.confusion[4][0] == 1);
  CHECK(r.confusion[2][2] == 1);
  CHECK(r.recall[2] == 0.5);
  CHECK(r.recall[0] == 1.0);
  std::uint64_t trace = 0, total = 0;
  for (int t = 0; t < 6; ++t) {
    std::uint64_t row = 0;
    for (int p = 0; p < 6; ++p) row += r.confusion[t][p], total += r.confusion[t][p];
    CHECK(row == 2);
    trace += r.confusion[t][t];
  }
  CHECK(trace == 10);
  CHECK(total == 12);
}

TEST_CASE("evaluate: length mismatch and bad labels") {
  const std::vector<int> a{1, 2}, b{1}, c{1, 9};
  try {
    evaluate(a, b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Shape);
  }
  CHECK_THROWS_AS(evaluate(c, a), Error);
}

TEST_CASE("kfold_split: one subject per fold when k equals the subject count") {
  const auto ds = corpus(10);
  const auto folds = kfold_split(ds, 10, 4);
  REQUIRE(folds.size() == 10);
  for (const auto& f : folds) {
    CHECK(f.test_subjects.size() == 1);
    CHECK(f.test.size() == 6);
    CHECK(f.train.size() == 54);
  }
  CHECK_NOTHROW(check_subject_independence(ds, folds));
}

TEST_CASE("kfold_split: deterministic under a seed, errors on too few subjects") {
  const auto ds = corpus(7);
  const auto a = kfold_split(ds, 3, 11), b = kfold_split(ds, 3, 11);
  for (std::size_t f = 0; f < a.size(); ++f) CHECK(a[f].test == b[f].test);
  try {
    kfold_split(corpus(3), 4, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
  }
  CHECK_THROWS_AS(kfold_split(ds, 1, 0), Error);
}

TEST_CASE("check_subject_independence flags leaks") {
  const auto ds = corpus(4);
  auto folds = kfold_split(ds, 2, 0);
  folds[0].train.push_back(folds[0].test.front());
  CHECK_THROWS_AS(check_subject_independence(ds, folds), Error);
}

TEST_CASE("report CSVs") {
  std::vector<int> truth{1, 2, 3, 4, 5, 6};
  const auto r = evaluate(truth, truth);
  const auto csv = confusion_csv(r);
  CHECK(csv.rfind("truth\\predicted,anger,disgust,fear,happiness,sadness,surprise\n", 0) == 0);
  CHECK(csv.find("\nsurprise,0,0,0,0,0,1\n") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  const std::vector<double> acc{0.5, 1.0};
  CHECK(fold_accuracy_csv(acc) == "fold,accuracy\n0,0.5\n1,1\n");
}
