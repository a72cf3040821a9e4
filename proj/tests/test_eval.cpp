#include <doctest.h>

#include <cmath>

#include "copush/error.hpp"
#include "copush/eval.hpp"
#include "copush/rng.hpp"

using namespace copush;

namespace {

TrialLog blank_log(std::size_t n, const std::string& condition = "dry") {
  TrialLog log;
  log.condition = condition;
  log.scenario_id = "test";
  for (std::size_t i = 0; i < n; ++i) {
    log.t.push_back(i * 0.01);
    log.box_x.push_back(0.0);
    log.box_v.push_back(0.0);
    log.f_h_x.push_back(0.0);
    log.f_h_norm.push_back(0.0);
    log.f_r_x.push_back(0.0);
    log.f_d_x.push_back(0.0);
    log.u_x.push_back(0.0);
    log.intent_raw.push_back(0);
    log.intent_filtered.push_back(0);
  }
  return log;
}

// symmetric velocity bump of given sign over samples [start, start+len)
void add_bump(TrialLog& log, std::size_t start, std::size_t len, double sign, double peak_force) {
  for (std::size_t i = 0; i < len; ++i) {
    const double s = std::sin(3.14159265358979 * static_cast<double>(i) / (len - 1));
    log.box_v[start + i] = sign * 0.1 * s;
    log.f_h_norm[start + i] = peak_force * s;
  }
}

}  // namespace

TEST_CASE("trim_forces keeps samples at or above 15 N") {
  auto log = blank_log(300);

  SUBCASE("all zero forces trim away") {
    CHECK(trim_forces(log).index.empty());
  }

  SUBCASE("constant 20 N for 2 s keeps 200 samples") {
    for (std::size_t i = 50; i < 250; ++i) log.f_h_norm[i] = 20.0;
    CHECK(trim_forces(log).index.size() == 200);
  }

  SUBCASE("the threshold itself is retained") {
    log.f_h_norm[10] = std::sqrt(9.0 * 9.0 + 12.0 * 12.0);  // 15 exactly
    log.f_h_norm[11] = 14.999;
    const auto trimmed = trim_forces(log);
    CHECK(trimmed.index == std::vector<std::size_t>{10});
  }

  SUBCASE("raising the threshold never retains more") {
    Rng rng(2);
    for (auto& v : log.f_h_norm) v = rng.uniform(0.0, 40.0);
    std::size_t prev = log.size();
    for (double thr : {5.0, 10.0, 15.0, 20.0, 30.0}) {
      const auto n = trim_forces(log, thr).index.size();
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("segment_actions splits velocity runs") {
  SUBCASE("stationary log yields nothing") {
    CHECK(segment_actions(blank_log(500)).empty());
  }

  SUBCASE("five pulls and five pushes alternate") {
    auto log = blank_log(5000);
    for (int k = 0; k < 10; ++k) {
      add_bump(log, 200 + k * 450, 150, k % 2 == 0 ? 1.0 : -1.0, 40.0);
    }
    const auto records = segment_actions(log);
    REQUIRE(records.size() == 10);
    for (int k = 0; k < 10; ++k) {
      CHECK(records[k].kind ==
            (k % 2 == 0 ? IntentionClass::Pull : IntentionClass::Push));
    }
  }

  SUBCASE("same-sign bursts 0.1 s apart merge") {
    auto log = blank_log(1000);
    add_bump(log, 100, 80, 1.0, 30.0);
    add_bump(log, 190, 80, 1.0, 30.0);  // 10-sample gap
    CHECK(segment_actions(log).size() == 1);
  }

  SUBCASE("opposite-sign bursts stay separate") {
    auto log = blank_log(1000);
    add_bump(log, 100, 80, 1.0, 30.0);
    add_bump(log, 190, 80, -1.0, 30.0);
    CHECK(segment_actions(log).size() == 2);
  }

  SUBCASE("every moving sample lands in exactly one record") {
    Rng rng(5);
    auto log = blank_log(4000);
    for (int k = 0; k < 6; ++k) {
      add_bump(log, 300 + k * 550, 100 + 40 * (k % 3), k % 2 ? 1.0 : -1.0, 25.0);
    }
    const auto records = segment_actions(log);
    for (std::size_t i = 0; i < log.size(); ++i) {
      if (std::abs(log.box_v[i]) <= kDefaultVDead) continue;
      int owners = 0;
      for (const auto& r : records) {
        if (log.t[i] >= r.start_time && log.t[i] <= r.end_time) ++owners;
      }
      CHECK(owners == 1);
    }
  }
}

TEST_CASE("effort statistics") {
  SUBCASE("rectangle: constant 30 N for 2 s") {
    auto log = blank_log(201);
    for (std::size_t i = 0; i < 201; ++i) {
      log.box_v[i] = 0.1;  // one long action covering the whole log
      log.f_h_norm[i] = 30.0;
    }
    const auto records = segment_actions(log);
    REQUIRE(records.size() == 1);
    CHECK(records[0].mean_force == doctest::Approx(30.0));
    CHECK(records[0].cumulative_force == doctest::Approx(60.0));
    CHECK(records[0].peak_force == doctest::Approx(30.0));

    const auto stats = effort_stats(records);
    CHECK(stats.mean_of_means == doctest::Approx(30.0));
    CHECK(stats.mean_std == 0.0);
  }

  SUBCASE("identical records have zero spread") {
    std::vector<ActionRecord> records(2);
    records[0].mean_force = records[1].mean_force = 25.0;
    records[0].cumulative_force = records[1].cumulative_force = 50.0;
    const auto stats = effort_stats(records);
    CHECK(stats.mean_std == 0.0);
    CHECK(stats.cumulative_std == 0.0);
  }

  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(effort_stats({}), ValidationError);
  }

  SUBCASE("halving speed at equal force doubles the cumulative effort") {
    auto fast = blank_log(2000);
    auto slow = blank_log(2000);
    add_bump(fast, 100, 200, 1.0, 40.0);
    add_bump(slow, 100, 400, 1.0, 40.0);
    const auto ef = effort_stats(segment_actions(fast));
    const auto es = effort_stats(segment_actions(slow));
    CHECK(es.cumulative_mean / ef.cumulative_mean == doctest::Approx(2.0).epsilon(0.25));
  }
}

TEST_CASE("pull/push efforts agree on a mirror-symmetric trial") {
  auto log = blank_log(3000);
  add_bump(log, 400, 200, 1.0, 50.0);
  add_bump(log, 1400, 200, -1.0, 50.0);
  const auto records = segment_actions(log);
  REQUIRE(records.size() == 2);
  CHECK(std::abs(records[0].mean_force - records[1].mean_force) < 1e-9);
  CHECK(std::abs(records[0].cumulative_force - records[1].cumulative_force) < 1e-9);
}

TEST_CASE("lead time measures intention ahead of force") {
  auto log = blank_log(2000, "assisted");
  add_bump(log, 500, 200, -1.0, 40.0);  // push action; force crosses 15 N inside the bump
  // force reaches 15 N at the first sample where 40*sin(...) >= 15
  std::size_t crossing = 0;
  for (std::size_t i = 500; i < 700; ++i) {
    if (log.f_h_norm[i] >= 15.0) {
      crossing = i;
      break;
    }
  }
  REQUIRE(crossing > 0);

  SUBCASE("intention 0.5 s ahead") {
    for (std::size_t i = crossing - 50; i < 750; ++i) log.intent_filtered[i] = 1;  // push
    const auto leads = lead_time(log);
    REQUIRE(leads.per_action.size() == 1);
    CHECK(leads.per_action[0] == doctest::Approx(0.5));
    CHECK(leads.skipped == 0);
  }

  SUBCASE("simultaneous detection gives zero lead") {
    for (std::size_t i = crossing; i < 750; ++i) log.intent_filtered[i] = 1;
    const auto leads = lead_time(log);
    REQUIRE(leads.per_action.size() == 1);
    CHECK(leads.per_action[0] == 0.0);
  }

  SUBCASE("actions without a matching intention are skipped") {
    const auto leads = lead_time(log);
    CHECK(leads.per_action.empty());
    CHECK(leads.skipped == 1);
  }
}

TEST_CASE("welch t-test") {
  SUBCASE("identical samples") {
    const std::vector<double> a = {1.0, 2.0, 3.0};
    const auto r = welch_t_test(a, a);
    CHECK(r.t == 0.0);
    CHECK(r.p == 1.0);
  }

  SUBCASE("reference pair from an independent implementation") {
    const auto r = welch_t_test({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
    CHECK(r.t == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(r.dof == doctest::Approx(8.0).epsilon(1e-9));
    CHECK(r.p == doctest::Approx(0.34659350708733416).epsilon(1e-9));
  }

  SUBCASE("well-separated samples are significant") {
    Rng rng(3);
    std::vector<double> a, b;
    for (int i = 0; i < 10; ++i) {
      a.push_back(rng.normal(10.0, 1.0));
      b.push_back(rng.normal(50.0, 1.0));
    }
    CHECK(welch_t_test(a, b).p < 1e-6);
  }

  SUBCASE("degenerate inputs are rejected") {
    CHECK_THROWS_AS(welch_t_test({1.0}, {1.0, 2.0}), ValidationError);
    CHECK_THROWS_AS(welch_t_test({2.0, 2.0}, {3.0, 3.0}), ValidationError);
  }
}

TEST_CASE("regularized incomplete beta sanity") {
  CHECK(reg_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(reg_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1, 1) = x
  CHECK(reg_incomplete_beta(1.0, 1.0, 0.37) == doctest::Approx(0.37).epsilon(1e-12));
  // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
  CHECK(reg_incomplete_beta(2.5, 4.0, 0.3) ==
        doctest::Approx(1.0 - reg_incomplete_beta(4.0, 2.5, 0.7)).epsilon(1e-12));
  CHECK_THROWS_AS(reg_incomplete_beta(-1.0, 1.0, 0.5), ValidationError);
  CHECK_THROWS_AS(reg_incomplete_beta(1.0, 1.0, 1.5), ValidationError);
}

TEST_CASE("classification metrics") {
  SUBCASE("perfect predictions") {
    const std::vector<int> labels = {-1, 0, 1, -1, 0, 1};
    const auto m = classification_metrics(labels, labels);
    CHECK(m.accuracy == 1.0);
    CHECK(m.balanced_accuracy == 1.0);
    CHECK(m.confusion(0, 0) == 2);
    CHECK(m.confusion(1, 1) == 2);
    CHECK(m.confusion(2, 2) == 2);
  }

  SUBCASE("all-idle predictor on the dataset mix") {
    std::vector<int> labels, preds;
    for (int i = 0; i < 645; ++i) labels.push_back(0);
    for (int i = 0; i < 180; ++i) labels.push_back(-1);
    for (int i = 0; i < 175; ++i) labels.push_back(1);
    preds.assign(labels.size(), 0);
    const auto m = classification_metrics(preds, labels);
    CHECK(m.accuracy == doctest::Approx(0.645));
    CHECK(m.balanced_accuracy == doctest::Approx(1.0 / 3.0));
  }

  SUBCASE("partial credit arithmetic") {
    // one class half right, the others perfect
    const std::vector<int> labels = {-1, -1, -1, -1, 0, 0, 1, 1};
    const std::vector<int> preds = {-1, -1, 0, 0, 0, 0, 1, 1};
    const auto m = classification_metrics(preds, labels);
    CHECK(m.balanced_accuracy == doctest::Approx((0.5 + 1.0 + 1.0) / 3.0));
  }

  SUBCASE("absent classes are excluded and reported") {
    const std::vector<int> labels = {0, 0, 0, 0};
    const std::vector<int> preds = {0, 0, 1, 0};
    const auto m = classification_metrics(preds, labels);
    CHECK(m.balanced_accuracy == doctest::Approx(0.75));
    CHECK(m.excluded_classes == std::vector<int>{-1, 1});
  }

  SUBCASE("balanced accuracy equals accuracy on balanced labels") {
    Rng rng(11);
    std::vector<int> labels, preds;
    for (int c = -1; c <= 1; ++c) {
      for (int i = 0; i < 50; ++i) {
        labels.push_back(c);
        preds.push_back(static_cast<int>(rng.integer(3)) - 1);
      }
    }
    // shuffle pairs together
    const auto m = classification_metrics(preds, labels);
    // expectation only holds exactly when per-class counts are equal and the
    // predictor is label-independent per class; with equal counts it reduces
    // to the mean of per-class accuracies = overall accuracy
    CHECK(m.balanced_accuracy == doctest::Approx(m.accuracy).epsilon(1e-12));
  }

  SUBCASE("length mismatch is an error") {
    CHECK_THROWS_AS(classification_metrics({0, 1}, {0}), ValidationError);
  }
}
