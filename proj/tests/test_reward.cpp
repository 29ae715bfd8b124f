#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "manipdt/reward.hpp"
#include "manipdt/rng.hpp"

using namespace reward;

TEST_CASE("segment rewards follow the softmax of negated distances") {
  std::vector<double> d{0.5, 0.4, 0.3, 0.2, 0.1};
  std::vector<double> r = training_rewards_fixed(d, 5, 1.0);
  REQUIRE(r.size() == 5);
  // frozen endpoints of the worked example
  CHECK(r[0] == doctest::Approx(0.16212).epsilon(1e-4));
  CHECK(r[4] == doctest::Approx(0.24186).epsilon(1e-4));
  // independent long-double oracle
  long double denom = 0;
  for (double x : d) denom += std::exp((long double)(-x));
  for (size_t i = 0; i < d.size(); ++i)
    CHECK(r[i] == doctest::Approx(double(std::exp((long double)(-d[i])) / denom)).epsilon(1e-12));
  double sum = 0;
  for (double x : r) sum += x;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("every segment contributes exactly alpha") {
  rng::Rng rg(31337);
  for (double alpha : {1.0, 2.5}) {
    for (int trial = 0; trial < 200; ++trial) {
      int n_segs = 1 + int(rg.below(6));
      std::vector<std::pair<int, int>> segs;
      std::vector<double> d;
      for (int s = 0; s < n_segs; ++s) {
        int len = 1 + int(rg.below(9));
        segs.emplace_back(int(d.size()), len);
        for (int i = 0; i < len; ++i) d.push_back(rg.uniform(0.0, 2.0));
      }
      std::vector<double> r = training_rewards(d, segs, alpha);
      for (const auto& [start, len] : segs) {
        double sum = 0;
        for (int i = start; i < start + len; ++i) sum += r[size_t(i)];
        CHECK(std::abs(sum - alpha) <= 1e-12);
      }
      // closer steps earn strictly more within a segment
      for (const auto& [start, len] : segs)
        for (int i = start; i < start + len; ++i)
          for (int j = i + 1; j < start + len; ++j)
            if (d[size_t(i)] < d[size_t(j)]) CHECK(r[size_t(i)] > r[size_t(j)]);
    }
  }
}

TEST_CASE("reward labeling rejects gaps, overlaps, and bad lengths") {
  std::vector<double> d{0.1, 0.2, 0.3, 0.4};
  CHECK_THROWS_AS((void)training_rewards(d, {{0, 2}, {1, 3}}, 1.0), Error);   // overlap
  CHECK_THROWS_AS((void)training_rewards(d, {{0, 2}}, 1.0), Error);          // gap
  CHECK_THROWS_AS((void)training_rewards(d, {{0, 5}}, 1.0), Error);          // out of range
  CHECK_THROWS_AS((void)training_rewards_fixed(d, 3, 1.0), Error);           // 4 % 3 != 0
  CHECK_THROWS_AS((void)training_rewards_fixed(d, 0, 1.0), Error);
  CHECK_THROWS_AS((void)initial_rtg(1.0, 0), Error);
  CHECK(initial_rtg(1.0, 6) == 6.0);
  CHECK(initial_rtg(0.5, 4) == 2.0);
}

TEST_CASE("return-to-go sequences are prefix differences off the initial value") {
  std::vector<double> r{0.2, 0.3, 0.1, 0.4};
  std::vector<double> seq = rtg_sequence(2.0, r);
  REQUIRE(seq.size() == 5);
  CHECK(seq[0] == 2.0);
  double cum = 0;
  for (size_t k = 0; k < r.size(); ++k) {
    cum += r[k];
    CHECK(seq[k + 1] == 2.0 - cum);  // bitwise: same fold order
  }
}

// ---- streaming ledger ----

TEST_CASE("worked block: one regression mid-block settles the debt evenly") {
  RtgLedger led({1.0, 0.04, 5, 20}, 6);
  CHECK(led.rtg() == 6.0);
  std::vector<double> d{0.8, 0.7, 0.75, 0.6, 0.5};
  std::vector<double> want{0.2, 0.2, 0.16, 0.22, 0.22};
  for (size_t i = 0; i < d.size(); ++i) {
    double r = led.on_step(d[i]);
    CHECK(r == doctest::Approx(want[i]).epsilon(1e-12));
  }
  double block = 0;
  for (double w : want) block += w;
  CHECK(block == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(led.rtg() == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("a regression on the block's last step schedules nothing") {
  RtgLedger led({1.0, 0.04, 5, 20}, 2);
  std::vector<double> d{0.5, 0.4, 0.3, 0.2, 0.9};
  std::vector<double> r;
  for (double x : d) r.push_back(led.on_step(x));
  CHECK(r[4] == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(!led.override_pending());
  // next step is a block start: the remaining debt spreads over a fresh block
  double r6 = led.on_step(0.8);
  CHECK(r6 == doctest::Approx((1.0 - 0.96) / 5.0).epsilon(1e-12));
  CHECK(led.block_index() == 1);
}

TEST_CASE("a pending override beats the repeat/penalty rules") {
  RtgLedger led({1.0, 0.04, 5, 20}, 2);
  led.on_step(0.8);             // 0.2
  double r2 = led.on_step(0.9); // regression: 0.16, override (1-0.36)/3 pending
  CHECK(r2 == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(led.override_pending());
  double r3 = led.on_step(1.0); // regressed again, but the override wins
  CHECK(r3 == doctest::Approx((1.0 - 0.36) / 3.0).epsilon(1e-12));
  CHECK(!led.override_pending());
  double r4 = led.on_step(0.9); // closer than last step: repeat
  CHECK(r4 == r3);
}

TEST_CASE("a regression right before the block end settles in one step") {
  RtgLedger led({1.0, 0.04, 5, 20}, 1);
  std::vector<double> d{0.5, 0.4, 0.3, 0.9, 0.85};
  std::vector<double> r;
  for (double x : d) r.push_back(led.on_step(x));
  CHECK(r[3] == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(r[4] == doctest::Approx(0.24).epsilon(1e-12));  // (1 - 0.76) / 1
  double sum = 0;
  for (double x : r) sum += x;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("later blocks share out the subgoal's remaining debt") {
  RtgLedger led({1.0, 0.04, 5, 20}, 3);
  for (double x : {0.5, 0.4, 0.3, 0.2, 0.1}) led.on_step(x);
  // block 0 paid everything; block 1 opens with zero share
  double r6 = led.on_step(0.5);
  CHECK(r6 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(led.block_index() == 1);

  // fresh ledger: underpaid first block (regression at its last step)
  RtgLedger led2({1.0, 0.04, 5, 20}, 3);
  for (double x : {0.5, 0.4, 0.3, 0.2, 0.9}) led2.on_step(x);
  double paid = 0.2 * 4 + 0.16;
  double r6b = led2.on_step(0.8);
  CHECK(r6b == doctest::Approx((1.0 - paid) / 5.0).epsilon(1e-12));
}

TEST_CASE("advancing a subgoal resets block accounting and history") {
  RtgLedger led({1.0, 0.04, 5, 20}, 2);
  for (double x : {0.5, 0.4, 0.3}) led.on_step(x);
  CHECK(led.steps_in_subgoal() == 3);
  led.advance_subgoal();
  CHECK(led.steps_in_subgoal() == 0);
  // first step of the new subgoal is a block start even at higher distance
  double r = led.on_step(3.0);
  CHECK(r == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(led.block_index() == 0);
  CHECK(led.steps_total() == 4);
}

TEST_CASE("the step budget overflows after h steps without an advance") {
  RtgLedger led({1.0, 0.04, 5, 20}, 1);
  for (int i = 0; i < 20; ++i) CHECK_NOTHROW((void)led.on_step(0.5));
  try {
    led.on_step(0.5);
    FAIL("expected BlockOverflow");
  } catch (const Error& e) {
    CHECK(e.kind == Error::Kind::BlockOverflow);
  }
  // an advance resets the budget
  led.advance_subgoal();
  CHECK_NOTHROW((void)led.on_step(0.5));
}

TEST_CASE("ledger parameters are validated") {
  CHECK_THROWS_AS(RtgLedger({1.0, 0.04, 5, 18}, 1), Error);   // h not a multiple of n
  CHECK_THROWS_AS(RtgLedger({1.0, 0.04, 0, 20}, 1), Error);
  CHECK_THROWS_AS(RtgLedger({-1.0, 0.04, 5, 20}, 1), Error);
}

TEST_CASE("first-block regressions away from the block end conserve alpha") {
  // scoped conservation: when every regression lands in the first block of a
  // subgoal and never on a block's final step, the subgoal's emitted rewards
  // total alpha once a block completes cleanly
  rng::Rng rg(777);
  for (int trial = 0; trial < 300; ++trial) {
    int n = 4 + int(rg.below(4));  // 4..7
    int blocks = 1 + int(rg.below(3));
    RtgLedger led({1.0, 0.04, n, n * 4}, 1);
    double total = 0;
    double d = 1.0;
    for (int b = 0; b < blocks; ++b) {
      for (int s = 1; s <= n; ++s) {
        bool regress = b == 0 && s >= 2 && s <= n - 1 && rg.uniform() < 0.35;
        d = regress ? d + rg.uniform(0.01, 0.2) : std::max(0.0, d - rg.uniform(0.0, 0.1));
        total += led.on_step(d);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("the exposed return-to-go is exactly the initial value minus a left fold") {
  rng::Rng rg(2025);
  for (int trial = 0; trial < 50; ++trial) {
    int L = 1 + int(rg.below(6));
    RtgLedger led({1.0, 0.04, 5, 20}, L);
    double fold = 0;
    double rtg0 = led.rtg();
    double d = 2.0;
    for (int t = 0; t < 40; ++t) {
      if (rg.uniform() < 0.15) {
        led.advance_subgoal();
        d = 2.0;
      }
      d = std::max(0.0, d + rg.uniform(-0.1, 0.08));
      double r;
      try {
        r = led.on_step(d);
      } catch (const Error&) {
        break;  // budget blown in this random walk; identity held up to here
      }
      fold += r;
      CHECK(led.rtg() == rtg0 - fold);  // bitwise identity, no tolerance
      CHECK(led.cumulative() == fold);
    }
  }
}
