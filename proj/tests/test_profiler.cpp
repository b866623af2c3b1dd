#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "fedsim/features.hpp"
#include "fedsim/ols.hpp"
#include "fedsim/pa.hpp"
#include "fedsim/profiler.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

DeviceFeatures random_features(Rng& rng) {
  DeviceFeatures f;
  f.avail_mem = rng.uniform(1.0, 8.0);
  f.total_mem = 8.0;
  f.temperature = rng.uniform(20.0, 40.0);
  f.cpu_freq_sum = rng.uniform(2.0, 8.0);
  f.energy_per_cpu_time = rng.uniform(0.01, 0.03);
  return f;
}

// Linear ground-truth cost model used by the integration tests (exact, no noise).
double true_alpha_time(const DeviceFeatures& f) {
  return 0.02 + 0.01 * f.cpu_freq_sum + 0.002 * f.temperature;
}
double true_alpha_energy(const DeviceFeatures& f) {
  return 0.002 + 0.3 * f.energy_per_cpu_time + 0.0001 * f.cpu_freq_sum;
}

std::vector<ObservationRow> linear_fleet_log(std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ObservationRow> log;
  log.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    ObservationRow row;
    row.device_model = "train-" + std::to_string(i % 5);
    row.features = random_features(rng);
    row.n = static_cast<double>(1 + rng.below(200));
    row.t = true_alpha_time(row.features) * row.n;
    row.e = true_alpha_energy(row.features) * row.n;
    log.push_back(row);
  }
  return log;
}

}  // namespace

TEST_CASE("feature vectors expose the intercept and the energy-only column") {
  DeviceFeatures f{1.0, 2.0, 3.0, 4.0, 5.0};
  const auto xt = feature_vector(f, PredKind::time);
  REQUIRE(xt == std::vector<double>{1.0, 2.0, 3.0, 4.0, 1.0});
  const auto xe = feature_vector(f, PredKind::energy);
  REQUIRE(xe == std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0, 1.0});
}

TEST_CASE("feature scaler standardizes varying columns and passes constants through") {
  FeatureScaler s;
  s.fit({{1.0, 2.0, 1.0}, {3.0, 2.0, 1.0}});
  // col 0: mean 2, population sd 1; col 1 and the intercept are constant.
  CHECK(s.transform({1.0, 2.0, 1.0}) == std::vector<double>{-1.0, 2.0, 1.0});
  CHECK(s.transform({3.0, 2.0, 1.0}) == std::vector<double>{1.0, 2.0, 1.0});
  CHECK(s.transform({2.0, 7.0, 1.0}) == std::vector<double>{0.0, 7.0, 1.0});

  SECTION("input validation") {
    FeatureScaler unfitted;
    CHECK_THROWS_AS(unfitted.transform({1.0}), std::logic_error);
    CHECK_THROWS_AS(unfitted.fit({}), std::invalid_argument);
    CHECK_THROWS_AS(s.transform({1.0, 2.0}), std::invalid_argument);
    FeatureScaler ragged;
    CHECK_THROWS_AS(ragged.fit({{1.0, 2.0}, {1.0}}), std::invalid_argument);
  }
}

TEST_CASE("passive-aggressive update lands exactly epsilon away from the target") {
  SECTION("underprediction, hand-worked") {
    // pred = 0, loss = |1-0| - 0.1 = 0.9, step = 0.9/2, theta -> [0.45, 0.45].
    PaModel m{{0.0, 0.0}, 0.1};
    const double loss = pa_update(m, {1.0, 1.0}, 1.0);
    CHECK(loss == Catch::Approx(0.9).margin(1e-15));
    CHECK(m.theta[0] == Catch::Approx(0.45).margin(1e-15));
    CHECK(m.theta[1] == Catch::Approx(0.45).margin(1e-15));
    CHECK(std::abs(pa_predict(m, {1.0, 1.0}) - 1.0) == Catch::Approx(0.1).margin(1e-15));
  }

  SECTION("overprediction, hand-worked") {
    // pred = 2, loss = 0.9, step = 0.9/4, theta -> [1 - 0.45, 0] = [0.55, 0].
    PaModel m{{1.0, 0.0}, 0.1};
    pa_update(m, {2.0, 0.0}, 1.0);
    CHECK(m.theta[0] == Catch::Approx(0.55).margin(1e-15));
    CHECK(m.theta[1] == 0.0);
    CHECK(pa_predict(m, {2.0, 0.0}) == Catch::Approx(1.1).margin(1e-15));
  }

  SECTION("inside the dead zone the model is bitwise untouched") {
    PaModel m{{0.5, 0.45}, 0.1};
    const auto before = m.theta;
    CHECK(pa_update(m, {1.0, 1.0}, 1.0) == 0.0);  // pred 0.95, |err| = 0.05 < 0.1
    CHECK(m.theta == before);
  }

  SECTION("full-correction property over random cases") {
    Rng rng(2024);
    for (int c = 0; c < 1000; ++c) {
      const std::size_t d = 1 + rng.below(6);
      PaModel m;
      m.epsilon = rng.uniform(1e-6, 0.5);
      std::vector<double> x(d);
      for (std::size_t i = 0; i < d; ++i) {
        m.theta.push_back(rng.normal(0.0, 1.0));
        x[i] = rng.normal(0.0, 1.0);
        if (x[i] == 0.0) x[i] = 0.5;
      }
      const double target = rng.normal(0.0, 3.0);
      const double before = std::abs(pa_predict(m, x) - target);
      const double loss = pa_update(m, x, target);
      const double after = std::abs(pa_predict(m, x) - target);
      if (before > m.epsilon) {
        REQUIRE(loss > 0.0);
        REQUIRE(after == Catch::Approx(m.epsilon).margin(1e-12));
      } else {
        REQUIRE(loss == 0.0);
        REQUIRE(after == before);
      }
    }
  }

  SECTION("input validation") {
    PaModel m{{1.0, 1.0}, 0.1};
    CHECK_THROWS_AS(pa_update(m, {0.0, 0.0}, 5.0), std::invalid_argument);
    CHECK_THROWS_AS(pa_predict(m, {1.0}), std::invalid_argument);
    PaModel bad{{1.0}, -0.1};
    CHECK_THROWS_AS(pa_update(bad, {1.0}, 5.0), std::invalid_argument);
  }
}

TEST_CASE("least squares recovers planted linear models") {
  SECTION("exact recovery with an intercept column") {
    Rng rng(7);
    const std::vector<double> truth{0.3, -1.2, 2.5, 0.07};
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 60; ++i) {
      std::vector<double> row{rng.normal(), rng.normal(), rng.normal(), 1.0};
      y.push_back(dot(row, truth));
      X.push_back(std::move(row));
    }
    const auto theta = ols_fit(X, y);
    for (std::size_t j = 0; j < truth.size(); ++j)
      CHECK(theta[j] == Catch::Approx(truth[j]).margin(1e-6));
  }

  SECTION("one-dimensional closed form") {
    // theta = sum(x*y) / (sum(x^2) + ridge), computed independently here.
    const std::vector<std::vector<double>> X{{1.0}, {2.0}, {3.0}};
    const std::vector<double> y{2.1, 3.9, 6.2};
    const double ridge = 1e-8;
    const double expected =
        (1.0 * 2.1 + 2.0 * 3.9 + 3.0 * 6.2) / (1.0 + 4.0 + 9.0 + ridge);
    CHECK(ols_fit(X, y, ridge)[0] == Catch::Approx(expected).margin(1e-12));
  }

  SECTION("two-dimensional closed form via explicit 2x2 inverse") {
    const std::vector<std::vector<double>> X{{1.0, 1.0}, {2.0, 1.0}, {4.0, 1.0}, {5.0, 1.0}};
    const std::vector<double> y{1.2, 1.9, 4.1, 5.2};
    const double r = 1e-8;
    double sxx = 0.0, sx = 0.0, sxy = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      sxx += X[i][0] * X[i][0];
      sx += X[i][0];
      sxy += X[i][0] * y[i];
      sy += y[i];
    }
    const double a11 = sxx + r, a12 = sx, a22 = static_cast<double>(X.size()) + r;
    const double det = a11 * a22 - a12 * a12;
    const double t0 = (a22 * sxy - a12 * sy) / det;
    const double t1 = (a11 * sy - a12 * sxy) / det;
    const auto theta = ols_fit(X, y, r);
    CHECK(theta[0] == Catch::Approx(t0).margin(1e-9));
    CHECK(theta[1] == Catch::Approx(t1).margin(1e-9));
  }

  SECTION("ridge keeps exactly collinear designs solvable") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 1; i <= 8; ++i) {
      X.push_back({static_cast<double>(i), 2.0 * i});
      y.push_back(3.0 * i);
    }
    const auto theta = ols_fit(X, y, 1e-8);
    for (std::size_t i = 0; i < X.size(); ++i)
      CHECK(dot(X[i], theta) == Catch::Approx(y[i]).margin(1e-3));
  }

  SECTION("input validation") {
    CHECK_THROWS_AS(ols_fit({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(ols_fit({{1.0}}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(ols_fit({{1.0}, {1.0, 2.0}}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(ols_fit({{1.0}}, {1.0}, -1.0), std::invalid_argument);
  }
}

TEST_CASE("through-origin fit matches the closed form") {
  // theta = sum(n*t)/sum(n^2): (100*1 + 200*2) / (100^2 + 200^2) = 500/50000.
  CHECK(through_origin_fit({{100.0, 1.0}, {200.0, 2.0}}) == Catch::Approx(0.01).margin(1e-15));
  CHECK(through_origin_fit({{50.0, 1.0}}) == Catch::Approx(0.02).margin(1e-15));
  CHECK_THROWS_AS(through_origin_fit({}), std::invalid_argument);
  CHECK_THROWS_AS(through_origin_fit({{0.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("folklore profiler sizes batches from a single shared coefficient") {
  FolkloreProfiler fp;
  CHECK_THROWS_AS(fp.alpha(PredKind::time), std::logic_error);
  fp.observe(100.0, 1.0, 0.1);  // alpha_t = 0.01, alpha_e = 0.001
  CHECK(fp.alpha(PredKind::time) == Catch::Approx(0.01).margin(1e-15));
  CHECK(fp.alpha(PredKind::energy) == Catch::Approx(0.001).margin(1e-15));
  CHECK(fp.predict_bound(3.0, 1e9) == 300);   // time-bound
  CHECK(fp.predict_bound(3.0, 0.2) == 200);   // energy becomes the binding SLO
  CHECK_THROWS_AS(fp.predict_bound(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(fp.predict_bound(1.0, -1.0), std::invalid_argument);

  FolkloreProfiler slow;
  slow.observe(1.0, 5.0, 5.0);  // alpha_t = 5 s/sample
  CHECK(slow.predict_bound(3.0, 1e9) == 1);  // floor(0.6) clamped up to one sample
}

TEST_CASE("profiler cold model recovers a linear fleet exactly") {
  SloProfiler prof;
  CHECK_FALSE(prof.pretrained());
  CHECK_THROWS_AS(prof.predict_bound("x", DeviceFeatures{}, 3.0, 1e9), std::logic_error);
  CHECK_THROWS_AS(prof.observe("x", DeviceFeatures{}, 1.0, 1.0, 1.0), std::logic_error);
  CHECK_THROWS_AS(prof.pretrain({}), std::invalid_argument);

  prof.pretrain(linear_fleet_log(80, 11));
  REQUIRE(prof.pretrained());
  CHECK(prof.log_size() == 80);

  Rng rng(99);
  for (int i = 0; i < 20; ++i) {
    const auto f = random_features(rng);
    CHECK(prof.predict_alpha(PredKind::time, "unseen-model", f) ==
          Catch::Approx(true_alpha_time(f)).margin(1e-6));
    CHECK(prof.predict_alpha(PredKind::energy, "unseen-model", f) ==
          Catch::Approx(true_alpha_energy(f)).margin(1e-8));
  }

  SECTION("pretraining is deterministic") {
    SloProfiler again;
    again.pretrain(linear_fleet_log(80, 11));
    CHECK(again.cold_theta(PredKind::time) == prof.cold_theta(PredKind::time));
    CHECK(again.cold_theta(PredKind::energy) == prof.cold_theta(PredKind::energy));
  }
}

TEST_CASE("profiler bound arithmetic: floor, min rule, and clamps") {
  // Constant per-sample costs: every row has alpha_t = 0.01 s, alpha_e = 1e-4 %.
  Rng rng(5);
  std::vector<ObservationRow> log;
  for (int i = 0; i < 40; ++i) {
    ObservationRow row;
    row.device_model = "even";
    row.features = random_features(rng);
    row.n = static_cast<double>(1 + rng.below(100));
    row.t = 0.01 * row.n;
    row.e = 1e-4 * row.n;
    log.push_back(row);
  }
  SloProfiler prof;
  prof.pretrain(log);
  const auto f = random_features(rng);
  CHECK(prof.predict_alpha(PredKind::time, "probe", f) == Catch::Approx(0.01).margin(1e-9));
  CHECK(prof.predict_bound("probe", f, 3.0, 1e9) == 300);
  CHECK(prof.predict_bound("probe", f, 3.0, 0.02) == 200);  // energy SLO binds
  CHECK(prof.predict_bound("probe", f, 0.005, 1e9) == 1);   // floor(0.5) clamped to 1
  CHECK_THROWS_AS(prof.predict_bound("probe", f, -3.0, 1e9), std::invalid_argument);
}

TEST_CASE("negative extrapolations clamp to the epsilon floor") {
  // Cost falls with cpu_freq_sum; extrapolating far beyond the training range
  // would go negative without the clamp.
  Rng rng(13);
  std::vector<ObservationRow> log;
  for (int i = 0; i < 50; ++i) {
    ObservationRow row;
    row.device_model = "lin";
    row.features = random_features(rng);
    const double alpha = 0.1 - 0.01 * row.features.cpu_freq_sum;  // >= 0.02 in range
    row.n = 10.0;
    row.t = alpha * row.n;
    row.e = 1e-4 * row.n;
    log.push_back(row);
  }
  SloProfiler prof;
  prof.pretrain(log);
  DeviceFeatures extreme = random_features(rng);
  extreme.cpu_freq_sum = 100.0;
  CHECK(prof.predict_alpha(PredKind::time, "probe", extreme) == 1e-9);
}

TEST_CASE("per-device personalization converges onto an idiosyncratic device") {
  SloProfiler prof;
  prof.pretrain(linear_fleet_log(80, 11));

  Rng rng(42);
  const auto f = random_features(rng);
  const double cold_guess = prof.predict_alpha(PredKind::time, "slowphone", f);
  const double alpha_true = cold_guess + 0.8;  // device is far slower than the fleet model
  const double alpha_e_true = true_alpha_energy(f) + 0.004;
  CHECK_FALSE(prof.has_personal("slowphone"));

  std::vector<double> devs;
  for (int k = 0; k < 5; ++k) {
    devs.push_back(std::abs(prof.predict_alpha(PredKind::time, "slowphone", f) - alpha_true));
    prof.observe("slowphone", f, 10.0, alpha_true * 10.0, alpha_e_true * 10.0);
  }
  CHECK(prof.has_personal("slowphone"));
  CHECK(devs.front() == Catch::Approx(0.8).margin(1e-9));

  // One update already lands within the dead zone; later requests never regress.
  CHECK(devs[1] <= prof.config().epsilon_time + 1e-12);
  for (std::size_t k = 1; k < devs.size(); ++k) CHECK(devs[k] <= devs[k - 1] + 1e-12);

  CHECK(std::abs(prof.predict_alpha(PredKind::energy, "slowphone", f) - alpha_e_true) <=
        prof.config().epsilon_energy + 1e-12);

  SECTION("personalization is per device model: others still get the cold view") {
    const double other = prof.predict_alpha(PredKind::time, "otherphone", f);
    CHECK(other == Catch::Approx(cold_guess).margin(1e-9));
  }
}

TEST_CASE("cold model refits over the full log every retrain_every observations") {
  ProfilerConfig cfg;
  cfg.retrain_every = 50;
  SloProfiler prof(cfg);
  prof.pretrain(linear_fleet_log(80, 11));
  const auto theta_before = prof.cold_theta(PredKind::time);

  // A new regime: consistently slower than the fleet the cold model saw.
  Rng rng(77);
  const auto probe = random_features(rng);
  const double new_alpha = true_alpha_time(probe) + 0.6;
  const double before_dev =
      std::abs(prof.predict_alpha(PredKind::time, "cold-probe", probe) - new_alpha);

  for (int i = 0; i < 49; ++i)
    prof.observe("newphone", probe, 10.0, new_alpha * 10.0, true_alpha_energy(probe) * 10.0);
  CHECK(prof.cold_theta(PredKind::time) == theta_before);  // bitwise: no refit yet

  prof.observe("newphone", probe, 10.0, new_alpha * 10.0, true_alpha_energy(probe) * 10.0);
  CHECK(prof.online_observed() == 50);
  CHECK(prof.log_size() == 130);
  CHECK(prof.cold_theta(PredKind::time) != theta_before);

  const double after_dev =
      std::abs(prof.predict_alpha(PredKind::time, "cold-probe", probe) - new_alpha);
  CHECK(after_dev < before_dev);
}
