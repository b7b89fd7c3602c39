#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aesynth/acquisition.hpp"
#include "aesynth/core.hpp"
#include "test_support.hpp"

using namespace aesynth;
using testing_support::Gen;

namespace {

double sample_variance(const std::vector<double> &v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / v.size();
}

// Direct correlation with the normalised template, as written out by hand.
std::vector<double> correlation_oracle(const std::vector<double> &trace, const std::vector<double> &h) {
  const int L = static_cast<int>(h.size());
  const int half = L / 2;
  double energy = 0.0, peak = 0.0;
  for (double v : h) {
    energy += v * v;
    peak = std::max(peak, std::abs(v));
  }
  std::vector<double> out(trace.size(), 0.0);
  for (int n = 0; n < static_cast<int>(trace.size()); ++n) {
    double acc = 0.0;
    for (int j = 0; j < L; ++j) {
      const int m = n + j - half;
      if (m >= 0 && m < static_cast<int>(trace.size())) acc += trace[m] * h[j];
    }
    out[n] = acc * peak / energy;
  }
  return out;
}

std::size_t argmax_abs(const std::vector<double> &v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  return best;
}

}  // namespace

TEST_CASE("thermal noise") {
  SUBCASE("zero power leaves the input untouched") {
    Gen gen(3);
    auto trace = gen.normals(257);
    const auto before = trace;
    Rng rng(9);
    add_thermal_noise(trace, 0.0, 1, rng);
    CHECK(trace == before);
  }
  SUBCASE("unit variance at k = 1") {
    std::vector<double> trace(1'000'000, 0.0);
    Rng rng(1);
    add_thermal_noise(trace, 1.0, 1, rng);
    CHECK(std::abs(sample_variance(trace) - 1.0) <= 0.01);
  }
  SUBCASE("variance falls as 1/k") {
    std::vector<double> trace(1'000'000, 0.0);
    Rng rng(2);
    add_thermal_noise(trace, 1.0, 16, rng);
    CHECK(std::abs(sample_variance(trace) - 0.0625) <= 0.002);
  }
  SUBCASE("same generator state, same noise") {
    std::vector<double> a(100, 0.0), b(100, 0.0);
    Rng r1(42), r2(42);
    add_thermal_noise(a, 2.0, 4, r1);
    add_thermal_noise(b, 2.0, 4, r2);
    CHECK(a == b);
  }
}

TEST_CASE("acquisition spec validation") {
  CHECK_NOTHROW(AcquisitionSpec{}.validate());
  CHECK_THROWS_AS(AcquisitionSpec({0, 0.0, 0.0, 1.0}).validate(), Error);
  CHECK_THROWS_AS(AcquisitionSpec({1, -1.0, 0.0, 1.0}).validate(), Error);
}

TEST_CASE("differential subtraction") {
  Gen gen(5);
  const auto s = gen.normals(64);
  const auto cm = common_mode_trace(64, 40e6, 0.0, 0.7);
  std::vector<double> plus(64), minus(64);
  for (int i = 0; i < 64; ++i) {
    plus[i] = s[i] + cm[i];
    minus[i] = -s[i] + cm[i];
  }
  SUBCASE("common mode cancels") {
    const auto d = differential_subtract(plus, minus);
    for (int i = 0; i < 64; ++i) CHECK(d[i] == doctest::Approx(2.0 * s[i]).epsilon(1e-12));
  }
  SUBCASE("equal inputs give zero") {
    for (double v : differential_subtract(plus, plus)) CHECK(v == 0.0);
  }
  SUBCASE("random traces subtract elementwise") {
    const auto a = gen.normals(31), b = gen.normals(31);
    const auto d = differential_subtract(a, b);
    for (int i = 0; i < 31; ++i) CHECK(d[i] == a[i] - b[i]);
  }
  SUBCASE("length mismatch") {
    try {
      differential_subtract(gen.normals(3), gen.normals(4));
      FAIL("expected length mismatch");
    } catch (const Error &e) {
      CHECK(e.code() == Errc::LengthMismatch);
    }
  }
}

TEST_CASE("matched filter") {
  const auto h = PulseSpec{}.waveform();
  SUBCASE("template in, template peak out at the same index") {
    std::vector<double> trace(101, 0.0);
    std::copy(h.begin(), h.end(), trace.begin() + 30);
    const auto y = matched_filter(trace, h);
    CHECK(argmax_abs(y) == 40);
    CHECK(y[40] == doctest::Approx(1.0));
  }
  SUBCASE("zeros stay zero") {
    for (double v : matched_filter(std::vector<double>(50, 0.0), h)) CHECK(v == 0.0);
  }
  SUBCASE("delayed template moves the peak by the delay") {
    for (int d : {0, 3, 17, 41}) {
      std::vector<double> trace(120, 0.0);
      std::copy(h.begin(), h.end(), trace.begin() + 20 + d);
      const auto y = matched_filter(trace, h);
      CHECK(argmax_abs(y) == static_cast<std::size_t>(30 + d));
      CHECK(y[30 + d] == doctest::Approx(1.0));
    }
  }
  SUBCASE("agrees with a direct correlation") {
    Gen gen(8);
    for (int trial = 0; trial < 10; ++trial) {
      const auto trace = gen.normals(gen.integer(1, 200));
      const auto tmpl = gen.normals(gen.integer(1, 15) * 2 + 1);
      const auto y = matched_filter(trace, tmpl);
      const auto oracle = correlation_oracle(trace, tmpl);
      REQUIRE(y.size() == oracle.size());
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(oracle[i]).epsilon(1e-9));
    }
  }
  SUBCASE("linear in the trace") {
    Gen gen(12);
    const auto a = gen.normals(90), b = gen.normals(90);
    const double alpha = gen.uniform(-3, 3);
    std::vector<double> mix(90);
    for (int i = 0; i < 90; ++i) mix[i] = alpha * a[i] + b[i];
    const auto ya = matched_filter(a, h), yb = matched_filter(b, h), ym = matched_filter(mix, h);
    for (int i = 0; i < 90; ++i) CHECK(ym[i] == doctest::Approx(alpha * ya[i] + yb[i]).epsilon(1e-9));
  }
  SUBCASE("zero template") {
    try {
      matched_filter(std::vector<double>(10, 1.0), std::vector<double>(5, 0.0));
      FAIL("expected zero template error");
    } catch (const Error &e) {
      CHECK(e.code() == Errc::ZeroTemplate);
    }
  }
}
