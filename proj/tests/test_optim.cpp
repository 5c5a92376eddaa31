// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "mmrobust/optim.hpp"

using namespace mmr;

namespace {

ParameterSet scalar_param(double value, double grad) {
  ParameterSet ps;
  Parameter& p = ps.add("p", Tensor::scalar(value));
  p.grad = Tensor::scalar(grad);
  return ps;
}

}  // namespace

TEST_CASE("adam: one step from the hand-evaluated recurrence", "[optim]") {
  ParameterSet ps = scalar_param(1.0, 1.0);
  AdamState st;
  adam_step(ps, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
  const double m = (1 - 0.9) * 1.0, v = (1 - 0.999) * 1.0;
  const double m_hat = m / (1 - 0.9), v_hat = v / (1 - 0.999);
  CHECK(ps.get("p").value.item() == Catch::Approx(1.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-15));
  CHECK(ps.get("p").value.item() == Catch::Approx(0.9).epsilon(1e-7));
  CHECK(st.step == 1);
}

TEST_CASE("adam: decoupled weight decay with zero gradient", "[optim]") {
  ParameterSet ps = scalar_param(1.0, 0.0);
  AdamState st;
  adam_step(ps, st, {0.1, 0.9, 0.999, 1e-8, 0.01});
  CHECK(ps.get("p").value.item() == Catch::Approx(1.0 - 0.1 * 0.01 * 1.0).epsilon(1e-15));
}

TEST_CASE("adam: zero gradient and no decay leaves parameters unchanged", "[optim]") {
  ParameterSet ps = scalar_param(0.37, 0.0);
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(ps, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
  CHECK(ps.get("p").value.item() == 0.37);
  CHECK(st.step == 3);
}

TEST_CASE("adam: non-finite gradient names the parameter and leaves values alone", "[optim]") {
  ParameterSet ps = scalar_param(2.0, std::numeric_limits<double>::quiet_NaN());
  AdamState st;
  try {
    adam_step(ps, st, {});
    FAIL("expected NonFiniteGradientError");
  } catch (const NonFiniteGradientError& e) {
    CHECK(std::string(e.what()).find("'p'") != std::string::npos);
  }
  CHECK(ps.get("p").value.item() == 2.0);
}

TEST_CASE("sgd: theta -= lr * grad", "[optim]") {
  ParameterSet ps = scalar_param(1.5, 2.0);
  sgd_step(ps, 0.25);
  CHECK(ps.get("p").value.item() == 1.0);
}
