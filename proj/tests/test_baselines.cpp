// Copyright 2026 MACR Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "macr/baselines.hpp"
#include "macr/error.hpp"
#include "macr/model.hpp"
#include "macr/rng.hpp"

using namespace macr;

TEST_CASE("bs_score adds the bias only while training") {
  CHECK(bs_score(1.0, 0.5, BsMode::Train) == 1.5);
  CHECK(bs_score(1.0, 0.5, BsMode::Test) == 1.0);
  CHECK(bs_score(2.0, 0.0, BsMode::Train) == 2.0);
  CHECK(bs_score(2.0, 0.0, BsMode::Test) == 2.0);
}

TEST_CASE("bs test-mode ranking ignores any constant bias shift") {
  Rng rng(5);
  std::vector<double> y_k(20);
  for (auto& v : y_k) v = rng.normal();
  std::vector<double> bias(20);
  for (auto& v : bias) v = rng.normal();

  auto order = [&](double shift) {
    std::vector<std::size_t> idx(20);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return bs_score(y_k[a], bias[a] + shift, BsMode::Test) >
             bs_score(y_k[b], bias[b] + shift, BsMode::Test);
    });
    return idx;
  };
  CHECK(order(0.0) == order(123.0));
}

TEST_CASE("ipw_weight is the clipped smoothed inverse") {
  CHECK(ipw_weight(0, 1.0, 10.0) == 1.0);
  CHECK(ipw_weight(9, 1.0, 10.0) == 0.1);
  CHECK(ipw_weight(0, 0.01, 10.0) == 10.0);  // clip engaged
  for (std::uint32_t pop = 1; pop < 50; ++pop)
    CHECK(ipw_weight(pop, 1.0, 100.0) <= ipw_weight(pop - 1, 1.0, 100.0));
}

TEST_CASE("ipw_loss reduces to bce_loss under uniform weights") {
  Rng rng(6);
  std::vector<double> scores(32);
  std::vector<float> labels(32);
  for (std::size_t k = 0; k < 32; ++k) {
    scores[k] = 2.0 * rng.normal();
    labels[k] = rng.uniform_real() < 0.5 ? 0.0f : 1.0f;
  }
  std::vector<double> ones(32, 1.0);
  CHECK(ipw_loss(scores, labels, ones) == doctest::Approx(bce_loss(scores, labels)).epsilon(1e-15));

  std::vector<double> threes(32, 3.0);
  CHECK(ipw_loss(scores, labels, threes) ==
        doctest::Approx(bce_loss(scores, labels)).epsilon(1e-12));
}

TEST_CASE("ipw_loss doubles a double-weighted example's share") {
  std::vector<double> scores = {1.0, -2.0};
  std::vector<float> labels = {1.0f, 0.0f};
  auto term = [&](double s, double y) {
    const double p = sigmoid(s);
    return -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
  };
  std::vector<double> weights = {2.0, 1.0};
  const double expected = (2.0 * term(1.0, 1.0) + term(-2.0, 0.0)) / 3.0;
  CHECK(ipw_loss(scores, labels, weights) == doctest::Approx(expected).epsilon(1e-14));

  CHECK_THROWS_AS(ipw_loss(scores, labels, {}), UsageError);
}

TEST_CASE("per-item weight table clips at the requested quantile") {
  std::vector<std::uint32_t> counts = {0, 1, 3, 9, 99};
  const auto weights = ipw_item_weights(counts, 1.0, 1.0);  // no clipping
  CHECK(weights[0] == 1.0);
  CHECK(weights[1] == 0.5);
  CHECK(weights[4] == 0.01);

  const auto clipped = ipw_item_weights(counts, 1.0, 0.5);
  const double cap = *std::max_element(clipped.begin(), clipped.end());
  CHECK(cap < 1.0);  // the rarest item's raw weight got cut
  for (std::size_t i = 0; i < counts.size(); ++i) CHECK(clipped[i] <= cap);
  // Order is preserved.
  for (std::size_t i = 1; i < counts.size(); ++i) CHECK(clipped[i] <= clipped[i - 1]);

  CHECK_THROWS_AS(ipw_item_weights(counts, 0.0, 0.95), UsageError);
}
