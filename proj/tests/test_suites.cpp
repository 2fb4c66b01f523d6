#include <gtest/gtest.h>

#include <chrono>

#include "support/suites.hpp"

namespace {

using namespace sdm;

TEST(GradientSuite, EveryOpMatchesFiniteDifferences) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = suite::gradient_suite();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(results.size(), 40u);
  for (const auto& r : results) EXPECT_LT(r.value, r.tolerance) << r.name;
  EXPECT_LT(seconds, 60.0);
}

TEST(OracleSuite, OpsMatchLoopReferences) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = suite::oracle_suite(20);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(results.size(), 6u);
  for (const auto& r : results) EXPECT_LT(r.value, r.tolerance) << r.name;
  EXPECT_LT(seconds, 30.0);
}

}  // namespace
