#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "slowfast/validate.hpp"

using namespace slowfast;

namespace {
double median_margin(const ValidationReport& rep) {
  std::vector<double> margins;
  for (const auto& it : rep.items)
    if (!it.skipped && it.pass) margins.push_back(it.margin);
  std::sort(margins.begin(), margins.end());
  return margins[margins.size() / 2];
}

ValidationBudget doubled(const ValidationBudget& b) {
  ValidationBudget d = b;
  d.name = b.name + "_x2";
  for (auto& v : d.avg_pairs) v *= 2;
  for (auto& v : d.weak_pairs) v *= 2;
  d.gap_realizations *= 2;
  d.martingale_replicas *= 2;
  d.qv_replicas *= 2;
  d.hbar_inner *= 2;
  d.sigma_T_total *= 2;
  d.fbar_ensemble_replicas *= 2;
  d.ou_steps *= 2;
  d.attraction_realizations *= 2;
  return d;
}
}  // namespace

TEST_CASE("doubling the budget does not worsen the median passing margin") {
  const ValidationReport base = validate_toy(ValidationBudget::small(), 442);
  const ValidationReport twice = validate_toy(doubled(ValidationBudget::small()), 442);
  CHECK(base.all_pass());
  CHECK(twice.all_pass());
  CHECK(median_margin(twice) <= median_margin(base));
}
