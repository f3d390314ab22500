#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mbtrim {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Property suites behind `mbtrim selftest`: kernel determinism, top-k
/// selection against a stable-sort oracle, the trimmed-mean gradient
/// contract, the fraction schedule, subset recompute and a gradient check.
std::vector<SuiteResult> run_selftests(std::uint64_t seed);

}  // namespace mbtrim
