#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hcost {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double tol = 1e-4;
    bool pass = false;
};

// Checks every primitive op, every loss, and the full phase-2 objective on a
// 3-object scene against central finite differences.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed,
                                                int points_per_op = 100);

bool gradcheck_all_passed(const std::vector<GradCheckEntry>& entries);

std::string gradcheck_report(const std::vector<GradCheckEntry>& entries);

}  // namespace hcost
