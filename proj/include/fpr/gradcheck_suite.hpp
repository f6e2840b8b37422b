#pragma once

#include <cstdint>

#include "fpr/gradcheck.hpp"
#include "fpr/vit.hpp"

namespace fpr {

// Two-block model small enough to finite-difference end to end.
VitConfig oracle_vit_config();

// The standard oracle suite: per-primitive finite-difference checks, the
// analytic softmax Jacobian against finite differences, saturated-row decay,
// and the full two-block composite loss. Each entry carries its tolerance.
std::vector<GradCheck> default_gradcheck_suite(std::uint64_t seed = 2024, int seeds_per_check = 20);

}  // namespace fpr
