#pragma once

#include "reloc/regressor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reloc {

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t entries = 0;  // compared gradient entries
    std::size_t skipped = 0;  // entries excluded (degenerate tiles, ReLU kinks)
    bool pass() const { return max_rel_error < tolerance; }
};

inline constexpr double kFdStep = 1e-5;

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

GradCheckResult check_loss_sim(std::uint64_t seed);
GradCheckResult check_loss_rep(std::uint64_t seed);
GradCheckResult check_loss_3d(std::uint64_t seed);

/// Miniature network: 8x8 input, encoder channels {2, 2}, random heads.
RegressorConfig miniature_config(std::uint64_t seed);

/// Full Jacobian of every heatmap and coordinate output with respect to every
/// parameter; perturbations that flip any ReLU sign are skipped.
GradCheckResult check_network_jacobian(std::uint64_t seed, const RegressorConfig& cfg);

/// All four checks for each seed in [first_seed, first_seed + seeds).
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t first_seed, int seeds);

}  // namespace reloc
