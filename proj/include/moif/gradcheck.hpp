#pragma once

// Finite-difference verification of the analytic gradients of each component
// and of the full training loss, on deliberately small configurations.

#include <cstdint>
#include <string>
#include <vector>

#include "moif/autodiff.hpp"
#include "moif/model.hpp"

namespace moif {

enum class GradScope { kTensor, kMoif, kApproximator, kKan, kObjective, kAll };

/// "tensor", "moif", "approximator", "kan", "objective" or "all"; ConfigError otherwise.
GradScope parse_grad_scope(const std::string& name);
std::string to_string(GradScope scope);

struct ScopeReport {
  std::string scope;
  ad::GradCheckReport report;
  double tolerance = 0.0;
  double seconds = 0.0;
  bool pass() const { return report.pass; }
};

/// The configuration used when none is given: T_H = 4, T_F = 4, M = 2,
/// embed_dim = 8, latent_dim = 4.
ModelConfig toy_gradcheck_config();

/// ConfigError with guidance when embed_dim > 16 or t_fut > 4.
void check_gradcheck_size(const ModelConfig& config);

/// Runs the named scope; kAll runs every component scope followed by the
/// full-model check on a two-agent synthetic scene.
std::vector<ScopeReport> run_gradcheck(const ModelConfig& config, GradScope scope, std::uint64_t seed);

/// Full training-loss check alone.
ScopeReport gradcheck_full_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace moif
