// Central finite-difference check of the analytic gradients in model.hpp.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asqp/model.hpp"

namespace asqp {

struct GroupError {
  std::string name;
  double max_rel_error = 0.0;
  long entries = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GroupError> groups;
};

// Batch-mean joint loss recomputed from scratch; the finite-difference side
// only ever calls this.
double batch_loss(std::span<const Example> batch, const ScorerParams<double>& params, double alpha,
                  double beta);

// Relative error per entry is |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckReport check_gradients(std::span<const Example> batch, const ScorerParams<double>& params,
                                double alpha = 1.0, double beta = 1.0, double step = 1e-5,
                                double floor = 1e-8);

// Seeded random problem (trainable embeddings, small shapes, random targets and
// masks) checked with check_gradients.
GradCheckReport random_gradient_check(std::uint64_t seed,
                                      SchemaVariant variant = SchemaVariant::Standard);

}  // namespace asqp
