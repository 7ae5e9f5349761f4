#pragma once

// OpenMP kernels. Each one has a serial reference (nn_assign, or an explicit
// serial flag) with bitwise-identical results, which the tests rely on.

#include <span>
#include <vector>

#include "kpreg/losses.hpp"
#include "kpreg/optimizer.hpp"
#include "kpreg/sample.hpp"

namespace kpreg {

enum class Execution { serial, parallel };

/// Same contract and output as nn_assign, with queries split across threads.
Assignment nn_assign_parallel(std::span<const Point2D> queries, std::span<const Point2D> references);

/// register_pair over every sample. Results are in sample order and do not
/// depend on the thread count. If any pair throws, the exception of the
/// lowest-index failing pair is rethrown.
std::vector<RegistrationResult> register_batch(std::span<const PairSample> samples, const LossSpec &spec,
                                               const OptimizerConfig &cfg, Execution exec = Execution::parallel);

/// Number of threads an OpenMP parallel region would use.
int max_threads();

} // namespace kpreg
