#include "kpreg/parallel.hpp"

#include <exception>
#include <limits>

#include <omp.h>

#include "kpreg/error.hpp"

namespace kpreg {

Assignment nn_assign_parallel(std::span<const Point2D> queries, std::span<const Point2D> references) {
    if (queries.empty() || references.empty()) {
        throw EmptySetError("nn_assign: empty point set");
    }
    Assignment a;
    a.indices.resize(queries.size());
    a.distances.resize(queries.size());
    const auto nq = static_cast<std::ptrdiff_t>(queries.size());
    const std::size_t nr = references.size();

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < nq; ++i) {
        const Point2D q = queries[static_cast<std::size_t>(i)];
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < nr; ++j) {
            const double dx = q.x - references[j].x;
            const double dy = q.y - references[j].y;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = j;
            }
        }
        a.indices[static_cast<std::size_t>(i)] = best;
        a.distances[static_cast<std::size_t>(i)] = distance(q, references[best]);
    }
    return a;
}

std::vector<RegistrationResult> register_batch(std::span<const PairSample> samples, const LossSpec &spec,
                                               const OptimizerConfig &cfg, Execution exec) {
    cfg.validate();
    std::vector<RegistrationResult> results(samples.size());
    std::vector<std::exception_ptr> errors(samples.size());
    const auto n = static_cast<std::ptrdiff_t>(samples.size());

    if (exec == Execution::serial) {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            results[static_cast<std::size_t>(i)] = register_pair(samples[static_cast<std::size_t>(i)], spec, cfg);
        }
        return results;
    }

#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            results[k] = register_pair(samples[k], spec, cfg);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto &e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

int max_threads() { return omp_get_max_threads(); }

} // namespace kpreg
