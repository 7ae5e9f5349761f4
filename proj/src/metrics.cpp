#include "kpreg/metrics.hpp"

#include <numeric>

#include "kpreg/error.hpp"

namespace kpreg {

void PckConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ConfigInvalidError("PCK alpha must lie in (0, 1]");
    }
}

double pck(const Transform &transform, std::span<const Point2D> pa, std::span<const Point2D> pb,
           const CorrespondenceMap &c, const PckConfig &cfg) {
    cfg.validate();
    if (c.empty()) throw EmptyCorrespondenceError("PCK needs at least one correspondence");
    c.validate(pa.size(), pb.size());
    std::size_t correct = 0;
    for (const auto &[s, t] : c.pairs) {
        if (distance(transform.apply(pa[s]), pb[t]) <= cfg.alpha) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(c.size());
}

PckReport evaluate_batch(std::span<const RegistrationResult> results, std::span<const PairSample> samples,
                         const PckConfig &cfg) {
    if (results.empty()) throw EmptyBatchError("no registration results to evaluate");
    if (results.size() != samples.size()) {
        throw EmptyBatchError("results and samples differ in count");
    }
    PckReport report;
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const PairSample &s = samples[i];
        if (!s.correspondence) {
            throw EmptyCorrespondenceError("pair '" + s.pair_id + "' has no ground-truth correspondence");
        }
        const double v = pck(results[i].theta_ab, s.source, s.target, *s.correspondence, cfg);
        report.pair_ids.push_back(s.pair_id);
        report.per_pair.push_back(v);
        if (s.category) {
            auto &[sum, n] = sums[*s.category];
            sum += v;
            ++n;
        }
    }
    report.mean = std::accumulate(report.per_pair.begin(), report.per_pair.end(), 0.0) /
                  static_cast<double>(report.per_pair.size());
    for (const auto &[cat, sn] : sums) {
        report.per_category[cat] = sn.first / static_cast<double>(sn.second);
    }
    return report;
}

} // namespace kpreg
