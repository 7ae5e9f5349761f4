#include "kpreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <utility>

#include "kpreg/error.hpp"

namespace kpreg {

double Rng::normal() {
    // 1 - u keeps the log argument in (0, 1]
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
    // rejection keeps the draw exactly uniform
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string to_string(Regime r) { return r == Regime::easy ? "easy" : "hard"; }

Regime parse_regime(const std::string &s) {
    if (s == "easy") return Regime::easy;
    if (s == "hard") return Regime::hard;
    throw ConfigInvalidError("unknown regime '" + s + "'");
}

void SynthConfig::validate() const {
    if (n_points == 0) throw ConfigInvalidError("n_points must be positive");
    if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) throw ConfigInvalidError("drop_fraction must lie in [0, 1)");
    if (static_cast<double>(n_points) * (1.0 - drop_fraction) < 1.0) throw ConfigInvalidError("drop_fraction leaves no points");
    if (n_points - static_cast<std::size_t>(std::lround(drop_fraction * static_cast<double>(n_points))) < 1) {
        throw ConfigInvalidError("drop_fraction leaves no points");
    }
    if (!(rotation_min >= 0.0 && rotation_min <= rotation_max)) throw ConfigInvalidError("need 0 <= rotation_min <= rotation_max");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) throw ConfigInvalidError("need 0 < scale_lo <= scale_hi");
    if (!(translation_max >= 0.0)) throw ConfigInvalidError("translation_max must be nonnegative");
    if (!(tps_displacement_max >= 0.0)) throw ConfigInvalidError("tps_displacement_max must be nonnegative");
    if (!(noise_sigma >= 0.0)) throw ConfigInvalidError("noise_sigma must be nonnegative");
    if (!(image_size.width > 0.0 && image_size.height > 0.0)) throw ConfigInvalidError("image size must be positive");
}

SynthConfig regime_config(Regime regime, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    if (regime == Regime::hard) {
        cfg.rotation_min = 45.0;
        cfg.rotation_max = 60.0;
        cfg.drop_fraction = 0.3;
    }
    cfg.category = to_string(regime);
    return cfg;
}

namespace {

constexpr int kMaxAttempts = 10000;

bool inside_unit_square(Point2D p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

Transform draw_transform(const SynthConfig &cfg, Rng &rng) {
    const double degrees = rng.uniform(cfg.rotation_min, cfg.rotation_max);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const Point2D shift{rng.uniform(-cfg.translation_max, cfg.translation_max),
                        rng.uniform(-cfg.translation_max, cfg.translation_max)};
    const Transform affine = Transform::affine(
        AffineParams::similarity(sign * degrees * std::numbers::pi / 180.0, scale, {0.5, 0.5}, shift));
    if (cfg.transform_family == TransformFamily::affine) return affine;
    TpsParams tps;
    for (auto &d : tps.displacements) d = rng.uniform(-cfg.tps_displacement_max, cfg.tps_displacement_max);
    return compose(Transform::tps(tps), affine);
}

Point2D draw_noise(double sigma, Rng &rng) {
    if (sigma == 0.0) return {};
    for (;;) {
        const Point2D n{sigma * rng.normal(), sigma * rng.normal()};
        if (std::hypot(n.x, n.y) <= 3.0 * sigma) return n;
    }
}

// Indices of the points that survive on one side, in random order.
std::vector<std::size_t> surviving_order(std::size_t n, std::size_t keep, Rng &rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(keep);
    rng.shuffle(idx);
    return idx;
}

} // namespace

PairSample generate_pair(const SynthConfig &cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    PointSet source(cfg.n_points), target(cfg.n_points);
    Transform truth;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
        for (auto &p : source) p = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
        truth = draw_transform(cfg, rng);
        placed = true;
        for (std::size_t i = 0; i < cfg.n_points; ++i) {
            target[i] = truth.apply(source[i]) + draw_noise(cfg.noise_sigma, rng);
            if (cfg.keep_in_bounds && !inside_unit_square(target[i])) placed = false;
        }
    }
    if (!placed) {
        throw ConfigInvalidError("could not place the transformed keypoints inside the unit square");
    }

    const std::size_t keep =
        cfg.n_points - static_cast<std::size_t>(std::lround(cfg.drop_fraction * static_cast<double>(cfg.n_points)));
    const std::vector<std::size_t> src_order = surviving_order(cfg.n_points, keep, rng);
    const std::vector<std::size_t> tgt_order = surviving_order(cfg.n_points, keep, rng);

    PairSample s;
    s.pair_id = "synth-" + std::to_string(cfg.seed);
    s.source_id = s.pair_id + "/a";
    s.target_id = s.pair_id + "/b";
    s.category = cfg.category;
    s.source_size = cfg.image_size;
    s.target_size = cfg.image_size;
    s.true_transform = truth;

    std::vector<std::size_t> target_slot(cfg.n_points, cfg.n_points);
    for (std::size_t j = 0; j < tgt_order.size(); ++j) {
        s.target.push_back(target[tgt_order[j]]);
        target_slot[tgt_order[j]] = j;
    }
    CorrespondenceMap c;
    for (std::size_t i = 0; i < src_order.size(); ++i) {
        s.source.push_back(source[src_order[i]]);
        if (target_slot[src_order[i]] < cfg.n_points) c.pairs.emplace_back(i, target_slot[src_order[i]]);
    }
    s.correspondence = std::move(c);
    return s;
}

std::vector<PairSample> generate_batch(const SynthConfig &cfg, std::size_t count) {
    std::vector<PairSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        SynthConfig c = cfg;
        c.seed = mix_seed(cfg.seed, i);
        PairSample s = generate_pair(c);
        s.pair_id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(i);
        s.source_id = s.pair_id + "/a";
        s.target_id = s.pair_id + "/b";
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<PairSample> combine_category_pairs(std::span<const PairSample> samples, std::size_t cap_per_category) {
    std::map<std::string, std::vector<std::size_t>> by_category;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].category) by_category[*samples[i].category].push_back(i);
    }
    std::vector<PairSample> out;
    for (const auto &[category, members] : by_category) {
        std::size_t made = 0;
        for (std::size_t a = 0; a < members.size() && made < cap_per_category; ++a) {
            for (std::size_t b = a + 1; b < members.size() && made < cap_per_category; ++b) {
                const PairSample &p = samples[members[a]];
                const PairSample &q = samples[members[b]];
                if (p.source_id == q.target_id) continue;
                PairSample n;
                n.pair_id = p.pair_id + "+" + q.pair_id;
                n.source_id = p.source_id;
                n.target_id = q.target_id;
                n.source = p.source;
                n.target = q.target;
                n.source_size = p.source_size;
                n.target_size = q.target_size;
                n.category = category;
                out.push_back(std::move(n));
                ++made;
            }
        }
    }
    return out;
}

std::vector<PairSample> exclude_test_flips(std::span<const PairSample> train, std::span<const PairSample> test) {
    std::set<std::pair<std::string, std::string>> test_ids;
    for (const auto &t : test) test_ids.emplace(t.source_id, t.target_id);
    std::vector<PairSample> out;
    for (const auto &s : train) {
        if (test_ids.contains({s.source_id, s.target_id}) || test_ids.contains({s.target_id, s.source_id})) continue;
        out.push_back(s);
    }
    return out;
}

PairSample hflip_pair(const PairSample &sample) {
    PairSample f = sample;
    for (auto &p : f.source) p.x = 1.0 - p.x;
    for (auto &p : f.target) p.x = 1.0 - p.x;
    f.pair_id += "~hflip";
    f.source_id += "~hflip";
    f.target_id += "~hflip";
    f.true_transform.reset();
    if (sample.true_transform && sample.true_transform->kind() == Transform::Kind::affine) {
        // F T F with F(x, y) = (1 - x, y)
        const AffineParams &a = sample.true_transform->affine_params();
        AffineParams m{a.a11, -a.a12, 1.0 - a.tx - a.a11, -a.a21, a.a22, a.ty + a.a21};
        f.true_transform = Transform::affine(m);
    }
    return f;
}

} // namespace kpreg
