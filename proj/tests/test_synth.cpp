#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "kpreg/error.hpp"
#include "kpreg/synth.hpp"
#include "support.hpp"

using namespace kpreg;
using namespace kpreg::testing;

namespace {

bool same_sample(const PairSample &a, const PairSample &b) {
    if (a.pair_id != b.pair_id || a.source != b.source || a.target != b.target || a.category != b.category) return false;
    if (a.correspondence.has_value() != b.correspondence.has_value()) return false;
    if (a.correspondence && a.correspondence->pairs != b.correspondence->pairs) return false;
    return a.true_transform.has_value() == b.true_transform.has_value() &&
           (!a.true_transform || a.true_transform->params() == b.true_transform->params());
}

PairSample labeled(const std::string &id, const std::string &category) {
    PairSample s;
    s.pair_id = id;
    s.source_id = id + "/a";
    s.target_id = id + "/b";
    s.source = s.target = {{0.5, 0.5}};
    s.category = category;
    return s;
}

PairSample with_ids(const std::string &src, const std::string &tgt) {
    PairSample s;
    s.pair_id = src + ":" + tgt;
    s.source_id = src;
    s.target_id = tgt;
    return s;
}

} // namespace

TEST(Rng, KnownEngineOutput) {
    // the engine is fixed by the C++ standard: the 10000th output of a
    // default-seeded mt19937_64 is 9981545732273789042
    std::mt19937_64 reference;
    reference.discard(9999);
    EXPECT_EQ(reference(), 9981545732273789042ull);
    Rng rng(5489);
    std::mt19937_64 same(5489);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(rng.next(), same());
}

TEST(Rng, DistributionsStayInRange) {
    Rng rng(1);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(rng.index(7), 7u);
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / 20000, 0.0, 0.05);
    EXPECT_NEAR(sq / 20000, 1.0, 0.05);
}

TEST(Rng, MixSeedSeparatesStreams) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(mix_seed(42, i));
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_EQ(mix_seed(42, 3), mix_seed(42, 3));
}

TEST(GeneratePair, NoDropNoNoiseIsExactPermutation) {
    SynthConfig cfg;
    cfg.drop_fraction = 0.0;
    cfg.noise_sigma = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        cfg.seed = seed;
        cfg.transform_family = seed % 2 ? TransformFamily::tps : TransformFamily::affine;
        const PairSample s = generate_pair(cfg);
        ASSERT_EQ(s.source.size(), 20u);
        ASSERT_EQ(s.target.size(), 20u);
        ASSERT_EQ(s.correspondence->size(), 20u);
        std::set<std::size_t> targets;
        for (auto [i, j] : s.correspondence->pairs) {
            targets.insert(j);
            EXPECT_LT(distance(s.true_transform->apply(s.source[i]), s.target[j]), 1e-15);
        }
        EXPECT_EQ(targets.size(), 20u);
    }
}

TEST(GeneratePair, DropsAndOverlap) {
    SynthConfig cfg;
    cfg.drop_fraction = 0.2;
    cfg.n_points = 20;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        cfg.seed = seed;
        const PairSample s = generate_pair(cfg);
        EXPECT_EQ(s.source.size(), 16u);
        EXPECT_EQ(s.target.size(), 16u);
        EXPECT_GE(s.correspondence->size(), 12u);
        EXPECT_LE(s.correspondence->size(), 16u);
        EXPECT_NO_THROW(s.correspondence->validate(s.source.size(), s.target.size()));
    }
}

TEST(GeneratePair, Deterministic) {
    for (Regime r : {Regime::easy, Regime::hard}) {
        const PairSample a = generate_pair(regime_config(r, 99));
        const PairSample b = generate_pair(regime_config(r, 99));
        EXPECT_TRUE(same_sample(a, b));
        EXPECT_FALSE(same_sample(a, generate_pair(regime_config(r, 100))));
    }
}

TEST(GeneratePair, SourcesInsideInnerSquareAndTargetsInBounds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const PairSample s = generate_pair(regime_config(seed % 2 ? Regime::hard : Regime::easy, seed));
        for (const Point2D &p : s.source) {
            EXPECT_GE(p.x, 0.1);
            EXPECT_LE(p.x, 0.9);
            EXPECT_GE(p.y, 0.1);
            EXPECT_LE(p.y, 0.9);
        }
        for (const Point2D &p : s.target) {
            EXPECT_GE(p.x, 0.0);
            EXPECT_LE(p.x, 1.0);
            EXPECT_GE(p.y, 0.0);
            EXPECT_LE(p.y, 1.0);
        }
    }
}

TEST(GeneratePair, CorrespondencesWithinThreeSigma) {
    for (TransformFamily family : {TransformFamily::affine, TransformFamily::tps}) {
        SynthConfig cfg;
        cfg.transform_family = family;
        cfg.noise_sigma = 0.02;
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            cfg.seed = seed;
            const PairSample s = generate_pair(cfg);
            for (auto [i, j] : s.correspondence->pairs) {
                EXPECT_LE(distance(s.true_transform->apply(s.source[i]), s.target[j]), 3 * cfg.noise_sigma + 1e-9);
            }
        }
    }
}

TEST(GeneratePair, RegimeRotationRanges) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        for (Regime r : {Regime::easy, Regime::hard}) {
            const PairSample s = generate_pair(regime_config(r, seed));
            const AffineParams a = s.true_transform->affine_params();
            const double degrees = std::abs(std::atan2(a.a21, a.a11)) * 180.0 / std::numbers::pi;
            if (r == Regime::easy) {
                EXPECT_LE(degrees, 30.0 + 1e-9);
            } else {
                EXPECT_GE(degrees, 45.0 - 1e-9);
                EXPECT_LE(degrees, 60.0 + 1e-9);
                EXPECT_EQ(s.source.size(), 14u);
            }
            const double scale = std::hypot(a.a11, a.a21);
            EXPECT_GE(scale, 0.8 - 1e-12);
            EXPECT_LE(scale, 1.2 + 1e-12);
        }
    }
}

TEST(GeneratePair, InvalidConfig) {
    SynthConfig cfg;
    cfg.drop_fraction = 1.0;
    EXPECT_THROW(generate_pair(cfg), ConfigInvalidError);
    cfg.drop_fraction = 0.97;
    EXPECT_THROW(generate_pair(cfg), ConfigInvalidError);
    cfg = SynthConfig{};
    cfg.n_points = 0;
    EXPECT_THROW(generate_pair(cfg), ConfigInvalidError);
    cfg = SynthConfig{};
    cfg.scale_lo = 2.0;
    EXPECT_THROW(generate_pair(cfg), ConfigInvalidError);
}

TEST(GenerateBatch, UsesMixedSeeds) {
    const SynthConfig cfg = regime_config(Regime::easy, 7);
    const std::vector<PairSample> batch = generate_batch(cfg, 5);
    ASSERT_EQ(batch.size(), 5u);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        SynthConfig c = cfg;
        c.seed = mix_seed(7, i);
        const PairSample single = generate_pair(c);
        EXPECT_EQ(batch[i].source, single.source);
        EXPECT_EQ(batch[i].target, single.target);
        EXPECT_EQ(batch[i].pair_id, "synth-7-" + std::to_string(i));
        EXPECT_EQ(batch[i].category, std::optional<std::string>("easy"));
    }
}

TEST(CombineCategoryPairs, ThreeMembers) {
    const std::vector<PairSample> in{labeled("a", "car"), labeled("b", "car"), labeled("c", "car")};
    const std::vector<PairSample> out = combine_category_pairs(in, 100);
    ASSERT_EQ(out.size(), 3u);
    for (const auto &p : out) {
        EXPECT_FALSE(p.correspondence.has_value());
        EXPECT_EQ(p.category, std::optional<std::string>("car"));
        EXPECT_NE(p.source_id.substr(0, 1), p.target_id.substr(0, 1));
    }
}

TEST(CombineCategoryPairs, CapOfOne) {
    std::vector<PairSample> in;
    for (const char *id : {"a", "b", "c"}) in.push_back(labeled(id, "car"));
    for (const char *id : {"d", "e"}) in.push_back(labeled(id, "cow"));
    const std::vector<PairSample> out = combine_category_pairs(in, 1);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_NE(out[0].category, out[1].category);
}

TEST(CombineCategoryPairs, TwoCategoriesOfFive) {
    std::vector<PairSample> in;
    for (int i = 0; i < 5; ++i) in.push_back(labeled("x" + std::to_string(i), "x"));
    for (int i = 0; i < 5; ++i) in.push_back(labeled("y" + std::to_string(i), "y"));
    const std::vector<PairSample> out = combine_category_pairs(in, 100);
    EXPECT_EQ(out.size(), 20u);
    std::set<std::pair<std::string, std::string>> ids;
    for (const auto &p : out) ids.emplace(p.source_id, p.target_id);
    EXPECT_EQ(ids.size(), 20u);
}

TEST(CombineCategoryPairs, UnlabeledSamplesAreIgnored) {
    PairSample s = labeled("a", "car");
    s.category.reset();
    const std::vector<PairSample> in{s, labeled("b", "car")};
    EXPECT_TRUE(combine_category_pairs(in, 100).empty());
}

TEST(ExcludeTestFlips, NoOverlapUnchanged) {
    const std::vector<PairSample> train{with_ids("a", "b"), with_ids("c", "d")};
    const std::vector<PairSample> test{with_ids("e", "f")};
    EXPECT_EQ(exclude_test_flips(train, test).size(), 2u);
}

TEST(ExcludeTestFlips, OneFlipRemoved) {
    const std::vector<PairSample> train{with_ids("a", "b"), with_ids("d", "c")};
    const std::vector<PairSample> test{with_ids("c", "d")};
    const std::vector<PairSample> out = exclude_test_flips(train, test);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].source_id, "a");
}

TEST(ExcludeTestFlips, DuplicateAndFlipBothRemovedMatchingBruteForce) {
    Rng rng(2);
    const char *names[] = {"a", "b", "c", "d"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<PairSample> train, test;
        for (int i = 0; i < 8; ++i) train.push_back(with_ids(names[rng.index(4)], names[rng.index(4)]));
        for (int i = 0; i < 2; ++i) test.push_back(with_ids(names[rng.index(4)], names[rng.index(4)]));
        std::size_t keep = 0;
        for (const auto &s : train) {
            bool hit = false;
            for (const auto &t : test) {
                hit = hit || (s.source_id == t.source_id && s.target_id == t.target_id) ||
                      (s.source_id == t.target_id && s.target_id == t.source_id);
            }
            keep += hit ? 0 : 1;
        }
        EXPECT_EQ(exclude_test_flips(train, test).size(), keep);
    }
    const std::vector<PairSample> train{with_ids("c", "d"), with_ids("d", "c"), with_ids("a", "b")};
    EXPECT_EQ(exclude_test_flips(train, std::vector<PairSample>{with_ids("c", "d")}).size(), 1u);
}

TEST(HflipPair, MirrorsAndConjugatesTruth) {
    const PairSample s = generate_pair(regime_config(Regime::easy, 12));
    const PairSample f = hflip_pair(s);
    ASSERT_EQ(f.source.size(), s.source.size());
    for (std::size_t i = 0; i < s.source.size(); ++i) {
        EXPECT_EQ(f.source[i].x, 1.0 - s.source[i].x);
        EXPECT_EQ(f.source[i].y, s.source[i].y);
    }
    ASSERT_TRUE(f.true_transform.has_value());
    for (auto [i, j] : f.correspondence->pairs) {
        const Point2D mirrored_truth = s.true_transform->apply({1.0 - f.source[i].x, f.source[i].y});
        const Point2D expected{1.0 - mirrored_truth.x, mirrored_truth.y};
        EXPECT_LT(distance(f.true_transform->apply(f.source[i]), expected), 1e-14);
        EXPECT_LE(distance(f.true_transform->apply(f.source[i]), f.target[j]), 0.03 + 1e-9);
    }
    EXPECT_NE(f.source_id, s.source_id);
}
