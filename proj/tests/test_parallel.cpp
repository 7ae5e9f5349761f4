#include <gtest/gtest.h>

#include "kpreg/error.hpp"
#include "kpreg/parallel.hpp"
#include "kpreg/synth.hpp"
#include "support.hpp"

using namespace kpreg;
using namespace kpreg::testing;

TEST(NnAssignParallel, MatchesSerialReference) {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const PointSet q = random_points(rng, 1 + rng.index(300));
        const PointSet r = random_points(rng, 1 + rng.index(50));
        const Assignment a = nn_assign(q, r);
        const Assignment b = nn_assign_parallel(q, r);
        EXPECT_EQ(a.indices, b.indices);
        EXPECT_EQ(a.distances, b.distances);
    }
    EXPECT_THROW(nn_assign_parallel(PointSet{}, PointSet{{0, 0}}), EmptySetError);
}

TEST(RegisterBatch, ParallelMatchesSerial) {
    const std::vector<PairSample> batch = generate_batch(regime_config(Regime::hard, 8), 12);
    const LossSpec spec{LossFamily::nn_cyc, Direction::symmetric};
    const OptimizerConfig cfg;
    const auto serial = register_batch(batch, spec, cfg, Execution::serial);
    const auto parallel = register_batch(batch, spec, cfg, Execution::parallel);
    ASSERT_EQ(serial.size(), batch.size());
    ASSERT_EQ(parallel.size(), batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        EXPECT_EQ(serial[i].loss_trace, parallel[i].loss_trace);
        EXPECT_EQ(serial[i].theta_ab.params(), parallel[i].theta_ab.params());
        EXPECT_EQ(serial[i].theta_ba.params(), parallel[i].theta_ba.params());
        const RegistrationResult direct = register_pair(batch[i], spec, cfg);
        EXPECT_EQ(direct.loss_trace, serial[i].loss_trace);
    }
}

TEST(RegisterBatch, RethrowsLowestFailingPair) {
    std::vector<PairSample> batch = generate_batch(regime_config(Regime::easy, 2), 4);
    batch[1].source.clear();
    batch[1].pair_id = "first-bad";
    batch[3].target.clear();
    batch[3].pair_id = "second-bad";
    for (Execution e : {Execution::serial, Execution::parallel}) {
        try {
            register_batch(batch, {}, OptimizerConfig{}, e);
            FAIL() << "expected EmptySetError";
        } catch (const EmptySetError &err) {
            EXPECT_NE(std::string(err.what()).find("first-bad"), std::string::npos);
        }
    }
}

TEST(RegisterBatch, EmptyBatchGivesNoResults) {
    EXPECT_TRUE(register_batch({}, {}, OptimizerConfig{}).empty());
    EXPECT_GE(max_threads(), 1);
}
