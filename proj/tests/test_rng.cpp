#include <gtest/gtest.h>

#include <numeric>
#include <stdexcept>
#include <vector>

#include "worldprobe/parallel.hpp"
#include "worldprobe/rng.hpp"

using namespace worldprobe;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DerivedStreamsDiffer) {
    const auto s1 = derive_seed(0, "bootstrap", 0);
    const auto s2 = derive_seed(0, "bootstrap", 1);
    const auto s3 = derive_seed(0, "permutation", 0);
    const auto s4 = derive_seed(1, "bootstrap", 0);
    EXPECT_NE(s1, s2);
    EXPECT_NE(s1, s3);
    EXPECT_NE(s1, s4);
}

TEST(Rng, UniformInRange) {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
    for (int i = 0; i < 10000; ++i) ASSERT_LT(rng.uniform_index(13), 13u);
}

TEST(Rng, NormalMoments) {
    Rng rng(3);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sumsq / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsDeterministicPermutation) {
    std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7}, v2 = v1, sorted = v1;
    Rng a(9), b(9);
    a.shuffle(v1);
    b.shuffle(v2);
    EXPECT_EQ(v1, v2);
    std::sort(v1.begin(), v1.end());
    EXPECT_EQ(v1, sorted);
}

TEST(ParallelFor, CoversEveryIndexOnceForAnyThreadCount) {
    for (unsigned threads : {1u, 2u, 5u}) {
        std::vector<int> hits(257, 0);
        parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
        EXPECT_EQ(std::accumulate(hits.begin(), hits.end(), 0), 257);
        for (int h : hits) ASSERT_EQ(h, 1);
    }
}

TEST(ParallelFor, PropagatesWorkerExceptions) {
    EXPECT_THROW(parallel_for(16, 4,
                              [](std::size_t i) {
                                  if (i == 7) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}
