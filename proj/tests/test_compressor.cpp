#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace bismo;
using namespace bismo::compressor;

namespace {

std::uint64_t popcount_and(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] & b[i];
  return s;
}

}  // namespace

TEST(Library, CountersPreserveValue) {
  for (const auto& c : default_library()) EXPECT_TRUE(c.preserves_value()) << c.name;
  EXPECT_TRUE(default_library()[0].is_full_adder());
}

TEST(Precompress, HeightsAreCeilThird) {
  for (std::size_t w = 1; w <= 100; ++w) {
    const auto h = precompressed_heights(w);
    EXPECT_EQ(h[0], (w + 2) / 3);
    std::vector<std::uint8_t> ones(w, 1);
    EXPECT_EQ(precompress(ones, ones).heights()[0], h[0]);
    EXPECT_EQ(precompress(ones, ones).value(), w);
  }
}

TEST(Precompress, RejectsLengthMismatch) {
  std::vector<std::uint8_t> a(4), b(5);
  EXPECT_EQ(bismo::testing::error_kind_of([&] { precompress(a, b); }), ErrorKind::Dimension);
}

TEST(Plan, TrivialWidthHasNoStages) {
  const auto p = popcount_plan(3);
  EXPECT_TRUE(p.stages.empty());
  EXPECT_EQ(pipeline_depth(3), 3u);
  EXPECT_TRUE(counter_stats(p).empty());
}

TEST(Plan, Width32TwoStages) {
  const auto p = popcount_plan(32);
  ASSERT_EQ(p.stages.size(), 2u);
  EXPECT_EQ(p.initial_heights, (Heights{11, 11}));
  const auto stage1 = counter_stats(CompressionPlan{32, p.library, p.initial_heights, {p.stages[0]}});
  EXPECT_EQ(stage1.at("(2,5:4)"), 2u);
  EXPECT_EQ(stage1.at("(6:3)"), 1u);
  EXPECT_LE(p.final_rows(), 3u);
  EXPECT_EQ(pipeline_depth(32), 5u);
}

TEST(Plan, DepthAtMostTenFor1024) {
  EXPECT_LE(pipeline_depth(1024), 10u);
  std::size_t prev = 0;
  for (std::size_t w : {32, 64, 128, 256, 512, 1024}) {
    EXPECT_GE(pipeline_depth(w), prev);
    prev = pipeline_depth(w);
  }
}

TEST(Plan, HeightsNeverGrowAndEndAtThree) {
  for (std::size_t w = 1; w <= 300; ++w) {
    const auto p = popcount_plan(w);
    std::size_t h = max_height(p.initial_heights);
    for (const auto& st : p.stages) {
      EXPECT_LT(max_height(st.heights_after), h) << w;
      h = max_height(st.heights_after);
    }
    EXPECT_LE(p.final_rows(), 3u) << w;
  }
}

TEST(Simulate, ExhaustiveUpToTwelve) {
  for (std::size_t w = 1; w <= 12; ++w) {
    const auto plan = popcount_plan(w);
    for (std::uint32_t a = 0; a < (1u << w); ++a) {
      std::vector<std::uint8_t> va(w), ones(w, 1);
      for (std::size_t i = 0; i < w; ++i) va[i] = (a >> i) & 1u;
      ASSERT_EQ(simulate(plan, va, ones), popcount_and(va, ones)) << w << " " << a;
    }
    // A against B, for a sample of B patterns.
    for (std::uint32_t b = 0; b < (1u << w); b += 1 + (1u << w) / 16)
      for (std::uint32_t a = 0; a < (1u << w); ++a) {
        std::vector<std::uint8_t> va(w), vb(w);
        for (std::size_t i = 0; i < w; ++i) {
          va[i] = (a >> i) & 1u;
          vb[i] = (b >> i) & 1u;
        }
        ASSERT_EQ(simulate(plan, va, vb), popcount_and(va, vb));
      }
  }
}

TEST(Simulate, RandomWideVectorsPreserveValuePerStage) {
  std::mt19937_64 rng(31);
  for (std::size_t w : {32, 64, 128, 256, 512, 1024}) {
    const auto plan = popcount_plan(w);
    for (int it = 0; it < 300; ++it) {
      std::vector<std::uint8_t> a(w), b(w);
      const unsigned density = rng() % 4;
      for (std::size_t i = 0; i < w; ++i) {
        a[i] = density == 0 ? 1 : rng() & 1;
        b[i] = density == 1 ? 1 : rng() & 1;
      }
      const auto trace = simulate_trace(plan, a, b);
      const auto expect = popcount_and(a, b);
      for (auto v : trace) ASSERT_EQ(v, expect) << w;
    }
  }
}

TEST(Simulate, WidthMismatchRejected) {
  const auto plan = popcount_plan(8);
  std::vector<std::uint8_t> a(9), b(9);
  EXPECT_EQ(bismo::testing::error_kind_of([&] { simulate(plan, a, b); }), ErrorKind::Dimension);
}

TEST(Schedule, RejectsLibraryWithoutFullAdder) {
  std::vector<Counter> lib{{"(6:3)", {6}, 3, 3}};
  EXPECT_THROW(schedule(Heights{10, 10}, lib), Error);
}

TEST(Reference, TableRowsPresent) {
  EXPECT_TRUE(reference_stats(1024).has_value());
  EXPECT_FALSE(reference_stats(48).has_value());
  EXPECT_EQ(reference_stats(32)->c25, 3u);
}

TEST(DotDiagram, Shape) { EXPECT_EQ(dot_diagram({2, 1}), " *\n**\n"); }
