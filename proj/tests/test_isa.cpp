#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace bismo;
using namespace bismo::isa;

namespace {

const char* kConstrained2Bit = R"(# constrained-buffer 2-bit example
F run dram_base=16 block_size_bytes=8 block_offset_bytes=8 block_count=2 buf_offset=0 buf_start=0 buf_range=2 words_per_buffer=1
F run dram_base=80 block_size_bytes=8 block_offset_bytes=8 block_count=2 buf_offset=0 buf_start=2 buf_range=2 words_per_buffer=1
F signal execute
F run dram_base=0 block_size_bytes=8 block_offset_bytes=8 block_count=2 buf_offset=1 buf_start=0 buf_range=2 words_per_buffer=1
F signal execute
F wait execute
F run dram_base=64 block_size_bytes=8 block_offset_bytes=8 block_count=2 buf_offset=0 buf_start=2 buf_range=2 words_per_buffer=1
F signal execute
E wait fetch
E run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc=zero
E wait fetch
E run lhs_offset=1 rhs_offset=0 dot_length=1 negate=0 acc=shl1
E signal fetch
E wait fetch
E run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc=keep
E run lhs_offset=1 rhs_offset=0 dot_length=1 negate=0 acc=shl1
E signal result
R wait execute
R run dram_base=128 offset=0
)";

Instruction random_instruction(std::mt19937_64& rng, char& queue) {
  auto u = [&](std::uint64_t hi) { return rng() % hi; };
  const Stage stages[] = {Stage::Fetch, Stage::Execute, Stage::Result};
  switch (u(6)) {
    case 0: {
      const Stage s = stages[u(3)];
      queue = stage_letter(s);
      return Wait{s, stages[u(3)]};
    }
    case 1: {
      const Stage s = stages[u(3)];
      queue = stage_letter(s);
      return Signal{s, stages[u(3)]};
    }
    case 2:
      queue = 'F';
      return RunFetch{rng(), u(1u << 20), u(1u << 20), u(64), u(4096), u(32), u(32), u(1024)};
    case 3:
      queue = 'E';
      return RunExecute{u(4096), u(4096), u(4096), static_cast<bool>(u(2)),
                        static_cast<AccMode>(u(3))};
    case 4:
      queue = 'R';
      return RunResult{rng(), u(1u << 30)};
    default:
      queue = 'P';
      return RunP2S{rng(), rng(), u(4096), u(4096), u(64)};
  }
}

Program random_program(std::mt19937_64& rng) {
  Program p;
  const std::size_t n = rng() % 40;
  for (std::size_t i = 0; i < n; ++i) {
    char q;
    auto ins = random_instruction(rng, q);
    (q == 'F' ? p.fetch : q == 'E' ? p.execute : q == 'R' ? p.result : p.p2s).push_back(ins);
  }
  if (rng() % 3 == 0) p.meta["k" + std::to_string(rng() % 10)] = std::to_string(rng());
  return p;
}

}  // namespace

TEST(Encode, WaitRoundTrips) {
  const Program p = decode("E wait fetch\n");
  ASSERT_EQ(p.execute.size(), 1u);
  EXPECT_EQ(std::get<Wait>(p.execute[0]), (Wait{Stage::Execute, Stage::Fetch}));
  EXPECT_EQ(encode(p), "E wait fetch\n");
}

TEST(Encode, ShiftedExecute) {
  RunExecute e{0, 0, 1, false, AccMode::ShiftLeft1};
  EXPECT_EQ(encode(Instruction{e}), "E run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc=shl1");
}

TEST(Encode, FuzzedProgramsRoundTrip) {
  std::mt19937_64 rng(41);
  for (int it = 0; it < 1000; ++it) {
    const Program p = random_program(rng);
    const std::string text = encode(p);
    const Program q = decode(text);
    ASSERT_EQ(q, p);
    ASSERT_EQ(encode(q), text);
  }
}

TEST(Decode, Constrained2BitShape) {
  const Program p = decode(kConstrained2Bit);
  EXPECT_EQ(p.fetch.size(), 8u);
  EXPECT_EQ(p.execute.size(), 9u);
  EXPECT_EQ(p.result.size(), 2u);
}

TEST(Decode, ReportsLineAndField) {
  try {
    decode("F signal execute\nE run lhs_offset=0 rhs_offset=x dot_length=1 negate=0 acc=keep\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos);
    EXPECT_NE(msg.find("rhs_offset"), std::string::npos);
  }
}

TEST(Decode, Malformed) {
  for (const char* bad : {"X run\n", "F jump\n", "E run lhs_offset=0\n",
                          "E run lhs_offset=0 rhs_offset=0 dot_length=1 negate=2 acc=keep\n",
                          "E run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc=up\n",
                          "R run dram_base=1 offset=2 extra=3\n", "R run dram_base=1 dram_base=2\n",
                          "P wait fetch\n", "F wait\n", "F wait nowhere\n", "F signal execute now\n",
                          "R run offset\n", "#@ novalue\n"}) {
    EXPECT_EQ(bismo::testing::error_kind_of([&] { decode(bad); }), ErrorKind::Format) << bad;
  }
}

TEST(Decode, CommentsAndBlankLines) {
  const Program p = decode("\n# hello\nR wait execute   # trailing\n\r\n");
  EXPECT_EQ(p.result.size(), 1u);
}

TEST(Validate, Constrained2BitIsValid) {
  const auto v = validate(decode(kConstrained2Bit), bismo::testing::constrained_2x2());
  EXPECT_TRUE(v.ok());
  for (const auto& d : v.diagnostics) EXPECT_NE(d.severity, Severity::Error) << d.to_string();
}

TEST(Validate, EmptyProgram) {
  const auto v = validate(Program{}, HwConfig{});
  EXPECT_TRUE(v.ok());
  EXPECT_TRUE(v.diagnostics.empty());
}

TEST(Validate, BufferIndexOutOfRange) {
  HwConfig cfg;
  Program p;
  p.fetch.push_back(RunFetch{0, 8, 8, 1, 0, cfg.dm * cfg.dn, 1, 1});
  const auto v = validate(p, cfg);
  EXPECT_FALSE(v.ok());
  EXPECT_TRUE(v.mentions("buffer index out of range"));
}

TEST(Validate, BufferOffsetOutOfRange) {
  HwConfig cfg = bismo::testing::constrained_2x2();
  Program p;
  p.fetch.push_back(RunFetch{0, 16, 16, 2, 0, 2, 2, 2});  // two words into a depth-1 buffer
  EXPECT_TRUE(validate(p, cfg).mentions("buffer offset out of range"));
  p.fetch[0] = RunFetch{0, 16, 16, 2, 0, 0, 2, 2};  // LHS depth 2: fine
  EXPECT_TRUE(validate(p, cfg).ok());
  Program e;
  e.execute.push_back(RunExecute{1, 0, 2, false, AccMode::Zero});
  EXPECT_TRUE(validate(e, cfg).mentions("(lhs)"));
}

TEST(Validate, IllegalFifoPairs) {
  Program p;
  p.fetch.push_back(Signal{Stage::Fetch, Stage::Result});
  p.result.push_back(Wait{Stage::Result, Stage::Fetch});
  p.execute.push_back(Wait{Stage::Execute, Stage::Execute});
  const auto v = validate(p, HwConfig{});
  EXPECT_EQ(v.errors(), 3u);
  EXPECT_TRUE(v.mentions("illegal fifo pair"));
}

TEST(Validate, TokenCounts) {
  Program p;
  p.execute.push_back(Wait{Stage::Execute, Stage::Fetch});
  EXPECT_TRUE(validate(p, HwConfig{}).mentions("token deadlock"));
  Program q;
  q.fetch.push_back(Signal{Stage::Fetch, Stage::Execute});
  const auto v = validate(q, HwConfig{});
  EXPECT_TRUE(v.ok());
  EXPECT_TRUE(v.mentions("unconsumed"));
  HwConfig small;
  small.fifo_capacity = 1;
  q.fetch.push_back(Signal{Stage::Fetch, Stage::Execute});
  EXPECT_FALSE(validate(q, small).ok());
}

TEST(Validate, WrongQueue) {
  Program p;
  p.result.push_back(RunFetch{});
  p.fetch.push_back(RunExecute{});
  p.p2s.push_back(Wait{Stage::Fetch, Stage::Execute});
  p.execute.push_back(Wait{Stage::Fetch, Stage::Execute});
  const auto v = validate(p, HwConfig{});
  EXPECT_EQ(v.errors(), 5u);
  EXPECT_TRUE(v.mentions("wrong queue"));
  EXPECT_TRUE(v.mentions("accepts only RunP2S"));
}

TEST(Validate, P2SChecks) {
  Program p;
  p.p2s.push_back(RunP2S{0, 0, 2, 64, 9});
  p.p2s.push_back(RunP2S{0, 0, 2, 70, 4});
  const auto v = validate(p, HwConfig{});
  EXPECT_EQ(v.errors(), 2u);
}

TEST(Validate, ResultWithoutCommit) {
  Program p;
  p.result.push_back(RunResult{0, 0});
  EXPECT_FALSE(validate(p, HwConfig{}).ok());
}

TEST(Routing, MaxAddressMatchesEnumeration) {
  std::mt19937_64 rng(43);
  for (int it = 0; it < 500; ++it) {
    RunFetch f{0, 8, 8, 1, rng() % 7, 0, 1 + rng() % 5, 1 + rng() % 6};
    const std::uint64_t words = 1 + rng() % 60;
    std::vector<std::int64_t> expect(f.buf_range, -1);
    for (std::uint64_t w = 0; w < words; ++w) {
      const auto t = route_word(f, w);
      expect[t.buffer] = std::max<std::int64_t>(expect[t.buffer], static_cast<std::int64_t>(t.address));
    }
    EXPECT_EQ(max_addresses(f, words), expect);
  }
}
