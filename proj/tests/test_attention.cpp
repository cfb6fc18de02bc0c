#include <gtest/gtest.h>

#include <vector>

#include "brute_force.hpp"
#include "polyprobe/attention.hpp"

using namespace polyprobe;

namespace {

RowMatrix<double> to_matrix(const oracle::Rows& rows) {
  RowMatrix<double> m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t d = 0; d < rows[i].size(); ++d) m(i, d) = rows[i][d];
  }
  return m;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected polyprobe::Error";
  return ErrorKind::InvalidConfig;
}

}  // namespace

TEST(HeadAttention, SingleTokenSpansReturnRawWeight) {
  Rng rng(1);
  auto a = oracle::random_stochastic(rng, 5);
  EXPECT_EQ(head_attention_to_cue(to_matrix(a).view(), {1, 2}, {3, 4}), a[1][3]);
}

TEST(HeadAttention, UniformAttentionGivesCueShare) {
  for (std::size_t n = 2; n <= 12; ++n) {
    RowMatrix<double> a(n, n, 1.0 / static_cast<double>(n));
    for (std::size_t m = 1; m < n; ++m) {
      const double got = head_attention_to_cue(a.view(), {0, 1}, {1, 1 + m});
      EXPECT_NEAR(got, static_cast<double>(m) / static_cast<double>(n), 1e-15);
    }
  }
}

TEST(HeadAttention, MatchesDoubleLoop) {
  Rng rng(2);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t n = 4 + rng.below(10);
    auto a = oracle::random_stochastic(rng, n);
    const std::size_t t0 = rng.below(n - 3);
    const std::size_t c0 = t0 + 2 + rng.below(n - t0 - 3);
    EXPECT_NEAR(head_attention_to_cue(to_matrix(a).view(), {t0, t0 + 2}, {c0, c0 + 1}),
                oracle::attention_to_cue(a, t0, t0 + 2, c0, c0 + 1), 1e-12);
  }
}

TEST(HeadAttention, Errors) {
  Rng rng(3);
  auto a = oracle::random_stochastic(rng, 5);
  EXPECT_EQ(kind_of([&] { head_attention_to_cue(to_matrix(a).view(), {1, 3}, {2, 4}); }), ErrorKind::SpanOverlap);
  a[2][0] += 0.1;
  EXPECT_EQ(kind_of([&] { head_attention_to_cue(to_matrix(a).view(), {0, 1}, {3, 4}); }), ErrorKind::RowSumViolation);
}

TEST(AggregateLayers, Basics) {
  RowMatrix<double> one(3, 1);
  one(0, 0) = 0.1;
  one(1, 0) = 0.5;
  one(2, 0) = 0.2;
  auto agg = aggregate_layers(one.view());
  EXPECT_EQ(agg.layer_mean, agg.layer_max);

  RowMatrix<double> two(1, 2);
  two(0, 0) = 0.2;
  two(0, 1) = 0.4;
  agg = aggregate_layers(two.view());
  EXPECT_NEAR(agg.layer_mean[0], 0.3, 1e-15);
  EXPECT_EQ(agg.layer_max[0], 0.4);
}

TEST(AggregateLayers, MatchesLoopAndMaxDominatesMean) {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t layers = 1 + rng.below(12);
    const std::size_t heads = 1 + rng.below(16);
    RowMatrix<double> m(layers, heads);
    for (double& v : m.values) v = rng.uniform();
    auto agg = aggregate_layers(m.view());
    for (std::size_t l = 0; l < layers; ++l) {
      double sum = 0.0;
      double best = 0.0;
      for (std::size_t h = 0; h < heads; ++h) {
        sum += m(l, h);
        best = std::max(best, m(l, h));
      }
      EXPECT_NEAR(agg.layer_mean[l], sum / static_cast<double>(heads), 1e-15);
      EXPECT_EQ(agg.layer_max[l], best);
      EXPECT_GE(agg.layer_max[l], agg.layer_mean[l]);
    }
  }
}

TEST(CumulativeMax, Examples) {
  EXPECT_EQ(cumulative_max(std::vector<double>{0.1, 0.3, 0.2}), (std::vector<double>{0.1, 0.3, 0.3}));
  std::vector<double> up{0.1, 0.2, 0.2, 0.9};
  EXPECT_EQ(cumulative_max(up), up);
  EXPECT_TRUE(cumulative_max(std::vector<double>{}).empty());
}

TEST(CumulativeMax, PrefixProperty) {
  Rng rng(5);
  for (int rep = 0; rep < 10000; ++rep) {
    std::vector<double> v(1 + rng.below(30));
    for (double& x : v) x = rng.uniform();
    auto c = cumulative_max(v);
    for (std::size_t l = 0; l < v.size(); ++l) {
      ASSERT_EQ(c[l], *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(l) + 1));
      if (l > 0) ASSERT_GE(c[l], c[l - 1]);
    }
  }
}

TEST(AttentionToCue, WholeTrace) {
  SentenceTraceHeader h{"p1#a", {"[CLS]", "the", "bark", "of", "tree", "[SEP]"}, {2, 3}, {4, 5},
                        {true, false, false, false, false, true}};
  ActivationTrace t(h, 3, 2, 4);
  Rng rng(6);
  for (std::size_t l = 1; l <= 3; ++l) {
    for (std::size_t head = 0; head < 2; ++head) {
      auto a = oracle::random_stochastic(rng, 6);
      for (std::size_t i = 0; i < 6; ++i) {
        auto row = t.attention_row(l, head, i);
        for (std::size_t j = 0; j < 6; ++j) row[j] = static_cast<float>(a[i][j]);
      }
    }
  }
  auto out = attention_to_cue(t);
  ASSERT_EQ(out.per_head.rows, 3u);
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t head = 0; head < 2; ++head) {
      EXPECT_DOUBLE_EQ(out.per_head(l, head), static_cast<double>(t.attention_map(l + 1, head)(2, 4)));
    }
    EXPECT_GE(out.layer_max[l], out.layer_mean[l]);
  }
  EXPECT_EQ(out.cum_max, cumulative_max(out.layer_max));
}
