#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "plab/error.hpp"
#include "plab/eval.hpp"
#include "bleu_reference.hpp"
#include "test_util.hpp"

using namespace plab;

namespace {

Matrix column(std::initializer_list<double> xs) {
  Matrix m(xs.size(), 1);
  std::copy(xs.begin(), xs.end(), m.data.begin());
  return m;
}

}  // namespace

TEST(Bleu, Examples) {
  EXPECT_DOUBLE_EQ(bleu("the quick brown fox", "the quick brown fox"), 100.0);
  EXPECT_EQ(bleu("x y z", "a b c"), 0.0);
  EXPECT_EQ(bleu("", "a b c"), 0.0);
  EXPECT_NEAR(bleu("the cat sat", "the cat sat down"), 100.0 * std::exp(-1.0 / 3.0), 1e-9);
  EXPECT_NEAR(bleu("the cat sat", "the cat sat down"), test::reference_bleu("the cat sat", "the cat sat down"), 1e-6);
}

TEST(Bleu, MatchesReferenceImplementation) {
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const auto c = test::random_sentence(rng), r = test::random_sentence(rng);
    const double got = bleu(c, r);
    EXPECT_NEAR(got, test::reference_bleu(c, r), 1e-6) << "'" << c << "' vs '" << r << "'";
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 100.0);
  }
}

TEST(TokenF1, Table) {
  EXPECT_EQ(token_f1("a b c", "a b c"), 1.0);
  EXPECT_EQ(token_f1("a b", "c d"), 0.0);
  EXPECT_EQ(token_f1("a b", "b c"), 0.5);
  EXPECT_EQ(token_f1("", ""), 1.0);
  EXPECT_EQ(token_f1("a", ""), 0.0);
  EXPECT_EQ(token_f1("a a b", "a b b"), 2.0 * 2 / 6);
  EXPECT_EQ(token_f1("A b", "a B"), 1.0);
}

TEST(ExactMatch, Table) {
  EXPECT_EQ(exact_match("a b", "a  b "), 1.0);
  EXPECT_EQ(exact_match("a b", "a c"), 0.0);
  EXPECT_EQ(exact_match("", ""), 1.0);
  EXPECT_EQ(exact_match("\ta\nb", "a b"), 1.0);
  EXPECT_EQ(exact_match("A b", "a b"), 0.0);
}

TEST(SuccessAtN, HandRanking) {
  // 1-D DOT. Query +1 ranks p1 (3) then adv (2): rank 2.
  // Query -1 ranks p4, p3, p2, adv, p1: rank 4.
  const auto idx = ExactIndex::build(column({3, 1, 0.5, 0.2, 2}), {"p1", "p2", "p3", "p4", "adv"}, Metric::Dot);
  const std::vector<std::size_t> ns{1, 2, 3, 4, 5};
  const auto r = success_at_n(idx, column({1, -1}), {"adv"}, ns);
  EXPECT_EQ(r.success_at.at(1), 0.0);
  EXPECT_EQ(r.success_at.at(2), 0.5);
  EXPECT_EQ(r.success_at.at(3), 0.5);
  EXPECT_EQ(r.success_at.at(4), 1.0);
  EXPECT_EQ(r.success_at.at(5), 1.0);
  const auto none = success_at_n(idx, column({1, -1}), {}, ns);
  for (const auto& [n, x] : none.success_at) EXPECT_EQ(x, 0.0);
}

TEST(SuccessAtN, MonotoneAndSupersetProperty) {
  Rng rng(32);
  const std::vector<std::size_t> ns{1, 2, 5, 10, 20, 50, 100, 1000};
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 50 + rng.uniform_int(100), d = 2 + rng.uniform_int(8);
    const auto m = test::random_matrix(n, d, derive_seed(33, inst));
    const auto idx = ExactIndex::build(m, test::numbered_ids(n), inst % 2 ? Metric::Dot : Metric::Cosine);
    std::vector<InjectEntry> small, large;
    const std::size_t k_small = 1 + rng.uniform_int(5), k_large = k_small + 1 + rng.uniform_int(10);
    for (std::size_t c = 0; c < k_large; ++c) {
      InjectEntry e{"adv" + std::to_string(c), test::random_embedding(d, rng)};
      if (c < k_small) small.push_back(e);
      large.push_back(e);
    }
    std::unordered_set<std::string> s_ids, l_ids;
    for (const auto& e : small) s_ids.insert(e.id);
    for (const auto& e : large) l_ids.insert(e.id);
    const auto q = test::random_matrix(30, d, derive_seed(34, inst));
    const auto a = success_at_n(idx.inject(small), q, s_ids, ns);
    const auto b = success_at_n(idx.inject(large), q, l_ids, ns);
    double prev = 0;
    for (std::size_t x : ns) {
      EXPECT_GE(b.success_at.at(x), a.success_at.at(x)) << "instance " << inst << " n " << x;
      EXPECT_GE(a.success_at.at(x), prev);
      prev = a.success_at.at(x);
    }
    EXPECT_EQ(a.success_at.at(1000), 1.0);
  }
}

TEST(TopkAccuracy, HandRanking) {
  // Passage i scores +i for query +1 and -i for query -1.
  Matrix m(20, 1);
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::string> texts;
  for (int i = 1; i <= 20; ++i) {
    m.data[i - 1] = i;
    ids.push_back("p" + std::to_string(100 + i));
    texts[ids.back()] = "Token w" + std::to_string(i) + "x here";
  }
  const auto idx = ExactIndex::build(m, ids, Metric::Dot);
  const std::vector<Query> qs{{"q1", "", {}, {"w20x"}},          // rank 1
                              {"q2", "", {}, {"  TOKEN   w16x "}},  // rank 5, normalized
                              {"q3", "", {}, {"absent"}},
                              {"q4", "", {}, {}}};  // answerless, skipped
  const std::vector<std::size_t> ks{1, 5, 10};
  const auto r = topk_accuracy(idx, column({1, 1, -1, 1}), qs, texts, ks);
  EXPECT_EQ(r.evaluated, 3u);
  EXPECT_DOUBLE_EQ(r.accuracy_at.at(1), 1.0 / 3);
  EXPECT_DOUBLE_EQ(r.accuracy_at.at(5), 2.0 / 3);
  EXPECT_DOUBLE_EQ(r.accuracy_at.at(10), 2.0 / 3);

  const std::vector<Query> none{{"q", "", {}, {}}};
  EXPECT_THROW(topk_accuracy(idx, column({1}), none, texts, ks), DataError);
}

TEST(TopkAccuracy, InjectedIdsNeverMatch) {
  const auto idx = ExactIndex::build(column({1, 2}), {"p1", "p2"}, Metric::Dot);
  const std::vector<InjectEntry> adv{{"adv", Embedding({5.0})}};
  const std::unordered_map<std::string, std::string> texts{{"p1", "apple"}, {"p2", "pear"}};
  const std::vector<Query> qs{{"q", "", {}, {"apple"}}};
  const std::vector<std::size_t> ks{1, 2, 3};
  const auto r = topk_accuracy(idx.inject(adv), column({1}), qs, texts, ks);
  EXPECT_EQ(r.accuracy_at.at(1), 0.0);
  EXPECT_EQ(r.accuracy_at.at(2), 0.0);
  EXPECT_EQ(r.accuracy_at.at(3), 1.0);
}

TEST(NormalizeAnswer, CollapsesAndLowercases) {
  EXPECT_EQ(normalize_answer_text("  The\tCat \n Sat "), "the cat sat");
  EXPECT_EQ(normalize_answer_text(""), "");
}

TEST(ReconCos, Examples) {
  std::vector<std::string> tokens{std::string(kUnkToken)};
  for (TokenId i = 1; i < 30; ++i) tokens.push_back(synthetic_word(i));
  const Vocabulary vocab(tokens);
  const Embedder e({16, Pooling::Mean, Metric::Cosine, HashedSource{42}}, vocab);
  const std::string a = tokens[3] + " " + tokens[5] + " " + tokens[7];
  const std::string perm = tokens[7] + " " + tokens[3] + " " + tokens[5];
  const std::string b = tokens[3] + " " + tokens[9];
  EXPECT_DOUBLE_EQ(recon_cos(a, a, e), 1.0);
  EXPECT_NEAR(recon_cos(a, perm, e), 1.0, 1e-15);
  // Direct arithmetic from the table rows.
  std::vector<double> va(16, 0.0), vb(16, 0.0);
  for (TokenId t : {3u, 5u, 7u})
    for (std::size_t j = 0; j < 16; ++j) va[j] += e.table().row(t)[j] / 3.0;
  for (TokenId t : {3u, 9u})
    for (std::size_t j = 0; j < 16; ++j) vb[j] += e.table().row(t)[j] / 2.0;
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t j = 0; j < 16; ++j) ab += va[j] * vb[j], aa += va[j] * va[j], bb += vb[j] * vb[j];
  EXPECT_NEAR(recon_cos(a, b, e), ab / std::sqrt(aa * bb), 1e-12);
  EXPECT_THROW(recon_cos("", a, e), InvalidArgument);
}

TEST(ReconSuite, PerfectReconstructionScoresOne) {
  std::vector<std::string> tokens{std::string(kUnkToken)};
  for (TokenId i = 1; i < 40; ++i) tokens.push_back(synthetic_word(i));
  const Vocabulary vocab(tokens);
  const Embedder e({64, Pooling::Mean, Metric::Cosine, HashedSource{42}}, vocab);
  const std::vector<TokenId> toks{4};
  const std::vector<Passage> sample{{"p0", tokens[4], toks}};
  const auto targets = recon_targets(sample, e, DefensePipeline({}, 64));
  const Inverter inv(e.table(), Pooling::Mean, Metric::Cosine);
  const auto r = recon_suite(sample, targets, inv, {}, e);
  EXPECT_EQ(r.exact, 1.0);
  EXPECT_EQ(r.token_f1, 1.0);
  EXPECT_EQ(r.samples[0].reconstructed, tokens[4]);
}

TEST(SampleIndices, DistinctAndComplete) {
  const auto s = sample_indices(100, 30, 5);
  EXPECT_EQ(s.size(), 30u);
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 30u);
  EXPECT_EQ(s, sample_indices(100, 30, 5));
  const auto all = sample_indices(5, 10, 5);
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(PairedTTest, KnownValue) {
  const std::vector<double> a{1, 2, 3, 4, 5.5}, b{1, 1, 1, 1, 1};
  const auto t = paired_t_test(a, b);
  EXPECT_EQ(t.df, 4u);
  EXPECT_NEAR(t.t, 2.6887744785908154, 1e-12);
  EXPECT_NEAR(t.p, 0.054727611667149935, 1e-9);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{1}), InvalidArgument);
}
