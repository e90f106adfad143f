#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "alseq/crf.hpp"
#include "alseq/error.hpp"
#include "alseq/neural.hpp"
#include "alseq/rng.hpp"
#include "alseq/strategies.hpp"
#include "oracles.hpp"

using namespace alseq;

TEST_CASE("least confidence and MNLP formulas") {
    CHECK(lc_score(0.0, 4) == 0.0);
    CHECK(lc_score(-1.0, 4) == doctest::Approx(1.0 - std::exp(-1.0)));
    CHECK(mnlp_score(-6.0, 3) == doctest::Approx(2.0));
    CHECK(mnlp_score(0.0, 3) == 0.0);
    CHECK_THROWS_AS(lc_score(-1.0, 0), RuntimeError);
    CHECK_THROWS_AS(mnlp_score(-1.0, 0), RuntimeError);
    // positive log-probabilities are clamped, never negative scores
    CHECK(lc_score(0.5, 2) == 0.0);
    CHECK(mnlp_score(0.5, 2) == 0.0);
}

TEST_CASE("equal per-token log-probability gives equal MNLP regardless of length") {
    const double per_token = -0.8125;  // exactly representable
    for (const int n : {1, 2, 4, 8, 16, 64}) {
        const double lp = per_token * n;
        CHECK(mnlp_score(lp, n) == -per_token);  // bitwise, power-of-two division
    }
}

TEST_CASE("LC and MNLP rank fixed-length candidates identically") {
    Rng rng(40);
    const int n = 7;
    std::vector<double> lps;
    for (int i = 0; i < 60; ++i) lps.push_back(-rng.uniform(0.01, 20.0));
    for (std::size_t a = 0; a < lps.size(); ++a)
        for (std::size_t b = 0; b < lps.size(); ++b) {
            const bool lc_prefers = lc_score(lps[a], n) > lc_score(lps[b], n);
            const bool mnlp_prefers = mnlp_score(lps[a], n) > mnlp_score(lps[b], n);
            REQUIRE(lc_prefers == mnlp_prefers);
        }
}

TEST_CASE("vote ratios and mutual information match direct transliterations") {
    Rng rng(123);
    double max_vr_diff = 0, max_bald_diff = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int M = 2 + static_cast<int>(rng.below(9));
        const int n = 1 + static_cast<int>(rng.below(7));
        const int C = 2 + static_cast<int>(rng.below(5));
        const auto sp = oracle::random_predictions(rng, M, n, C);

        const double vr = vr_score(sp);
        const double bald = bald_score(sp);
        max_vr_diff = std::max(max_vr_diff, std::fabs(vr - oracle::vr(sp)));
        max_bald_diff = std::max(max_bald_diff, std::fabs(bald - oracle::bald(sp)));

        REQUIRE(vr >= 0.0);
        REQUIRE(vr <= 1.0 - 1.0 / M);
        REQUIRE(bald >= 0.0);
        REQUIRE(bald <= std::log(static_cast<double>(C)) + 1e-12);
    }
    CHECK(max_vr_diff <= 1e-10);
    CHECK(max_bald_diff <= 1e-10);
}

TEST_CASE("identical passes score exactly zero disagreement") {
    Rng rng(9);
    auto sp = oracle::random_predictions(rng, 1, 5, 4);
    const auto row_block = sp.data;
    sp.passes = 6;
    sp.data.clear();
    for (int m = 0; m < 6; ++m) sp.data.insert(sp.data.end(), row_block.begin(), row_block.end());
    CHECK(vr_score(sp) == 0.0);
    CHECK(bald_score(sp) == 0.0);
}

TEST_CASE("argmax voting breaks ties toward the lower class") {
    StochasticPredictions sp;
    sp.passes = 2;
    sp.length = 1;
    sp.num_classes = 2;
    sp.data = {0.5, 0.5, 0.5, 0.5};  // both passes tie between the classes
    CHECK(vr_score(sp) == 0.0);      // both vote class 0
}

namespace {

struct Fixture {
    Corpus corpus;
    std::vector<const Sentence*> pool;

    explicit Fixture(int sentences = 12) {
        SynthSpec spec;
        spec.entity_types = 3;
        spec.vocabulary = 120;
        spec.sentences = sentences;
        spec.seed = 21;
        corpus = synth_corpus(spec);
        for (const auto& s : corpus.sentences) pool.push_back(&s);
    }

    std::vector<LabeledSentence> examples() const {
        std::vector<LabeledSentence> out;
        for (const auto& s : corpus.sentences) {
            std::vector<int> tags;
            for (const auto& t : s.tokens) tags.push_back(corpus.tagset.index_of(t.gold_tag));
            out.push_back({&s, tags});
        }
        return out;
    }
};

}  // namespace

TEST_CASE("random scoring is a seeded permutation independent of the model") {
    const Fixture fx;
    const CrfModel model = train_crf(fx.examples(), fx.corpus.tagset, {});
    const auto s1 = score_pool(model, fx.pool, Strategy::random, {}, 5);
    const auto s2 = score_pool(model, fx.pool, Strategy::random, {}, 5);
    const auto s3 = score_pool(model, fx.pool, Strategy::random, {}, 6);
    REQUIRE(s1.size() == fx.pool.size());
    std::vector<double> scores1, scores3;
    for (std::size_t i = 0; i < s1.size(); ++i) {
        CHECK(s1[i].sentence_id == fx.pool[i]->id);
        CHECK(s1[i].score == s2[i].score);
        scores1.push_back(s1[i].score);
        scores3.push_back(s3[i].score);
    }
    CHECK(scores1 != scores3);
    std::sort(scores1.begin(), scores1.end());
    for (std::size_t i = 0; i < scores1.size(); ++i)
        CHECK(scores1[i] == doctest::Approx(static_cast<double>(i + 1)));
}

TEST_CASE("uncertainty scores equal the per-sentence formulas") {
    const Fixture fx;
    const CrfModel model = train_crf(fx.examples(), fx.corpus.tagset, {});
    const auto lc = score_pool(model, fx.pool, Strategy::lc, {}, 0);
    const auto mnlp = score_pool(model, fx.pool, Strategy::mnlp, {}, 0);
    for (std::size_t i = 0; i < fx.pool.size(); ++i) {
        const double lp = model.sequence_log_prob(*fx.pool[i]);
        const int n = static_cast<int>(fx.pool[i]->size());
        CHECK(lc[i].score == doctest::Approx(lc_score(lp, n)));
        CHECK(mnlp[i].score == doctest::Approx(mnlp_score(lp, n)));
    }
}

TEST_CASE("bayesian strategies demand a stochastic model and mc config") {
    const Fixture fx;
    const CrfModel crf = train_crf(fx.examples(), fx.corpus.tagset, {});
    CHECK_THROWS_AS(
        score_pool(crf, fx.pool, Strategy::vr, {McConfig::Variant::all, 5}, 0), ConfigError);

    NeuralOptions nopt;
    nopt.hash_bits = 7;
    nopt.embedding_dim = 6;
    nopt.hidden_dim = 8;
    nopt.epochs = 2;
    const NeuralModel nn = train_neural(fx.examples(), fx.corpus.tagset, nopt, 1);
    CHECK_THROWS_AS(score_pool(nn, fx.pool, Strategy::bald, {}, 0), ConfigError);

    const auto vr = score_pool(nn, fx.pool, Strategy::vr, {McConfig::Variant::all, 4}, 7);
    const auto again = score_pool(nn, fx.pool, Strategy::vr, {McConfig::Variant::all, 4}, 7);
    REQUIRE(vr.size() == fx.pool.size());
    for (std::size_t i = 0; i < vr.size(); ++i) {
        CHECK(vr[i].score >= 0.0);
        CHECK(vr[i].score == again[i].score);
        const auto sp = nn.predict_stochastic(*fx.pool[i], {McConfig::Variant::all, 4}, 7);
        CHECK(vr[i].score == vr_score(sp));
    }
}

TEST_CASE("batch selection walks scores greedily to the token budget") {
    PoolState pool;
    std::vector<int> lengths = {5, 3, 8, 2, 6};
    pool.unlabeled_ids = {0, 1, 2, 3, 4};
    pool.sentence_tokens = &lengths;
    pool.total_token_count = 24;

    const std::vector<AcquisitionScore> scores = {
        {0, 0.9}, {1, 0.3}, {2, 0.9}, {3, 0.1}, {4, 0.5}};

    // ties by id: 0 before 2; stops once the budget is covered
    CHECK(select_batch(scores, pool, 6) == std::vector<int>{0, 2});
    CHECK(select_batch(scores, pool, 5) == std::vector<int>{0});
    CHECK(select_batch(scores, pool, 0).empty());
    CHECK(select_batch(scores, pool, -3).empty());
    // budget beyond the pool takes everything, highest first
    CHECK(select_batch(scores, pool, 1000) == std::vector<int>{0, 2, 4, 1, 3});
}

TEST_CASE("batch selection rejects inconsistent inputs") {
    PoolState pool;
    std::vector<int> lengths = {5, 3};
    pool.unlabeled_ids = {0, 1};
    pool.sentence_tokens = &lengths;

    const std::vector<AcquisitionScore> wrong_count = {{0, 0.5}};
    CHECK_THROWS_AS(select_batch(wrong_count, pool, 3), RuntimeError);

    const std::vector<AcquisitionScore> wrong_ids = {{0, 0.5}, {7, 0.1}};
    CHECK_THROWS_AS(select_batch(wrong_ids, pool, 3), RuntimeError);

    PoolState no_table;
    no_table.unlabeled_ids = {0, 1};
    const std::vector<AcquisitionScore> ok = {{0, 0.5}, {1, 0.1}};
    CHECK_THROWS_AS(select_batch(ok, no_table, 3), RuntimeError);
}

TEST_CASE("score dump carries the strategy name") {
    const std::vector<AcquisitionScore> scores = {{3, 0.25}, {1, 1.0}};
    std::ostringstream out;
    write_scores_csv(scores, Strategy::mnlp, out);
    CHECK(out.str() == "sentence_id,score,strategy\n3,0.25,mnlp\n1,1,mnlp\n");
}

TEST_CASE("strategy names round trip") {
    for (const Strategy s : {Strategy::random, Strategy::lc, Strategy::mnlp, Strategy::vr,
                             Strategy::bald})
        CHECK(strategy_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(strategy_from_string("margin"), ConfigError);
}
