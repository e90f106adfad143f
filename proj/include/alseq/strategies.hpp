#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "alseq/tagger.hpp"

namespace alseq {

enum class Strategy { random, lc, mnlp, vr, bald };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

/// 1 - P(best path); in [0, 1).
double lc_score(double seq_log_prob, int length);

/// -seq_log_prob / n; length-normalized, nonnegative.
double mnlp_score(double seq_log_prob, int length);

/// Mean over tokens of 1 - count(mode of per-pass argmax) / M. Argmax and
/// mode ties resolve toward the lower tag index.
double vr_score(const StochasticPredictions& sp);

/// Mean over tokens of H(mean_m p_m) - mean_m H(p_m) in nats, with
/// 0 log 0 := 0. Per token: clamped at 0; bitwise-identical passes score
/// exactly 0.
double bald_score(const StochasticPredictions& sp);

struct AcquisitionScore {
    int sentence_id = -1;
    double score = 0.0;
};

struct PoolState {
    std::vector<int> labeled_ids;    // ascending
    std::vector<int> unlabeled_ids;  // ascending
    long labeled_token_count = 0;
    long total_token_count = 0;
    const std::vector<int>* sentence_tokens = nullptr;  // id -> token count
};

/// One score per pool sentence, aligned with `pool`. RANDOM ignores the model
/// and ranks by a seeded permutation; VR/BALD need a stochastic-capable model
/// and a non-none mc variant.
std::vector<AcquisitionScore> score_pool(const SequenceTagger& model,
                                         std::span<const Sentence* const> pool,
                                         Strategy strategy, const McConfig& mc,
                                         std::uint64_t seed);

/// Greedy selection: highest score first, ties toward the lower sentence id,
/// stopping as soon as the cumulative token count reaches the budget.
/// Zero/negative budget selects nothing. Scores must cover exactly the
/// unlabeled set.
std::vector<int> select_batch(std::span<const AcquisitionScore> scores, const PoolState& pool,
                              long token_budget);

/// sentence_id,score,strategy rows in the given order.
void write_scores_csv(std::span<const AcquisitionScore> scores, Strategy strategy,
                      std::ostream& out);

}  // namespace alseq
