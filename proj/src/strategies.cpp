#include "alseq/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ostream>

#include "alseq/error.hpp"
#include "alseq/rng.hpp"

namespace alseq {

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::random: return "random";
        case Strategy::lc: return "lc";
        case Strategy::mnlp: return "mnlp";
        case Strategy::vr: return "vr";
        case Strategy::bald: return "bald";
    }
    return "random";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "random") return Strategy::random;
    if (s == "lc") return Strategy::lc;
    if (s == "mnlp") return Strategy::mnlp;
    if (s == "vr") return Strategy::vr;
    if (s == "bald") return Strategy::bald;
    throw ConfigError("unknown strategy '" + s + "'");
}

double lc_score(double seq_log_prob, int length) {
    if (length < 1) throw RuntimeError("lc_score: empty sequence");
    return 1.0 - std::exp(std::min(seq_log_prob, 0.0));
}

double mnlp_score(double seq_log_prob, int length) {
    if (length < 1) throw RuntimeError("mnlp_score: empty sequence");
    return -std::min(seq_log_prob, 0.0) / static_cast<double>(length);
}

double vr_score(const StochasticPredictions& sp) {
    if (sp.passes < 2 || sp.length < 1 || sp.num_classes < 1)
        throw RuntimeError("vr_score: malformed prediction tensor");
    const int M = sp.passes, n = sp.length, C = sp.num_classes;
    std::vector<int> votes(static_cast<std::size_t>(C));
    double total = 0;
    for (int i = 0; i < n; ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (int m = 0; m < M; ++m) {
            const auto row = sp.row(m, i);
            int arg = 0;
            for (int c = 1; c < C; ++c)
                if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(arg)])
                    arg = c;  // strict: ties keep the lower tag id
            ++votes[static_cast<std::size_t>(arg)];
        }
        int mode_count = 0;
        for (int c = 0; c < C; ++c)
            mode_count = std::max(mode_count, votes[static_cast<std::size_t>(c)]);
        total += 1.0 - static_cast<double>(mode_count) / static_cast<double>(M);
    }
    return total / static_cast<double>(n);
}

double bald_score(const StochasticPredictions& sp) {
    if (sp.passes < 2 || sp.length < 1 || sp.num_classes < 1)
        throw RuntimeError("bald_score: malformed prediction tensor");
    const int M = sp.passes, n = sp.length, C = sp.num_classes;
    std::vector<double> mean(static_cast<std::size_t>(C));
    double total = 0;
    for (int i = 0; i < n; ++i) {
        // bitwise-identical passes are exactly zero information gain
        const auto first = sp.row(0, i);
        bool identical = true;
        for (int m = 1; m < M && identical; ++m)
            identical = std::memcmp(first.data(), sp.row(m, i).data(),
                                    static_cast<std::size_t>(C) * sizeof(double)) == 0;
        if (identical) continue;

        std::fill(mean.begin(), mean.end(), 0.0);
        double sum_plogp = 0;  // sum over m, c of p log p
        for (int m = 0; m < M; ++m) {
            const auto row = sp.row(m, i);
            for (int c = 0; c < C; ++c) {
                const double p = row[static_cast<std::size_t>(c)];
                mean[static_cast<std::size_t>(c)] += p;
                if (p > 0) sum_plogp += p * std::log(p);
            }
        }
        double h_mean = 0;
        for (int c = 0; c < C; ++c) {
            const double p = mean[static_cast<std::size_t>(c)] / static_cast<double>(M);
            if (p > 0) h_mean -= p * std::log(p);
        }
        total += std::max(0.0, h_mean + sum_plogp / static_cast<double>(M));
    }
    return total / static_cast<double>(n);
}

std::vector<AcquisitionScore> score_pool(const SequenceTagger& model,
                                         std::span<const Sentence* const> pool,
                                         Strategy strategy, const McConfig& mc,
                                         std::uint64_t seed) {
    if ((strategy == Strategy::vr || strategy == Strategy::bald)) {
        if (!model.stochastic_capable())
            throw ConfigError(std::string("strategy '") + to_string(strategy) +
                              "' requires a model with stochastic prediction");
        if (mc.variant == McConfig::Variant::none)
            throw ConfigError(std::string("strategy '") + to_string(strategy) +
                              "' requires an mc variant");
    }

    std::vector<AcquisitionScore> scores(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) scores[i].sentence_id = pool[i]->id;

    switch (strategy) {
        case Strategy::random: {
            std::vector<std::size_t> ranked(pool.size());
            for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i] = i;
            Rng rng(seed);
            rng.shuffle(ranked);
            for (std::size_t p = 0; p < ranked.size(); ++p)
                scores[ranked[p]].score = static_cast<double>(ranked.size() - p);
            break;
        }
        case Strategy::lc:
        case Strategy::mnlp:
            for (std::size_t i = 0; i < pool.size(); ++i) {
                const int n = static_cast<int>(pool[i]->tokens.size());
                const double lp = model.sequence_log_prob(*pool[i]);
                scores[i].score =
                    strategy == Strategy::lc ? lc_score(lp, n) : mnlp_score(lp, n);
            }
            break;
        case Strategy::vr:
        case Strategy::bald:
            for (std::size_t i = 0; i < pool.size(); ++i) {
                const auto sp = model.predict_stochastic(*pool[i], mc, seed);
                scores[i].score = strategy == Strategy::vr ? vr_score(sp) : bald_score(sp);
            }
            break;
    }
    return scores;
}

std::vector<int> select_batch(std::span<const AcquisitionScore> scores, const PoolState& pool,
                              long token_budget) {
    if (!pool.sentence_tokens)
        throw RuntimeError("select_batch: pool has no sentence length table");
    if (scores.size() != pool.unlabeled_ids.size())
        throw RuntimeError("select_batch: " + std::to_string(scores.size()) +
                           " scores for " + std::to_string(pool.unlabeled_ids.size()) +
                           " unlabeled sentences");
    {
        std::vector<int> ids(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) ids[i] = scores[i].sentence_id;
        std::sort(ids.begin(), ids.end());
        if (!std::equal(ids.begin(), ids.end(), pool.unlabeled_ids.begin()))
            throw RuntimeError("select_batch: scores do not cover the unlabeled set");
    }
    if (token_budget <= 0) return {};

    std::vector<AcquisitionScore> ranked(scores.begin(), scores.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.sentence_id < b.sentence_id;
    });

    std::vector<int> selected;
    long tokens = 0;
    for (const auto& s : ranked) {
        selected.push_back(s.sentence_id);
        tokens += (*pool.sentence_tokens)[static_cast<std::size_t>(s.sentence_id)];
        if (tokens >= token_budget) break;
    }
    return selected;
}

void write_scores_csv(std::span<const AcquisitionScore> scores, Strategy strategy,
                      std::ostream& out) {
    out << "sentence_id,score,strategy\n";
    const char* name = to_string(strategy);
    char buf[40];
    for (const auto& s : scores) {
        std::snprintf(buf, sizeof buf, "%.10g", s.score);
        out << s.sentence_id << ',' << buf << ',' << name << '\n';
    }
}

}  // namespace alseq
