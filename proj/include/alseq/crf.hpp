#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "alseq/tagger.hpp"

namespace alseq {

struct CrfOptions {
    double l1 = 0.1;
    double l2 = 0.1;
    int max_iterations = 100;

    bool operator==(const CrfOptions&) const = default;
};

/// Per-sentence log-score lattice. The inference core below operates on this
/// directly so it can be exercised against brute-force path enumeration.
struct TagLattice {
    int length = 0;
    int num_tags = 0;
    std::vector<double> emit;   // length * num_tags
    std::vector<double> trans;  // num_tags * num_tags, previous-tag major
    std::vector<double> begin;  // num_tags
    std::vector<double> end;    // num_tags

    double emit_at(int i, int c) const {
        return emit[static_cast<std::size_t>(i) * static_cast<std::size_t>(num_tags) +
                    static_cast<std::size_t>(c)];
    }
};

struct ViterbiPath {
    std::vector<int> tags;
    double score = 0.0;  // unnormalized
};

/// Max-score path; ties broken toward the lower tag index at every
/// comparison, which selects the lexicographically minimal path scanning
/// right-to-left among optima.
ViterbiPath viterbi_decode(const TagLattice& lat);

/// log sum over all paths of exp(path score).
double log_partition(const TagLattice& lat);

/// Posterior P(y_i = c), row-major length x num_tags; rows sum to 1.
std::vector<double> token_marginals(const TagLattice& lat);

/// Indexed training problem: per-position feature-id lists plus gold tag ids.
/// Public so the analytic log-likelihood gradient can be verified directly.
struct CrfProblem {
    struct Item {
        std::vector<std::vector<int>> features;
        std::vector<int> tags;
    };

    int num_features = 0;
    int num_tags = 0;
    std::vector<Item> items;

    /// Weight layout: [emission F*C | transition C*C | begin C | end C].
    std::size_t dim() const {
        const std::size_t F = static_cast<std::size_t>(num_features);
        const std::size_t C = static_cast<std::size_t>(num_tags);
        return F * C + C * C + 2 * C;
    }

    TagLattice lattice(const Item& item, std::span<const double> w) const;

    /// Sum over items of log P(tags | x). When grad is non-empty (size ==
    /// dim()) it is overwritten with d loglik / d w.
    double loglik(std::span<const double> w, std::span<double> grad) const;
};

class CrfModel final : public SequenceTagger {
public:
    CrfModel(TagSet tagset, std::vector<std::string> feature_names,
             std::vector<double> weights, CrfOptions options);

    const TagSet& tagset() const override { return tagset_; }
    std::vector<int> predict(const Sentence& sentence) const override;
    double sequence_log_prob(const Sentence& sentence) const override;

    ViterbiPath viterbi(const Sentence& sentence) const;
    double log_partition(const Sentence& sentence) const;
    std::vector<double> token_marginals(const Sentence& sentence) const;

    /// Features unseen in training are dropped.
    TagLattice lattice(const Sentence& sentence) const;

    const std::vector<double>& weights() const { return w_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    const CrfOptions& options() const { return opts_; }

    nlohmann::json to_json() const;
    static CrfModel from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static CrfModel load(const std::filesystem::path& path);

private:
    TagSet tagset_;
    std::vector<std::string> feature_names_;
    std::unordered_map<std::string, int> feature_ids_;
    std::vector<double> w_;
    CrfOptions opts_;
};

/// Builds the feature dictionary in first-encounter order over the training
/// set, then maximizes the elastic-net-penalized conditional log-likelihood
/// from w = 0. Deterministic; `seed` is accepted for trainer-interface parity
/// and ignored.
CrfModel train_crf(const std::vector<LabeledSentence>& examples, const TagSet& tagset,
                   const CrfOptions& options, std::uint64_t seed = 0);

}  // namespace alseq
