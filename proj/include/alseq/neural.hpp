#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "alseq/rng.hpp"
#include "alseq/tagger.hpp"

namespace alseq {

struct NeuralOptions {
    int hash_bits = 15;      // feature buckets = 2^hash_bits
    int embedding_dim = 32;  // d
    int hidden_dim = 64;     // h
    int window = 1;          // radius w; input is (2w+1) concatenated embeddings
    double p_word = 0.05;    // word-level dropout (entire positions)
    double p_locked = 0.5;   // hidden dropout, one mask per sentence
    double p_last = 0.5;     // hidden dropout, fresh mask per token
    int epochs = 30;
    double learning_rate = 0.1;  // linearly decayed per epoch
    int base_batch = 16;
    bool use_dev = false;  // keep the best-epoch parameters by dev span F1

    bool operator==(const NeuralOptions&) const = default;
};

/// Inverted-dropout scales: 0 with probability p, else 1/(1-p); expectation 1.
void fill_dropout_scales(Rng& rng, double p, std::span<double> out);

/// Window-based per-token classifier: hashed sparse features -> mean
/// embedding per position -> concatenated window -> tanh hidden layer ->
/// softmax. Trained with SGD and three dropout sites; query-time Monte-Carlo
/// dropout re-enables one or all of them.
class NeuralModel final : public SequenceTagger {
public:
    NeuralModel(TagSet tagset, NeuralOptions options, std::uint64_t init_seed);

    const TagSet& tagset() const override { return tagset_; }
    std::vector<int> predict(const Sentence& sentence) const override;
    /// Factorized best path: sum over tokens of log max_c p_i(c).
    double sequence_log_prob(const Sentence& sentence) const override;
    bool stochastic_capable() const override { return true; }
    StochasticPredictions predict_stochastic(const Sentence& sentence, const McConfig& mc,
                                             std::uint64_t seed) const override;

    /// Deterministic posteriors, n x C row-major.
    std::vector<double> predict_probs(const Sentence& sentence) const;

    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }

    /// Mean per-token cross-entropy of the batch with dropout disabled; grad
    /// (size params) is overwritten. Exposed for gradient verification.
    double loss_and_grad(const std::vector<LabeledSentence>& batch,
                         std::span<double> grad) const;

    /// Lower-layer (embedding + hidden) sentence evaluations since the last
    /// reset. MC_LAST adds 1 per sentence regardless of pass count.
    std::uint64_t lower_pass_count() const { return lower_passes_; }
    void reset_pass_count() const { lower_passes_ = 0; }

    const NeuralOptions& options() const { return opts_; }

    nlohmann::json to_json() const;
    static NeuralModel from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static NeuralModel load(const std::filesystem::path& path);

    /// Shrinks the batch when the corpus is small: keeps at least 50
    /// parameter updates per epoch, with a floor of 4 examples per batch.
    static int effective_batch(std::size_t examples, int base_batch);

private:
    friend NeuralModel train_neural(const std::vector<LabeledSentence>&, const TagSet&,
                                    const NeuralOptions&, std::uint64_t,
                                    const std::vector<LabeledSentence>*);

    struct Scratch;

    std::uint32_t bucket(std::string_view s) const;
    void token_buckets(const Token& tok, std::uint32_t out[4]) const;
    void compute_feats(const Sentence& sentence, Scratch& ws) const;
    void compute_emb(Scratch& ws, const double* word_scale) const;
    void hidden_at(const Scratch& ws, int i, double* hidden_out) const;
    void output_row(const double* hidden_scaled, double* probs_out) const;
    double forward_backward(const Sentence& sentence, const std::vector<int>& tags,
                            const double* word_scale, const double* lock_scale,
                            const double* last_scale, double inv_tokens,
                            std::span<double> grad, Scratch& ws) const;

    TagSet tagset_;
    NeuralOptions opts_;
    int V_ = 0, d_ = 0, in_ = 0, h_ = 0, C_ = 0;
    std::size_t off_e_ = 0, off_w1_ = 0, off_b1_ = 0, off_w2_ = 0, off_b2_ = 0;
    std::uint32_t bos_bucket_ = 0, eos_bucket_ = 0;
    std::vector<double> params_;
    mutable std::uint64_t lower_passes_ = 0;
};

/// SGD with per-epoch linear learning-rate decay and per-epoch reshuffling.
/// `dev` is only consulted when options.use_dev is set.
NeuralModel train_neural(const std::vector<LabeledSentence>& examples, const TagSet& tagset,
                         const NeuralOptions& options, std::uint64_t seed,
                         const std::vector<LabeledSentence>* dev = nullptr);

}  // namespace alseq
