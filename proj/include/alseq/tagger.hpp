#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "alseq/corpus.hpp"

namespace alseq {

/// Monte-Carlo dropout configuration for query-time stochastic prediction.
struct McConfig {
    enum class Variant { none, word, locked, last, all };
    Variant variant = Variant::none;
    int passes = 0;  // M; >= 2 whenever variant != none

    bool operator==(const McConfig&) const = default;
};

const char* to_string(McConfig::Variant v);
McConfig::Variant mc_variant_from_string(const std::string& s);

/// M x n x C tensor of per-pass token posteriors, row-major.
struct StochasticPredictions {
    int passes = 0;
    int length = 0;
    int num_classes = 0;
    std::vector<double> data;

    double at(int m, int i, int c) const {
        return data[(static_cast<std::size_t>(m) * static_cast<std::size_t>(length) +
                     static_cast<std::size_t>(i)) *
                        static_cast<std::size_t>(num_classes) +
                    static_cast<std::size_t>(c)];
    }
    std::span<const double> row(int m, int i) const {
        return {data.data() + (static_cast<std::size_t>(m) * static_cast<std::size_t>(length) +
                               static_cast<std::size_t>(i)) *
                                  static_cast<std::size_t>(num_classes),
                static_cast<std::size_t>(num_classes)};
    }
};

/// A training example: sentence plus its revealed tag ids. Model code never
/// reads Token::gold_tag; labels only enter through this struct.
struct LabeledSentence {
    const Sentence* sentence = nullptr;
    std::vector<int> tags;
};

class SequenceTagger {
public:
    virtual ~SequenceTagger() = default;

    virtual const TagSet& tagset() const = 0;
    /// Best tag sequence (ids).
    virtual std::vector<int> predict(const Sentence& sentence) const = 0;
    /// log P(best path | sentence); <= 0.
    virtual double sequence_log_prob(const Sentence& sentence) const = 0;

    virtual bool stochastic_capable() const { return false; }
    virtual StochasticPredictions predict_stochastic(const Sentence&, const McConfig&,
                                                     std::uint64_t /*seed*/) const;
};

}  // namespace alseq
