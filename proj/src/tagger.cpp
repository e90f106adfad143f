#include "alseq/tagger.hpp"

#include "alseq/error.hpp"

namespace alseq {

const char* to_string(McConfig::Variant v) {
    switch (v) {
        case McConfig::Variant::none: return "none";
        case McConfig::Variant::word: return "word";
        case McConfig::Variant::locked: return "locked";
        case McConfig::Variant::last: return "last";
        case McConfig::Variant::all: return "all";
    }
    return "none";
}

McConfig::Variant mc_variant_from_string(const std::string& s) {
    if (s == "none") return McConfig::Variant::none;
    if (s == "word") return McConfig::Variant::word;
    if (s == "locked") return McConfig::Variant::locked;
    if (s == "last") return McConfig::Variant::last;
    if (s == "all") return McConfig::Variant::all;
    throw ConfigError("unknown mc variant '" + s + "'");
}

StochasticPredictions SequenceTagger::predict_stochastic(const Sentence&, const McConfig&,
                                                         std::uint64_t) const {
    throw ConfigError("model does not support stochastic prediction");
}

}  // namespace alseq
