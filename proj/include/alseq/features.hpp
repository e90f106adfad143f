#pragma once

#include <string>
#include <vector>

#include "alseq/corpus.hpp"

namespace alseq {

/// ASCII-only helpers shared by the feature extractors.
std::string lowercased(const std::string& s);
/// "none" | "allcaps" | "lower" | "initcap" | "mixed"
const char* capitalization_class(const std::string& s);
bool all_digits(const std::string& s);

/// Observation features for one token position, key=value encoded:
/// identity/suffixes/shape of the current token, shape+identity of the
/// neighbors with boundary markers, BOS/EOS flags, POS and generalized POS
/// when the corpus carries a POS column.
std::vector<std::string> extract_features(const Sentence& sentence, int position);

std::vector<std::vector<std::string>> extract_sentence_features(const Sentence& sentence);

}  // namespace alseq
