#include "alseq/features.hpp"

#include <cctype>

#include "alseq/error.hpp"

namespace alseq {

std::string lowercased(const std::string& s) {
    std::string out = s;
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

const char* capitalization_class(const std::string& s) {
    bool any_alpha = false, any_upper = false, any_lower = false;
    for (unsigned char c : s) {
        if (std::isalpha(c)) {
            any_alpha = true;
            if (std::isupper(c)) any_upper = true;
            if (std::islower(c)) any_lower = true;
        }
    }
    if (!any_alpha) return "none";
    if (!any_lower) return "allcaps";
    if (!any_upper) return "lower";
    if (std::isupper(static_cast<unsigned char>(s[0]))) return "initcap";
    return "mixed";
}

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    for (unsigned char c : s)
        if (!std::isdigit(c)) return false;
    return true;
}

namespace {

std::string suffix(const std::string& s, std::size_t n) {
    return s.size() <= n ? s : s.substr(s.size() - n);
}

// Shape/identity features of a neighbor, offset encoded in the key ("-1"/"+1").
// Suffixes are current-token-only.
void neighbor_features(const Token& tok, const char* off, std::vector<std::string>& out) {
    const std::string low = lowercased(tok.surface);
    out.push_back(std::string("w") + off + "=" + low);
    out.push_back(std::string("c") + off + "=" + capitalization_class(tok.surface));
    out.push_back(std::string("d") + off + "=" + (all_digits(tok.surface) ? "1" : "0"));
    if (!tok.pos.empty()) {
        out.push_back(std::string("p") + off + "=" + tok.pos);
        out.push_back(std::string("g") + off + "=" + tok.pos.substr(0, 1));
    }
}

}  // namespace

std::vector<std::string> extract_features(const Sentence& sentence, int position) {
    const int n = static_cast<int>(sentence.tokens.size());
    if (position < 0 || position >= n)
        throw RuntimeError("feature extraction position out of range");
    const Token& tok = sentence.tokens[static_cast<std::size_t>(position)];

    std::vector<std::string> out;
    out.reserve(16);
    const std::string low = lowercased(tok.surface);
    out.push_back("w0=" + low);
    out.push_back("s3=" + suffix(low, 3));
    out.push_back("s2=" + suffix(low, 2));
    out.push_back(std::string("c0=") + capitalization_class(tok.surface));
    out.push_back(std::string("d0=") + (all_digits(tok.surface) ? "1" : "0"));
    if (!tok.pos.empty()) {
        out.push_back("p0=" + tok.pos);
        out.push_back("g0=" + tok.pos.substr(0, 1));
    }

    if (position == 0) {
        out.push_back("BOS");
        out.push_back("w-1=<s>");
    } else {
        neighbor_features(sentence.tokens[static_cast<std::size_t>(position - 1)], "-1", out);
    }
    if (position == n - 1) {
        out.push_back("EOS");
        out.push_back("w+1=</s>");
    } else {
        neighbor_features(sentence.tokens[static_cast<std::size_t>(position + 1)], "+1", out);
    }
    return out;
}

std::vector<std::vector<std::string>> extract_sentence_features(const Sentence& sentence) {
    std::vector<std::vector<std::string>> out;
    out.reserve(sentence.tokens.size());
    for (int i = 0; i < static_cast<int>(sentence.tokens.size()); ++i)
        out.push_back(extract_features(sentence, i));
    return out;
}

}  // namespace alseq
