#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "alseq/metrics.hpp"

namespace alseq {

/// One active-learning iteration of one run. Iteration 0 is the seed set and
/// has no querying phase (query_seconds stays 0).
struct IterationEntry {
    int iteration = 0;
    long labeled_token_count = 0;  // actual revealed tokens, strictly increasing
    std::vector<int> selected_ids;
    F1Report acquisition_f1;
    F1Report successor_f1;
    double train_seconds = 0.0;
    double query_seconds = 0.0;
};

/// Everything one (config, run_seed) execution produced. The JSON keeps
/// wall-clock timings in a separate section so the rest of the record can be
/// compared byte-for-byte across reruns.
struct RunRecord {
    int format_version = 1;
    std::string config_hash;
    nlohmann::json config;  // resolved, canonical
    std::uint64_t run_seed = 0;
    long total_train_tokens = 0;
    bool truncated = false;
    std::vector<IterationEntry> entries;

    nlohmann::json to_json() const;
    /// to_json minus the timings section; byte-identical across reruns.
    nlohmann::json deterministic_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

}  // namespace alseq
