#include "alseq/records.hpp"

#include "alseq/error.hpp"

namespace alseq {

nlohmann::json RunRecord::deterministic_json() const {
    nlohmann::json entries_json = nlohmann::json::array();
    for (const auto& e : entries) {
        entries_json.push_back({{"iteration", e.iteration},
                                {"labeled_token_count", e.labeled_token_count},
                                {"selected_ids", e.selected_ids},
                                {"acquisition_f1", e.acquisition_f1.to_json()},
                                {"successor_f1", e.successor_f1.to_json()}});
    }
    return {{"format_version", format_version},
            {"config_hash", config_hash},
            {"config", config},
            {"run_seed", run_seed},
            {"total_train_tokens", total_train_tokens},
            {"truncated", truncated},
            {"entries", entries_json}};
}

nlohmann::json RunRecord::to_json() const {
    nlohmann::json j = deterministic_json();
    nlohmann::json timings = nlohmann::json::array();
    for (const auto& e : entries) {
        timings.push_back({{"iteration", e.iteration},
                           {"train_seconds", e.train_seconds},
                           {"query_seconds", e.query_seconds}});
    }
    j["timings"] = std::move(timings);
    return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
    try {
        RunRecord r;
        r.format_version = j.at("format_version").get<int>();
        if (r.format_version != 1)
            throw DataError("unsupported run record format_version " +
                            std::to_string(r.format_version));
        r.config_hash = j.at("config_hash").get<std::string>();
        r.config = j.at("config");
        r.run_seed = j.at("run_seed").get<std::uint64_t>();
        r.total_train_tokens = j.at("total_train_tokens").get<long>();
        r.truncated = j.at("truncated").get<bool>();
        for (const auto& e : j.at("entries")) {
            IterationEntry entry;
            entry.iteration = e.at("iteration").get<int>();
            entry.labeled_token_count = e.at("labeled_token_count").get<long>();
            entry.selected_ids = e.at("selected_ids").get<std::vector<int>>();
            entry.acquisition_f1 = F1Report::from_json(e.at("acquisition_f1"));
            entry.successor_f1 = F1Report::from_json(e.at("successor_f1"));
            r.entries.push_back(std::move(entry));
        }
        const auto& timings = j.at("timings");
        if (timings.size() != r.entries.size())
            throw DataError("run record timings/entries length mismatch");
        for (std::size_t k = 0; k < r.entries.size(); ++k) {
            const auto& t = timings[k];
            if (t.at("iteration").get<int>() != r.entries[k].iteration)
                throw DataError("run record timings iteration mismatch");
            r.entries[k].train_seconds = t.at("train_seconds").get<double>();
            r.entries[k].query_seconds = t.at("query_seconds").get<double>();
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed run record: ") + e.what());
    }
}

}  // namespace alseq
