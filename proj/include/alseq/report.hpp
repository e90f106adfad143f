#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "alseq/metrics.hpp"
#include "alseq/records.hpp"

namespace alseq {

// one experiment directory: every run record that shares a config hash
struct RecordSet {
    std::string hash;
    nlohmann::json config;
    std::string label;
    std::vector<RunRecord> records;  // run_seed ascending
    LearningCurve curve;
};

std::vector<RecordSet> load_record_sets(const std::filesystem::path& dir);

std::string strategy_label(const nlohmann::json& config);

std::string render_table(const std::vector<RecordSet>& sets);

void write_report_csv(const std::vector<RecordSet>& sets, std::ostream& out);

struct CurveSeries {
    std::string label;
    LearningCurve curve;
};

std::string render_svg(const std::vector<CurveSeries>& series, const std::string& x_label);

// rebuilds per-strategy mean/std curves from a flat report CSV; the x axis
// becomes the iteration index because the CSV carries no token fractions
std::vector<CurveSeries> series_from_report_csv(std::istream& in);

}  // namespace alseq
