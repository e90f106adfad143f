#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alseq/corpus.hpp"
#include "alseq/engine.hpp"
#include "alseq/error.hpp"
#include "alseq/report.hpp"

namespace {

using namespace alseq;

int cmd_run(const std::string& config_path, bool force, bool seed_given, std::uint64_t seed,
            const std::string& out_dir, int threads) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config " + config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + config_path + ": " + e.what());
    }
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    if (seed_given) cfg.base_seed = seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();

    const auto result = run_experiment(
        cfg, force, [](const std::string& m) { std::cout << m << '\n'; }, threads);

    const auto dir = std::filesystem::path(cfg.output_dir) / cfg.hash();
    std::cout << "experiment " << cfg.hash() << ": " << result.records.size() << " run(s), "
              << result.reused << " reused from cache\n";
    std::cout << "records: " << dir.string() << '\n';
    std::cout << "curve:   " << (dir / "curve.csv").string() << '\n';
    if (!result.curve.points.empty()) {
        const auto& p = result.curve.points.back();
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "final span F1 %.4f +/- %.4f at %.1f%% of training tokens (iteration %d)",
                      p.f1_mean, p.f1_std, 100.0 * p.labeled_token_fraction, p.iteration);
        std::cout << buf << '\n';
    }
    return 0;
}

int cmd_report(const std::string& dir, const std::string& csv_path) {
    const auto sets = load_record_sets(dir);
    std::cout << render_table(sets);
    const std::filesystem::path csv =
        csv_path.empty() ? std::filesystem::path(dir) / "report.csv"
                         : std::filesystem::path(csv_path);
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + csv.string());
    write_report_csv(sets, out);
    std::cout << "wrote " << csv.string() << '\n';
    return 0;
}

int cmd_plot(const std::string& records_dir, const std::string& csv_in,
             const std::string& out_path) {
    std::vector<CurveSeries> series;
    std::string x_label;
    if (!csv_in.empty()) {
        std::ifstream in(csv_in);
        if (!in) throw DataError("cannot open " + csv_in);
        series = series_from_report_csv(in);
        x_label = "iteration";
    } else {
        auto sets = load_record_sets(records_dir);
        series.reserve(sets.size());
        for (auto& s : sets) series.push_back({s.label, std::move(s.curve)});
        x_label = "labeled token fraction";
    }
    const std::string svg = render_svg(series, x_label);  // fails before the file is created
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + out_path);
    out << svg;
    std::cout << "wrote " << out_path << '\n';
    return 0;
}

int cmd_validate(const std::string& path, const std::string& scheme_name, const ColumnMap& cols) {
    const TagScheme scheme = tag_scheme_from_string(scheme_name);
    const Corpus corpus = parse_conll(std::filesystem::path(path), cols, scheme);

    std::map<std::string, long> per_type;
    long total_entities = 0;
    std::vector<std::string> tags;
    for (const auto& s : corpus.sentences) {
        tags.clear();
        for (const auto& t : s.tokens) tags.push_back(t.gold_tag);
        for (const auto& span : extract_spans(tags, scheme)) {
            ++per_type[span.entity_type];
            ++total_entities;
        }
    }

    std::cout << "# of tokens      " << corpus.token_count << '\n';
    std::cout << "# of sentences   " << corpus.sentences.size() << '\n';
    std::cout << "entity types:\n";
    std::vector<std::pair<std::string, long>> rows(per_type.begin(), per_type.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::size_t name_w = 0;
    for (const auto& [name, n] : rows) name_w = std::max(name_w, name.size());
    for (const auto& [name, n] : rows)
        std::cout << "  " << name << std::string(name_w + 3 - name.size(), ' ') << n << '\n';
    std::cout << "total entities:  " << total_entities << '\n';

    const auto violations = find_scheme_violations(corpus);
    if (violations.empty()) {
        std::cout << "no " << to_string(scheme) << " scheme violations\n";
    } else {
        std::cout << violations.size() << " " << to_string(scheme) << " scheme violation(s):\n";
        for (const auto& v : violations)
            std::cout << "  sentence " << v.sentence_id << " position " << v.position << ": '"
                      << v.tag << "' " << v.reason << '\n';
    }
    return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_path) {
    const Corpus corpus = synth_corpus(spec);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + out_path);
    write_conll(corpus, out);
    std::cout << "wrote " << out_path << " (" << corpus.sentences.size() << " sentences, "
              << corpus.token_count << " tokens, " << corpus.tagset.entity_types.size()
              << " entity types)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pool-based active learning emulation for sequence tagging"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
    std::string run_config, run_out;
    bool run_force = false;
    std::uint64_t run_seed = 0;
    int run_threads = -1;
    run->add_option("-c,--config", run_config, "experiment config file")->required();
    run->add_flag("--force", run_force, "recompute runs even when cached records exist");
    run->add_option("--seed", run_seed, "override base_seed");
    run->add_option("--out", run_out, "override output_dir");
    run->add_option("--threads", run_threads,
                    "worker threads for repeats (0 = auto, default: AL_SEQTAG_THREADS or 1)");

    auto* report = app.add_subcommand("report", "tabulate recorded runs");
    std::string report_dir, report_csv;
    report->add_option("dir", report_dir, "records directory (experiment dir or its parent)")
        ->required();
    report->add_option("--csv", report_csv, "where to write the row-level CSV");

    auto* plot = app.add_subcommand("plot", "render learning curves as SVG");
    std::string plot_dir, plot_csv, plot_out;
    plot->add_option("dir", plot_dir, "records directory");
    plot->add_option("--csv", plot_csv, "plot from a report CSV instead of records");
    plot->add_option("--out", plot_out, "output SVG path")->required();

    auto* validate = app.add_subcommand("validate", "check a CoNLL file and print corpus stats");
    std::string val_path, val_scheme = "iob2";
    ColumnMap val_cols;
    validate->add_option("path", val_path, "CoNLL file")->required();
    validate->add_option("--scheme", val_scheme, "iob1 or iob2 (default iob2)");
    validate->add_option("--columns", val_cols.columns, "columns per row (default 2)");
    validate->add_option("--surface-col", val_cols.surface, "surface column (default 0)");
    validate->add_option("--pos-col", val_cols.pos, "POS column, -1 for none (default -1)");
    validate->add_option("--tag-col", val_cols.tag, "tag column (default 1)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic NER-style corpus");
    SynthSpec synth_spec;
    std::string synth_out;
    synth->add_option("--types", synth_spec.entity_types, "entity types (default 5)");
    synth->add_option("--vocab", synth_spec.vocabulary, "distinct surface forms (default 600)");
    synth->add_option("--min-len", synth_spec.min_sentence_len, "min sentence length (default 4)");
    synth->add_option("--max-len", synth_spec.max_sentence_len,
                      "max sentence length (default 12)");
    synth->add_option("--sentences", synth_spec.sentences, "sentence count (default 2000)");
    synth->add_option("--seed", synth_spec.seed, "generator seed (default 0)");
    synth->add_option("--out", synth_out, "output CoNLL path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run)
            return cmd_run(run_config, run_force, run->count("--seed") > 0, run_seed, run_out,
                           run_threads);
        if (*report) return cmd_report(report_dir, report_csv);
        if (*plot) {
            if (plot_dir.empty() && plot_csv.empty())
                throw ConfigError("plot needs a records directory or --csv");
            return cmd_plot(plot_dir, plot_csv, plot_out);
        }
        if (*validate) return cmd_validate(val_path, val_scheme, val_cols);
        if (*synth) return cmd_synth(synth_spec, synth_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::runtime);
    }
    return 0;
}
