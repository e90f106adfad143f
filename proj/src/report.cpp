#include "alseq/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "alseq/error.hpp"

namespace alseq {

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// codepoints, not bytes; cell text carries the multibyte plus-minus sign
std::size_t display_width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++w;
    return w;
}

std::string pad_left(const std::string& s, std::size_t width) {
    const std::size_t w = display_width(s);
    return (w >= width ? std::string() : std::string(width - w, ' ')) + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
    const std::size_t w = display_width(s);
    return s + (w >= width ? std::string() : std::string(width - w, ' '));
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

bool numeric_stem(const std::string& stem) {
    if (stem.empty()) return false;
    for (char c : stem)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

RunRecord load_record(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse " + path.string() + ": " + e.what());
    }
    return RunRecord::from_json(j);
}

std::vector<std::filesystem::path> record_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto& p = entry.path();
        if (p.extension() == ".json" && numeric_stem(p.stem().string())) files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::string strategy_label(const nlohmann::json& config) {
    if (!config.is_object()) return "?";
    auto type_of = [&](const char* key) -> std::string {
        if (!config.contains(key) || !config.at(key).is_object()) return "?";
        return config.at(key).value("type", "?");
    };
    std::string label = type_of("acquisition");
    if (config.contains("successor") && config.contains("acquisition") &&
        config.at("successor") != config.at("acquisition"))
        label += ">" + type_of("successor");
    label += "+" + config.value("strategy", "?");
    if (config.contains("mc") && config.at("mc").is_object()) {
        const auto& mc = config.at("mc");
        const std::string variant = mc.value("variant", "none");
        if (variant != "none")
            label += "[" + variant + ",M=" + std::to_string(mc.value("passes", 0)) + "]";
    }
    return label;
}

std::vector<RecordSet> load_record_sets(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw DataError("not a directory: " + dir.string());

    // accept either an experiment dir itself or a parent holding several
    std::vector<std::filesystem::path> groups;
    if (!record_files(dir).empty()) {
        groups.push_back(dir);
    } else {
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.is_directory()) groups.push_back(entry.path());
        std::sort(groups.begin(), groups.end());
    }

    std::vector<RecordSet> sets;
    for (const auto& g : groups) {
        const auto files = record_files(g);
        if (files.empty()) continue;
        RecordSet set;
        for (const auto& f : files) {
            RunRecord rec = load_record(f);
            if (set.records.empty()) {
                set.hash = rec.config_hash;
                set.config = rec.config;
            } else if (rec.config_hash != set.hash) {
                throw DataError("mixed config hashes under " + g.string());
            }
            set.records.push_back(std::move(rec));
        }
        std::sort(set.records.begin(), set.records.end(),
                  [](const RunRecord& a, const RunRecord& b) { return a.run_seed < b.run_seed; });
        set.label = strategy_label(set.config);
        set.curve = aggregate_runs(set.records);
        sets.push_back(std::move(set));
    }
    if (sets.empty()) throw DataError("no run records under " + dir.string());
    std::sort(sets.begin(), sets.end(), [](const RecordSet& a, const RecordSet& b) {
        return a.label != b.label ? a.label < b.label : a.hash < b.hash;
    });
    return sets;
}

std::string render_table(const std::vector<RecordSet>& sets) {
    if (sets.empty()) throw DataError("nothing to report");
    const auto& axis = sets.front().curve.points;
    for (const auto& s : sets) {
        const auto& pts = s.curve.points;
        bool ok = pts.size() == axis.size();
        for (std::size_t k = 0; ok && k < pts.size(); ++k)
            ok = pts[k].iteration == axis[k].iteration;
        if (!ok)
            throw DataError("iteration axes differ: '" + sets.front().label + "' has " +
                            std::to_string(axis.size()) + " points but '" + s.label + "' has " +
                            std::to_string(pts.size()));
    }

    std::vector<std::size_t> cols;  // skip the seed-model entry
    for (std::size_t k = 0; k < axis.size(); ++k)
        if (axis[k].iteration > 0) cols.push_back(k);

    auto cell = [](const CurvePoint& p) {
        return fmt("%.1f", p.f1_mean * 100.0) + "±" + fmt("%.1f", p.f1_std * 100.0);
    };
    auto time_mean = [&](const RecordSet& s, bool train) {
        double sum = 0;
        for (std::size_t k : cols) {
            const auto& p = s.curve.points[k];
            sum += train ? p.train_seconds_mean : p.query_seconds_mean;
        }
        return cols.empty() ? 0.0 : sum / static_cast<double>(cols.size());
    };

    std::size_t label_w = display_width("strategy");
    for (const auto& s : sets) label_w = std::max(label_w, display_width(s.label));
    std::vector<std::size_t> col_w(cols.size() + 2);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        col_w[c] = display_width(std::to_string(axis[cols[c]].iteration));
        for (const auto& s : sets)
            col_w[c] = std::max(col_w[c], display_width(cell(s.curve.points[cols[c]])));
    }
    col_w[cols.size()] = display_width("train(s)");
    col_w[cols.size() + 1] = display_width("query(s)");
    for (const auto& s : sets) {
        col_w[cols.size()] =
            std::max(col_w[cols.size()], display_width(fmt("%.2f", time_mean(s, true))));
        col_w[cols.size() + 1] =
            std::max(col_w[cols.size() + 1], display_width(fmt("%.2f", time_mean(s, false))));
    }

    std::ostringstream out;
    out << pad_right("strategy", label_w);
    for (std::size_t c = 0; c < cols.size(); ++c)
        out << "  " << pad_left(std::to_string(axis[cols[c]].iteration), col_w[c]);
    out << "  " << pad_left("train(s)", col_w[cols.size()]);
    out << "  " << pad_left("query(s)", col_w[cols.size() + 1]) << '\n';

    std::size_t total = label_w;
    for (std::size_t w : col_w) total += w + 2;
    out << std::string(total, '-') << '\n';

    for (const auto& s : sets) {
        out << pad_right(s.label, label_w);
        for (std::size_t c = 0; c < cols.size(); ++c)
            out << "  " << pad_left(cell(s.curve.points[cols[c]]), col_w[c]);
        out << "  " << pad_left(fmt("%.2f", time_mean(s, true)), col_w[cols.size()]);
        out << "  " << pad_left(fmt("%.2f", time_mean(s, false)), col_w[cols.size() + 1]) << '\n';
    }
    return out.str();
}

void write_report_csv(const std::vector<RecordSet>& sets, std::ostream& out) {
    out << "run_id,strategy,mc_variant,iteration,labeled_tokens,f1,precision,recall,"
           "train_seconds,query_seconds\n";
    for (const auto& set : sets) {
        const std::string strategy =
            set.config.is_object() ? set.config.value("strategy", "?") : "?";
        std::string variant = "none";
        if (set.config.is_object() && set.config.contains("mc") && set.config.at("mc").is_object())
            variant = set.config.at("mc").value("variant", "none");
        for (const auto& rec : set.records) {
            const std::string run_id = set.hash + "/" + std::to_string(rec.run_seed);
            for (const auto& e : rec.entries) {
                out << run_id << ',' << strategy << ',' << variant << ',' << e.iteration << ','
                    << e.labeled_token_count << ',' << fmt("%.10g", e.successor_f1.f1) << ','
                    << fmt("%.10g", e.successor_f1.precision) << ','
                    << fmt("%.10g", e.successor_f1.recall) << ',' << fmt("%.6f", e.train_seconds)
                    << ',' << fmt("%.6f", e.query_seconds) << '\n';
            }
        }
    }
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::string g6(double v) { return fmt("%.6g", v); }

}  // namespace

std::string render_svg(const std::vector<CurveSeries>& series, const std::string& x_label) {
    if (series.empty()) throw DataError("no curves to plot");
    for (const auto& s : series)
        if (s.curve.points.empty()) throw DataError("curve '" + s.label + "' has no points");

    const double kw = 860, kh = 520;
    const double ml = 70, mr = 210, mt = 20, mb = 55;
    const double pw = kw - ml - mr, ph = kh - mt - mb;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (const auto& p : s.curve.points) {
            xmin = std::min(xmin, p.labeled_token_fraction);
            xmax = std::max(xmax, p.labeled_token_fraction);
            ymin = std::min(ymin, p.f1_mean - p.f1_std);
            ymax = std::max(ymax, p.f1_mean + p.f1_std);
        }
    if (!(xmax > xmin)) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    ymin = std::max(0.0, ymin);
    ymax = std::min(1.0, ymax);
    long y0 = static_cast<long>(std::floor(ymin / 0.05 + 1e-9));
    long y1 = static_cast<long>(std::ceil(ymax / 0.05 - 1e-9));
    if (y1 <= y0) y1 = y0 + 1;
    ymin = 0.05 * static_cast<double>(y0);
    ymax = 0.05 * static_cast<double>(y1);

    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << g6(kw) << "\" height=\""
        << g6(kh) << "\" viewBox=\"0 0 " << g6(kw) << " " << g6(kh) << "\">\n";
    svg << "<rect width=\"" << g6(kw) << "\" height=\"" << g6(kh) << "\" fill=\"#ffffff\"/>\n";
    svg << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#222222\">\n";

    for (long k = y0; k <= y1; ++k) {
        const double t = 0.05 * static_cast<double>(k);
        const double y = sy(t);
        svg << "<line x1=\"" << g6(ml) << "\" y1=\"" << g6(y) << "\" x2=\"" << g6(ml + pw)
            << "\" y2=\"" << g6(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << g6(ml - 8) << "\" y=\"" << g6(y + 4)
            << "\" text-anchor=\"end\">" << fmt("%.2f", t) << "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        const double t = xmin + (xmax - xmin) * static_cast<double>(i) / 5.0;
        const double x = sx(t);
        svg << "<line x1=\"" << g6(x) << "\" y1=\"" << g6(mt) << "\" x2=\"" << g6(x)
            << "\" y2=\"" << g6(mt + ph) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << g6(x) << "\" y=\"" << g6(mt + ph + 18)
            << "\" text-anchor=\"middle\">" << g6(t) << "</text>\n";
    }
    svg << "<rect x=\"" << g6(ml) << "\" y=\"" << g6(mt) << "\" width=\"" << g6(pw)
        << "\" height=\"" << g6(ph) << "\" fill=\"none\" stroke=\"#444444\"/>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % kPaletteSize];
        const auto& pts = series[i].curve.points;
        svg << "<polygon points=\"";
        for (const auto& p : pts)
            svg << g6(sx(p.labeled_token_fraction)) << ","
                << g6(sy(std::min(1.0, p.f1_mean + p.f1_std))) << " ";
        for (auto it = pts.rbegin(); it != pts.rend(); ++it)
            svg << g6(sx(it->labeled_token_fraction)) << ","
                << g6(sy(std::max(0.0, it->f1_mean - it->f1_std)))
                << (std::next(it) == pts.rend() ? "" : " ");
        svg << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";

        svg << "<polyline points=\"";
        for (std::size_t k = 0; k < pts.size(); ++k)
            svg << g6(sx(pts[k].labeled_token_fraction)) << "," << g6(sy(pts[k].f1_mean))
                << (k + 1 == pts.size() ? "" : " ");
        svg << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";

        for (const auto& p : pts)
            svg << "<circle cx=\"" << g6(sx(p.labeled_token_fraction)) << "\" cy=\""
                << g6(sy(p.f1_mean)) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }

    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % kPaletteSize];
        const double ly = mt + 14 + 22.0 * static_cast<double>(i);
        svg << "<rect x=\"" << g6(kw - mr + 24) << "\" y=\"" << g6(ly - 10)
            << "\" width=\"14\" height=\"14\" fill=\"" << color << "\"/>\n";
        svg << "<text x=\"" << g6(kw - mr + 44) << "\" y=\"" << g6(ly + 2) << "\">"
            << xml_escape(series[i].label) << "</text>\n";
    }

    svg << "<text x=\"" << g6(ml + pw / 2) << "\" y=\"" << g6(kh - 12)
        << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
    svg << "<text transform=\"rotate(-90 18 " << g6(mt + ph / 2) << ")\" x=\"18\" y=\""
        << g6(mt + ph / 2) << "\" text-anchor=\"middle\">span F1</text>\n";
    svg << "</g>\n</svg>\n";
    return svg.str();
}

std::vector<CurveSeries> series_from_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty report CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string expect =
        "run_id,strategy,mc_variant,iteration,labeled_tokens,f1,precision,recall,"
        "train_seconds,query_seconds";
    if (line != expect) throw DataError("unexpected report CSV header: " + line);

    struct Group {
        std::string strategy, variant;
        std::map<int, std::vector<double>> f1;  // iteration -> one value per row
    };
    std::map<std::string, Group> groups;  // keyed by config hash, insertion-independent
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i)
            if (i == line.size() || line[i] == ',') {
                f.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        if (f.size() != 10)
            throw DataError("report CSV line " + std::to_string(line_no) + ": expected 10 fields");
        const std::size_t slash = f[0].find('/');
        const std::string hash = f[0].substr(0, slash);
        try {
            const int iter = std::stoi(f[3]);
            const double f1 = std::stod(f[5]);
            auto& g = groups[hash];
            g.strategy = f[1];
            g.variant = f[2];
            g.f1[iter].push_back(f1);
        } catch (const std::exception&) {
            throw DataError("report CSV line " + std::to_string(line_no) + ": bad number");
        }
    }
    if (groups.empty()) throw DataError("report CSV has no data rows");

    std::map<std::string, int> label_uses;
    for (const auto& [hash, g] : groups) {
        std::string base = g.strategy;
        if (g.variant != "none") base += "[" + g.variant + "]";
        ++label_uses[base];
    }
    std::vector<CurveSeries> series;
    for (const auto& [hash, g] : groups) {
        std::string label = g.strategy;
        if (g.variant != "none") label += "[" + g.variant + "]";
        if (label_uses[label] > 1) label += "@" + hash.substr(0, 8);
        CurveSeries s;
        s.label = label;
        for (const auto& [iter, values] : g.f1) {
            CurvePoint p;
            p.iteration = iter;
            p.labeled_token_fraction = static_cast<double>(iter);  // iteration axis
            double sum = 0;
            for (double v : values) sum += v;
            p.f1_mean = sum / static_cast<double>(values.size());
            if (values.size() > 1) {
                double sq = 0;
                for (double v : values) {
                    const double d = v - p.f1_mean;
                    sq += d * d;
                }
                p.f1_std = std::sqrt(sq / (static_cast<double>(values.size()) - 1.0));
            }
            s.curve.repeats =
                std::max(s.curve.repeats, static_cast<int>(values.size()));
            s.curve.points.push_back(p);
        }
        series.push_back(std::move(s));
    }
    std::sort(series.begin(), series.end(),
              [](const CurveSeries& a, const CurveSeries& b) { return a.label < b.label; });
    return series;
}

}  // namespace alseq
