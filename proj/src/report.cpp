#include "perturbscope/pipeline.hpp"

#include "perturbscope/errors.hpp"

#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ps {

namespace {

std::string html_escape(const std::string& s) {
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

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("report: cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.ends_with(',')) cells.push_back("");
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::string csv_table(const fs::path& path, const std::string& caption) {
    const auto rows = read_csv(path);
    std::string html = "<table>\n<caption>" + html_escape(caption) + "</caption>\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        html += "<tr>";
        for (const auto& cell : rows[r])
            html += r == 0 ? "<th>" + html_escape(cell) + "</th>"
                           : "<td>" + html_escape(cell) + "</td>";
        html += "</tr>\n";
    }
    html += "</table>\n";
    return html;
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("report: cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

void cmd_report(const std::string& run_dir, const std::string& out_path) {
    const fs::path dir(run_dir);
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path))
        throw IoError("report: no manifest.json in " + run_dir);
    std::ifstream mf(manifest_path);
    const json manifest = json::parse(mf);

    // every manifest entry must still exist; a dangling entry means the run
    // directory was modified after the fact
    for (const auto& a : manifest.at("artifacts"))
        if (!fs::exists(dir / a.at("path").get<std::string>()))
            throw IoError("report: manifest names a missing artifact: " +
                          a.at("path").get<std::string>());

    std::string body;
    body +=
        "<!doctype html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        "<title>perturbation forensics report</title>\n"
        "<style>\n"
        "body { font-family: sans-serif; margin: 2em; max-width: 72em; }\n"
        "table { border-collapse: collapse; margin: 1em 0; }\n"
        "th, td { border: 1px solid #999; padding: 0.25em 0.6em; font-size: 0.85em; }\n"
        "th { background: #eee; }\n"
        "caption { font-weight: bold; text-align: left; padding: 0.4em 0; }\n"
        "pre { background: #f6f6f6; padding: 1em; overflow-x: auto; }\n"
        "img { image-rendering: pixelated; border: 1px solid #ccc; }\n"
        "</style>\n</head>\n<body>\n"
        "<h1>Perturbation forensics report</h1>\n";

    body += fmt::format("<p>Tool version {}. Run directory: <code>{}</code></p>\n",
                        html_escape(manifest.value("tool_version", std::string("?"))),
                        html_escape(run_dir));

    const bool has_detections = fs::exists(dir / "detections.csv");
    if (!has_detections) {
        body += "<p><strong>No samples were analyzed in this run.</strong></p>\n";
    } else {
        if (fs::exists(dir / "summary.csv"))
            body += csv_table(dir / "summary.csv", "Marginal detection summary");
        body += csv_table(dir / "detections.csv", "Per-sample detection results");
    }

    if (fs::exists(dir / "embedding.svg")) {
        body += "<h2>Fingerprint embedding</h2>\n";
        body += slurp(dir / "embedding.svg");
    }

    std::vector<std::string> aggregate_pngs;
    for (const auto& a : manifest.at("artifacts")) {
        const std::string p = a.at("path").get<std::string>();
        if (p.starts_with("aggregates/") && p.ends_with(".png")) aggregate_pngs.push_back(p);
    }
    if (!aggregate_pngs.empty()) {
        body += "<h2>Aggregate sensitivity maps</h2>\n";
        for (const auto& p : aggregate_pngs)
            body += fmt::format(
                "<figure style=\"display:inline-block\"><img src=\"{}\" width=\"192\">"
                "<figcaption>{}</figcaption></figure>\n",
                html_escape(p), html_escape(fs::path(p).stem().string()));
    }

    body += "<h2>Configuration</h2>\n<pre>" +
            html_escape(manifest.at("config").dump(2)) + "</pre>\n";

    body += "<h2>Artifacts</h2>\n<table>\n"
            "<tr><th>stage</th><th>inputs</th><th>path</th><th>sha256</th></tr>\n";
    for (const auto& a : manifest.at("artifacts"))
        body += fmt::format("<tr><td>{}</td><td>{}</td><td><a href=\"{}\">{}</a></td>"
                            "<td><code>{}</code></td></tr>\n",
                            html_escape(a.at("stage").get<std::string>()),
                            html_escape(a.at("inputs").get<std::string>()),
                            html_escape(a.at("path").get<std::string>()),
                            html_escape(a.at("path").get<std::string>()),
                            html_escape(a.at("sha256").get<std::string>()));
    body += "</table>\n</body>\n</html>\n";

    fs::path out(out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("report: cannot write " + out_path);
    f << body;
}

} // namespace ps
