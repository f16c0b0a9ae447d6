#pragma once

// Report rendering: fixed-width text tables for humans and line-delimited
// JSON records for machines. Metrics that are undefined on a split (no
// qualifying image) render as a dash and serialize as null.

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbd/eval.hpp"
#include "pbd/metrics.hpp"

namespace pbd {

namespace report_detail {

inline std::string fixed(double v, int prec = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

inline std::string cell(const std::string& s, int width) {
    // the dash is multi-byte UTF-8; pad by display length
    int display = s == "—" ? 1 : (int)s.size();
    return std::string(std::max(0, width - display), ' ') + s;
}

inline void row(std::ostream& out, const std::string& name,
                const std::vector<std::string>& cells, int width) {
    out << std::left << std::setw(12) << name;
    for (const auto& c : cells) out << cell(c, width);
    out << "\n";
}

}  // namespace report_detail

inline std::string format_report(const EvalOutcome& o) {
    using report_detail::fixed;
    using report_detail::row;
    std::ostringstream out;
    out << "prompt image: " << o.prompt_id << "\n";
    out << "mode: " << to_string(o.mode) << "   images: " << o.images << "\n\n";

    const int w = 10;
    out << std::left << std::setw(12) << "split";
    for (const char* h : {"AN-MAE", "CN-MAE", "AN-ACC", "CN-ACC", "PN-ACC", "AL-MAE", "CL-MAE",
                          "OH-MAE", "N", "N_p"})
        out << report_detail::cell(h, w);
    out << "\n";
    auto endpoint_row = [&](const std::string& name, const MetricReport& r) {
        std::vector<std::string> cells{fixed(r.an_mae),          fixed(r.cn_mae),
                                       fixed(r.an_acc),          fixed(r.cn_acc),
                                       fixed(r.pn_acc),          metric_str(r.al_mae),
                                       metric_str(r.cl_mae),     metric_str(r.oh_mae),
                                       fixed(r.n, 1),            fixed(r.n_p, 1)};
        row(out, name, cells, w);
    };
    for (const char* split : {"regular", "difficult", "tough"})
        endpoint_row(split, o.splits.at(split));
    endpoint_row("average", o.overall);

    out << "\n" << std::left << std::setw(12) << "split";
    for (const char* h : {"PA", "mIoU", "mDice", "BER", "MAE"}) out << report_detail::cell(h, w);
    out << "\n";
    auto seg_row = [&](const std::string& name, const MetricReport& r) {
        std::vector<std::string> cells;
        if (r.seg)
            cells = {fixed(r.seg->pa), fixed(r.seg->miou), fixed(r.seg->mdice), fixed(r.seg->ber),
                     fixed(r.seg->mae)};
        else
            cells = {"—", "—", "—", "—", "—"};
        row(out, name, cells, w);
    };
    for (const char* split : {"regular", "difficult", "tough"})
        seg_row(split, o.splits.at(split));
    seg_row("average", o.overall);
    return out.str();
}

inline json metric_report_to_json(const MetricReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j{{"an_mae", r.an_mae},   {"cn_mae", r.cn_mae},       {"an_acc", r.an_acc},
           {"cn_acc", r.cn_acc},   {"pn_acc", r.pn_acc},       {"al_mae", opt(r.al_mae)},
           {"cl_mae", opt(r.cl_mae)}, {"oh_mae", opt(r.oh_mae)}, {"n", r.n},
           {"n_p", r.n_p},         {"oh_excluded", r.oh_excluded}};
    if (r.seg)
        j["seg"] = json{{"pa", r.seg->pa},     {"miou", r.seg->miou}, {"mdice", r.seg->mdice},
                        {"ber", r.seg->ber},   {"mae", r.seg->mae},   {"fg_empty", r.seg->fg_empty},
                        {"bg_empty", r.seg->bg_empty}};
    else
        j["seg"] = nullptr;
    return j;
}

inline MetricReport metric_report_from_json(const json& j) {
    MetricReport r;
    auto opt = [&](const char* key) -> std::optional<double> {
        return j.at(key).is_null() ? std::nullopt : std::optional<double>(j.at(key).get<double>());
    };
    r.an_mae = j.at("an_mae").get<double>();
    r.cn_mae = j.at("cn_mae").get<double>();
    r.an_acc = j.at("an_acc").get<double>();
    r.cn_acc = j.at("cn_acc").get<double>();
    r.pn_acc = j.at("pn_acc").get<double>();
    r.al_mae = opt("al_mae");
    r.cl_mae = opt("cl_mae");
    r.oh_mae = opt("oh_mae");
    r.n = j.at("n").get<double>();
    r.n_p = j.at("n_p").get<double>();
    r.oh_excluded = j.at("oh_excluded").get<int>();
    if (!j.at("seg").is_null()) {
        SegReport s;
        const json& g = j.at("seg");
        s.pa = g.at("pa").get<double>();
        s.miou = g.at("miou").get<double>();
        s.mdice = g.at("mdice").get<double>();
        s.ber = g.at("ber").get<double>();
        s.mae = g.at("mae").get<double>();
        s.fg_empty = g.at("fg_empty").get<bool>();
        s.bg_empty = g.at("bg_empty").get<bool>();
        r.seg = s;
    }
    return r;
}

// One JSON object per line: a meta record, one record per split, the average,
// then one record per image.
inline void write_report_records(const EvalOutcome& o, std::ostream& out) {
    out << json{{"record", "meta"},
                {"prompt_id", o.prompt_id},
                {"mode", to_string(o.mode)},
                {"images", o.images}}
               .dump()
        << "\n";
    for (const char* split : {"regular", "difficult", "tough"}) {
        json j = metric_report_to_json(o.splits.at(split));
        j["record"] = "split";
        j["split"] = split;
        out << j.dump() << "\n";
    }
    json avg = metric_report_to_json(o.overall);
    avg["record"] = "average";
    out << avg.dump() << "\n";
    for (const auto& r : o.rows)
        out << json{{"record", "image"},
                    {"image_id", r.image_id},
                    {"split", r.split},
                    {"n_anode_pred", r.n_anode_pred},
                    {"n_cathode_pred", r.n_cathode_pred},
                    {"n_anode_gt", r.n_anode_gt},
                    {"n_cathode_gt", r.n_cathode_gt},
                    {"head_anode", r.head_anode},
                    {"head_cathode", r.head_cathode}}
                   .dump()
            << "\n";
}

// Inverse of write_report_records; the stored average is kept as-is rather
// than recomputed, so a rendered table always matches the records.
inline EvalOutcome read_report_records(std::istream& in) {
    EvalOutcome o;
    bool meta = false, average = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        require(!j.is_discarded(),
                "report records: line " + std::to_string(lineno) + " is not valid JSON");
        std::string kind = j.at("record").get<std::string>();
        if (kind == "meta") {
            o.prompt_id = j.at("prompt_id").get<std::string>();
            o.mode = metric_mode_from_string(j.at("mode").get<std::string>());
            o.images = j.at("images").get<int>();
            meta = true;
        } else if (kind == "split") {
            o.splits[j.at("split").get<std::string>()] = metric_report_from_json(j);
        } else if (kind == "average") {
            o.overall = metric_report_from_json(j);
            average = true;
        } else if (kind == "image") {
            ImageRow r;
            r.image_id = j.at("image_id").get<std::string>();
            r.split = j.at("split").get<std::string>();
            r.n_anode_pred = j.at("n_anode_pred").get<int>();
            r.n_cathode_pred = j.at("n_cathode_pred").get<int>();
            r.n_anode_gt = j.at("n_anode_gt").get<int>();
            r.n_cathode_gt = j.at("n_cathode_gt").get<int>();
            r.head_anode = j.at("head_anode").get<double>();
            r.head_cathode = j.at("head_cathode").get<double>();
            o.rows.push_back(std::move(r));
        } else {
            throw Error("report records: unknown record kind " + kind);
        }
    }
    require(meta && average && o.splits.size() == 3,
            "report records: incomplete (need meta, three splits and the average)");
    return o;
}

}  // namespace pbd
