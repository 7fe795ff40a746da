#include "guidemod/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "guidemod/util.hpp"

namespace guidemod::report {

namespace {

std::string fixed(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
    return buf;
}

}  // namespace

std::string render_score_table(const std::vector<ScoreTableRow>& rows) {
    std::string out = "dataset\tmodel\titeration\tprecision\trecall\tf1\ttp\ttp_per_label\n";
    for (const auto& row : rows) {
        out += row.dataset + "\t" + row.model + "\t" + std::to_string(row.iteration) + "\t" +
               fixed(row.score.precision, 4) + "\t" + fixed(row.score.recall, 4) + "\t" +
               fixed(row.score.f1, 4) + "\t" + std::to_string(row.tp) + "\t";
        bool first = true;
        for (const auto& [label, tp] : row.tp_per_label) {
            if (!first) out += ",";
            out += label + "=" + std::to_string(tp);
            first = false;
        }
        out += "\n";
    }
    return out;
}

std::string render_matrix(const discrepancy::DiscrepancyMatrix& matrix) {
    std::vector<std::string> names = matrix.labels;
    names.push_back("NONE");

    std::size_t name_width = std::string("gold \\ pred").size();
    for (const auto& n : names) name_width = std::max(name_width, n.size());

    std::vector<std::size_t> col_width(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        col_width[c] = names[c].size();
        for (const auto& row : matrix.cells) {
            col_width[c] = std::max(col_width[c], std::to_string(row[c]).size());
        }
    }

    const auto pad = [](const std::string& s, std::size_t width) {
        return s + std::string(width - s.size(), ' ');
    };

    std::string out = pad("gold \\ pred", name_width);
    for (std::size_t c = 0; c < names.size(); ++c) out += "  " + pad(names[c], col_width[c]);
    out += "  |  TP\n";
    for (std::size_t r = 0; r < names.size(); ++r) {
        out += pad(names[r], name_width);
        for (std::size_t c = 0; c < names.size(); ++c) {
            out += "  " + pad(std::to_string(matrix.cells[r][c]), col_width[c]);
        }
        if (r < matrix.labels.size()) {
            const auto it = matrix.tp_per_label.find(matrix.labels[r]);
            out += "  |  " + std::to_string(it == matrix.tp_per_label.end() ? 0 : it->second);
        } else {
            out += "  |";
        }
        out += "\n";
    }
    return out;
}

SummaryCheck check_summary_row(const SummaryRow& row, double f1_tol, double tp_tol) {
    SummaryCheck check;
    if (row.precision + row.recall > 0) {
        check.f1_recomputed = 2.0 * row.precision * row.recall / (row.precision + row.recall);
    }
    check.f1_diff = std::abs(check.f1_recomputed - row.f1);
    check.tp_expected = row.recall * static_cast<double>(row.total_entities);
    check.tp_diff = std::abs(check.tp_expected - static_cast<double>(row.tp));
    check.f1_ok = check.f1_diff <= f1_tol + 1e-12;
    check.tp_ok = check.tp_diff <= tp_tol + 1e-9;
    return check;
}

std::vector<SummaryRow> load_summary_rows(const std::filesystem::path& path) {
    const auto j = nlohmann::json::parse(util::read_file(path));
    std::vector<SummaryRow> rows;
    for (const auto& rj : j.at("rows")) {
        SummaryRow row;
        row.dataset = rj.at("dataset").get<std::string>();
        row.model = rj.at("model").get<std::string>();
        row.mode = rj.at("mode").get<std::string>();
        row.precision = rj.at("precision").get<double>();
        row.recall = rj.at("recall").get<double>();
        row.f1 = rj.at("f1").get<double>();
        row.tp = rj.at("tp").get<long>();
        row.total_entities = rj.at("total_entities").get<long>();
        rows.push_back(std::move(row));
    }
    return rows;
}

CostCheck check_cost_row(const CostRow& row, double c_tol, double t_tol) {
    CostCheck check;
    check.c_recomputed = static_cast<double>(row.iterations) * row.c_i;
    check.t_recomputed = static_cast<double>(row.iterations) * row.t_i;
    check.c_diff = std::abs(check.c_recomputed - row.c_proc);
    check.t_diff = std::abs(check.t_recomputed - row.t_proc);
    check.c_ok = check.c_diff <= c_tol + 1e-12;
    check.t_ok = check.t_diff <= t_tol + 1e-9;
    return check;
}

std::vector<CostRow> load_cost_rows(const std::filesystem::path& path) {
    const auto j = nlohmann::json::parse(util::read_file(path));
    std::vector<CostRow> rows;
    for (const auto& rj : j.at("rows")) {
        CostRow row;
        row.dataset = rj.at("dataset").get<std::string>();
        row.model = rj.at("model").get<std::string>();
        row.iterations = rj.at("iterations").get<int>();
        row.c_i = rj.at("cost_final_iteration").get<double>();
        row.t_i = rj.at("minutes_final_iteration").get<double>();
        row.c_proc = rj.at("cost_projected").get<double>();
        row.t_proc = rj.at("minutes_projected").get<double>();
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace guidemod::report
