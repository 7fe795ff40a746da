#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "guidemod/discrepancy.hpp"
#include "guidemod/eval.hpp"

namespace guidemod::report {

struct ScoreTableRow {
    std::string dataset;
    std::string model;
    int iteration = 0;
    eval::Score score;
    long tp = 0;
    std::map<std::string, long> tp_per_label;
};

/// Tab-delimited table: dataset, model, iteration, P, R, F1, TP, then one
/// label=tp column.
std::string render_score_table(const std::vector<ScoreTableRow>& rows);

/// Fixed-width gold x predicted grid with the NONE row/column and the
/// per-label true-positive sidebar.
std::string render_matrix(const discrepancy::DiscrepancyMatrix& matrix);

/// One row of a published benchmark summary (P/R/F1 rounded to two
/// decimals, TP absolute, total gold entities of the evaluation set).
struct SummaryRow {
    std::string dataset;
    std::string model;
    std::string mode;  // S, G or M
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0;
    long total_entities = 0;
};

struct SummaryCheck {
    double f1_recomputed = 0.0;
    double f1_diff = 0.0;
    double tp_expected = 0.0;  // recall * total entities
    double tp_diff = 0.0;
    bool f1_ok = false;
    bool tp_ok = false;
};

/// Internal consistency of a reported row: F1 must be reproducible from the
/// rounded P and R within f1_tol, and recall * total must land within
/// tp_tol of the reported TP.
SummaryCheck check_summary_row(const SummaryRow& row, double f1_tol = 0.01, double tp_tol = 10.0);

std::vector<SummaryRow> load_summary_rows(const std::filesystem::path& path);

struct CostRow {
    std::string dataset;
    std::string model;
    int iterations = 0;   // final iteration index i
    double c_i = 0.0;     // cost of the final iteration
    double t_i = 0.0;     // minutes of the final iteration
    double c_proc = 0.0;  // reported i * c_i
    double t_proc = 0.0;  // reported i * t_i
};

struct CostCheck {
    double c_recomputed = 0.0;
    double t_recomputed = 0.0;
    double c_diff = 0.0;
    double t_diff = 0.0;
    bool c_ok = false;
    bool t_ok = false;
};

CostCheck check_cost_row(const CostRow& row, double c_tol = 0.005, double t_tol = 0.25);

std::vector<CostRow> load_cost_rows(const std::filesystem::path& path);

}  // namespace guidemod::report
