#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "memprice/backtest.hpp"
#include "memprice/mem_core.hpp"

namespace memprice {

inline constexpr int kReportSchemaVersion = 1;

// Rounds to 15 significant digits; every float written by the tools goes
// through this.
double round15(double value);
// 15 significant digits, '.' decimal separator regardless of locale.
std::string format_number(double value);

nlohmann::json solution_to_json(const MemSolution& solution, const DistortionCurve* curve);
nlohmann::json window_to_json(const WindowResult& window);
nlohmann::json quartiles_to_json(const QuartileTable& table);
nlohmann::json report_to_json(const nlohmann::json& config, const BacktestReport& report);

// Reads back the per-window summaries of a report; throws ParseError on a
// schema version other than kReportSchemaVersion.
std::vector<WindowSummary> summaries_from_report(const nlohmann::json& report);

// Quartile table averaged from the summaries as stored, so that re-reading a
// report reproduces its table exactly.
QuartileTable report_quartiles(const nlohmann::json& report);

// Union of windows across reports. Windows with equal ids must carry equal
// summaries and are counted once.
std::vector<WindowSummary> merge_summaries(const std::vector<std::vector<WindowSummary>>& runs);

std::string quartiles_csv(const QuartileTable& table);
std::string boxplot_csv(const WindowResult& window);

}  // namespace memprice
