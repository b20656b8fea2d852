#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "memprice/date.hpp"
#include "memprice/market_data.hpp"
#include "memprice/mem_core.hpp"
#include "memprice/portfolio.hpp"

namespace memprice {

enum class Objective { exponential_utility, mean_variance };
enum class PriceSource { current, mem };

struct MethodKey {
  Objective objective = Objective::exponential_utility;
  PriceSource source = PriceSource::current;

  std::string objective_label() const;  // "EU" / "MV"
  std::string source_label() const;     // "S(0)_current" / "S(0)_mem"
  auto operator<=>(const MethodKey&) const = default;
};

// EU/current, EU/mem, MV/current, MV/mem.
const std::array<MethodKey, 4>& all_methods();

struct WindowSpec {
  std::optional<Date> start;  // first month used; defaults to the start of the data
  int length_months = 60;
  int step_months = 12;

  void validate() const;
};

// Monthly observations [first, first + length) of a MonthlyPanel.
struct Window {
  int index = 0;
  std::size_t first = 0;
  std::size_t length = 0;
};

std::vector<Window> roll_windows(std::size_t total_months, const WindowSpec& spec);

// Month-end closes of several tickers on the months where every ticker trades.
struct MonthlyPanel {
  std::vector<std::string> tickers;
  std::vector<MonthIndex> months;
  std::vector<std::vector<PeriodicClose>> closes;  // [month][asset]
};

MonthlyPanel build_monthly_panel(const OhlcPanel& daily, const std::vector<std::string>& tickers,
                                 std::optional<Date> until = std::nullopt);

// Everything one pricing/optimization epoch needs.
struct WindowData {
  std::string id;
  std::vector<std::string> tickers;
  Eigen::MatrixXd closes;           // in-sample monthly closes; last row is S^(0)
  std::vector<Date> price_dates;    // date of the last close, per asset
  std::optional<Eigen::VectorXd> next_closes;
  std::vector<std::reference_wrapper<const OhlcSeries>> daily;
};

WindowData slice_window(const MonthlyPanel& panel, const OhlcPanel& daily, const Window& window);

struct BacktestOptions {
  double rate = 0.0;
  int grid_size = 100;
  SolveMode mode = SolveMode::unbounded();
  SolverOptions solver;
  PortfolioOptions portfolio;
  int bidask_days = 21;
  double capital = 1e5;
  double gamma = 1e3;
  std::vector<MethodKey> methods{all_methods().begin(), all_methods().end()};
  int jobs = 1;  // 0 = hardware concurrency

  void validate() const;
};

// Outcome of one MEM solve inside a pricing run.
struct MemOutcome {
  SolveMode mode = SolveMode::unbounded();
  bool converged = false;
  std::string message;
  MemSolution solution;  // best iterate when not converged
  std::optional<DistortionCurve> curve;
};

struct PricingResult {
  std::vector<BidAskRange> boxes;
  Eigen::VectorXd current;  // S^(0)
  ReturnMatrix returns{Eigen::MatrixXd(0, 0)};
  ScenarioMatrix scenarios{Eigen::MatrixXd(0, 0)};
  std::optional<MemProblem> problem;
  std::vector<MemOutcome> outcomes;  // one per requested mode
};

// Bid-ask estimation, returns, scenarios, quantile grid and MEM solves.
PricingResult price_window(const WindowData& data, const BacktestOptions& opts,
                           const std::vector<SolveMode>& modes);

using FiveNumber = std::array<double, 5>;  // Q0, Q1, median, Q3, Q4

// Linear interpolation between order statistics. Throws on empty input.
FiveNumber five_number_summary(std::vector<double> values);

struct MethodCell {
  MethodKey key;
  bool ok = false;
  std::string error;
  Eigen::VectorXd shares;
  Eigen::VectorXd weights;
  std::vector<double> distribution;  // portfolio gross return on each scenario row
  std::optional<double> realized;    // next-month gross return, when that month exists
  std::optional<FiveNumber> summary;
};

struct AssetDiagnostics {
  std::string ticker;
  Date date;
  double bid = 0.0;
  double ask = 0.0;
  double current = 0.0;
  std::optional<double> mem;
};

struct WindowResult {
  int index = 0;
  std::string id;
  std::vector<AssetDiagnostics> assets;
  MemOutcome mem;
  std::vector<MethodCell> cells;
};

WindowResult run_window(const WindowData& data, const BacktestOptions& opts, int index = 0);

// Per-window summaries only; enough to rebuild and merge quartile tables.
struct WindowSummary {
  std::string id;
  std::vector<std::pair<MethodKey, std::optional<FiveNumber>>> cells;
};

WindowSummary summarize(const WindowResult& result);

struct QuartileRow {
  MethodKey key;
  std::optional<FiveNumber> quartiles;  // absent when no window supports the row
  int support = 0;
};

struct QuartileTable {
  std::vector<QuartileRow> rows;
};

// Averages each five-number statistic across the windows where the method
// succeeded.
QuartileTable quartile_report(const std::vector<WindowResult>& results);
QuartileTable quartile_report(const std::vector<WindowSummary>& summaries);

struct BacktestReport {
  std::vector<WindowResult> windows;
  QuartileTable quartiles;
};

BacktestReport run_backtest(const OhlcPanel& daily, const std::vector<std::string>& tickers,
                            const WindowSpec& spec, const BacktestOptions& opts);

}  // namespace memprice
