#include "memprice/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <set>
#include <thread>

#include "memprice/error.hpp"

namespace memprice {

std::string MethodKey::objective_label() const {
  return objective == Objective::exponential_utility ? "EU" : "MV";
}

std::string MethodKey::source_label() const {
  return source == PriceSource::current ? "S(0)_current" : "S(0)_mem";
}

const std::array<MethodKey, 4>& all_methods() {
  static const std::array<MethodKey, 4> kMethods = {{
      {Objective::exponential_utility, PriceSource::current},
      {Objective::exponential_utility, PriceSource::mem},
      {Objective::mean_variance, PriceSource::current},
      {Objective::mean_variance, PriceSource::mem},
  }};
  return kMethods;
}

void WindowSpec::validate() const {
  if (length_months < 2) throw DomainError("window length must be at least 2 months");
  if (step_months < 1) throw DomainError("window step must be at least 1 month");
}

std::vector<Window> roll_windows(std::size_t total_months, const WindowSpec& spec) {
  spec.validate();
  const auto length = static_cast<std::size_t>(spec.length_months);
  const auto step = static_cast<std::size_t>(spec.step_months);
  if (total_months < length) {
    throw Error("data span of " + std::to_string(total_months) +
                " months is shorter than one window of " + std::to_string(length) +
                " months (short by " + std::to_string(length - total_months) + ")");
  }
  const std::size_t count = (total_months - length) / step + 1;
  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back({static_cast<int>(k), k * step, length});
  }
  return out;
}

MonthlyPanel build_monthly_panel(const OhlcPanel& daily, const std::vector<std::string>& tickers,
                                 std::optional<Date> until) {
  if (tickers.empty()) throw Error("no assets selected");
  std::vector<std::map<MonthIndex, PeriodicClose>> per_asset;
  for (const auto& ticker : tickers) {
    auto it = daily.find(ticker);
    if (it == daily.end()) throw Error("ticker '" + ticker + "' not found in input");
    OhlcSeries series = it->second;
    if (until) {
      std::erase_if(series.rows, [&](const OhlcRow& r) { return *until < r.date; });
    }
    if (series.rows.empty()) {
      throw Error("ticker '" + ticker + "' has no rows" + (until ? " on or before " + until->iso() : ""));
    }
    std::map<MonthIndex, PeriodicClose> months;
    for (const auto& pc : sample_periodic_closes(series, Frequency::monthly)) {
      months.emplace(month_index(pc.date), pc);
    }
    per_asset.push_back(std::move(months));
  }
  MonthlyPanel panel;
  panel.tickers = tickers;
  for (const auto& [month, close] : per_asset.front()) {
    std::vector<PeriodicClose> row;
    for (const auto& asset : per_asset) {
      auto it = asset.find(month);
      if (it == asset.end()) break;
      row.push_back(it->second);
    }
    if (row.size() == tickers.size()) {
      panel.months.push_back(month);
      panel.closes.push_back(std::move(row));
    }
  }
  return panel;
}

WindowData slice_window(const MonthlyPanel& panel, const OhlcPanel& daily, const Window& window) {
  if (window.first + window.length > panel.months.size() || window.length < 2) {
    throw DomainError("window does not fit inside the monthly panel");
  }
  const auto m = panel.tickers.size();
  WindowData data;
  const std::size_t last = window.first + window.length - 1;
  data.id = month_label(panel.months[last]);
  data.tickers = panel.tickers;
  data.closes.resize(static_cast<Eigen::Index>(window.length), static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < window.length; ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      data.closes(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          panel.closes[window.first + k][i].close;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    data.price_dates.push_back(panel.closes[last][i].date);
    data.daily.emplace_back(daily.at(panel.tickers[i]));
  }
  if (last + 1 < panel.months.size()) {
    Eigen::VectorXd next(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) next[static_cast<Eigen::Index>(i)] = panel.closes[last + 1][i].close;
    data.next_closes = std::move(next);
  }
  return data;
}

void BacktestOptions::validate() const {
  if (grid_size < 1) throw DomainError("grid size must be >= 1");
  if (!std::isfinite(rate)) throw DomainError("rate must be finite");
  if (bidask_days < 1) throw DomainError("bid-ask window must be >= 1 trading day");
  if (!(capital > 0.0) || !std::isfinite(capital)) throw DomainError("capital must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be >= 0");
  if (jobs < 0) throw DomainError("jobs must be >= 0");
  solver.validate();
}

PricingResult price_window(const WindowData& data, const BacktestOptions& opts,
                           const std::vector<SolveMode>& modes) {
  const auto m = static_cast<Eigen::Index>(data.tickers.size());
  if (m == 0) throw Error("no assets selected");
  if (data.closes.cols() != m || data.daily.size() != data.tickers.size() ||
      data.price_dates.size() != data.tickers.size()) {
    throw DimensionError("window data is inconsistent with its ticker list");
  }
  PricingResult out;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.boxes.push_back(estimate_bid_ask(data.daily[k].get(), data.price_dates[k], opts.bidask_days));
  }
  out.current = data.closes.row(data.closes.rows() - 1).transpose();

  std::vector<std::vector<double>> columns;
  for (Eigen::Index i = 0; i < m; ++i) {
    std::vector<double> prices(data.closes.col(i).data(), data.closes.col(i).data() + data.closes.rows());
    columns.push_back(gross_returns(prices));
  }
  out.returns = ReturnMatrix::from_columns(columns);
  out.scenarios = scenario_prices(out.returns, out.current);
  const QuantileGrid grid = empirical_quantile_grid(out.scenarios, opts.grid_size);
  out.problem.emplace(build_discretization(grid, out.boxes, opts.rate));

  for (const SolveMode& mode : modes) {
    MemOutcome outcome;
    outcome.mode = mode;
    try {
      outcome.solution = solve_mem(*out.problem, opts.solver, mode);
      outcome.solution.prices = conservative_prices(*out.problem, outcome.solution);
      outcome.curve = reconstruct_distortion(outcome.solution, *out.problem);
      outcome.converged = true;
    } catch (const MemNonConvergence& e) {
      outcome.solution = e.best();
      outcome.message = e.what();
    } catch (const Error& e) {
      outcome.message = e.what();
    }
    out.outcomes.push_back(std::move(outcome));
  }
  return out;
}

FiveNumber five_number_summary(std::vector<double> values) {
  if (values.empty()) throw DomainError("five-number summary of an empty sample");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double p) {
    const double h = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75), values.back()};
}

WindowResult run_window(const WindowData& data, const BacktestOptions& opts, int index) {
  opts.validate();
  WindowResult result;
  result.index = index;
  result.id = data.id;

  const PricingResult pricing = price_window(data, opts, {opts.mode});
  result.mem = pricing.outcomes.front();
  for (std::size_t i = 0; i < data.tickers.size(); ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    AssetDiagnostics diag{data.tickers[i], data.price_dates[i], pricing.boxes[i].bid(),
                          pricing.boxes[i].ask(), pricing.current[ei], std::nullopt};
    if (result.mem.converged) diag.mem = result.mem.solution.prices[ei];
    result.assets.push_back(std::move(diag));
  }

  const Eigen::MatrixXd& s1 = pricing.scenarios.values();
  for (const MethodKey& key : opts.methods) {
    MethodCell cell;
    cell.key = key;
    try {
      if (key.source == PriceSource::mem && !result.mem.converged) {
        throw Error("MEM prices unavailable: " + result.mem.message);
      }
      const Eigen::VectorXd& prices =
          key.source == PriceSource::current ? pricing.current : result.mem.solution.prices;
      Holdings h;
      if (key.objective == Objective::exponential_utility) {
        h = optimize_exponential_utility(pricing.scenarios, prices, opts.capital, opts.portfolio);
      } else {
        const Eigen::MatrixXd x = s1 * prices.cwiseInverse().asDiagonal();
        const Weights w =
            optimize_mean_variance(MomentEstimates::from_returns(x), opts.gamma, opts.portfolio);
        h = holdings_from_weights(w, prices, opts.capital);
      }
      cell.shares = h.shares;
      cell.weights = h.shares.cwiseProduct(prices) / opts.capital;
      cell.distribution.reserve(static_cast<std::size_t>(s1.rows()));
      for (Eigen::Index r = 0; r < s1.rows(); ++r) {
        cell.distribution.push_back(portfolio_gross_return(h, s1.row(r).transpose()));
      }
      if (data.next_closes) cell.realized = portfolio_gross_return(h, *data.next_closes);
      cell.summary = five_number_summary(cell.distribution);
      cell.ok = true;
    } catch (const PortfolioNonConvergence& e) {
      cell.error = e.what();
      cell.weights = e.best_weights();
    } catch (const Error& e) {
      cell.error = e.what();
    }
    result.cells.push_back(std::move(cell));
  }
  return result;
}

WindowSummary summarize(const WindowResult& result) {
  WindowSummary s;
  s.id = result.id;
  for (const auto& cell : result.cells) {
    s.cells.emplace_back(cell.key, cell.ok ? cell.summary : std::nullopt);
  }
  return s;
}

QuartileTable quartile_report(const std::vector<WindowSummary>& summaries) {
  if (summaries.empty()) throw DomainError("quartile report needs at least one window");
  std::vector<MethodKey> keys;
  for (const auto& s : summaries) {
    for (const auto& [key, summary] : s.cells) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
  }
  std::sort(keys.begin(), keys.end());
  QuartileTable table;
  for (const MethodKey& key : keys) {
    QuartileRow row;
    row.key = key;
    FiveNumber sum{};
    for (const auto& s : summaries) {
      for (const auto& [k, summary] : s.cells) {
        if (k == key && summary) {
          for (std::size_t q = 0; q < 5; ++q) sum[q] += (*summary)[q];
          ++row.support;
        }
      }
    }
    if (row.support > 0) {
      for (double& v : sum) v /= row.support;
      row.quartiles = sum;
    }
    table.rows.push_back(row);
  }
  return table;
}

QuartileTable quartile_report(const std::vector<WindowResult>& results) {
  std::vector<WindowSummary> summaries;
  summaries.reserve(results.size());
  for (const auto& r : results) summaries.push_back(summarize(r));
  return quartile_report(summaries);
}

BacktestReport run_backtest(const OhlcPanel& daily, const std::vector<std::string>& tickers,
                            const WindowSpec& spec, const BacktestOptions& opts) {
  opts.validate();
  spec.validate();
  MonthlyPanel panel = build_monthly_panel(daily, tickers);
  if (spec.start) {
    const MonthIndex first = month_index(*spec.start);
    std::size_t skip = 0;
    while (skip < panel.months.size() && panel.months[skip] < first) ++skip;
    panel.months.erase(panel.months.begin(), panel.months.begin() + static_cast<std::ptrdiff_t>(skip));
    panel.closes.erase(panel.closes.begin(), panel.closes.begin() + static_cast<std::ptrdiff_t>(skip));
  }
  const std::vector<Window> windows = roll_windows(panel.months.size(), spec);

  BacktestReport report;
  report.windows.resize(windows.size());
  std::vector<std::exception_ptr> errors(windows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < windows.size(); k = next++) {
      try {
        report.windows[k] = run_window(slice_window(panel, daily, windows[k]), opts, windows[k].index);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  unsigned jobs = opts.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                 : static_cast<unsigned>(opts.jobs);
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(windows.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  report.quartiles = quartile_report(report.windows);
  return report;
}

}  // namespace memprice
