#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "memprice/date.hpp"

namespace memprice {

struct OhlcRow {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
};

// Dated daily history of one ticker. Rows are strictly increasing in date and
// satisfy 0 < low <= min(open, close) <= max(open, close) <= high.
struct OhlcSeries {
  std::string ticker;
  std::vector<OhlcRow> rows;

  // Throws ValidationError naming the ticker and offending date.
  void validate() const;
};

using OhlcPanel = std::map<std::string, OhlcSeries>;

// A bid-ask price interval with 0 < bid <= ask. bid == ask is the pointwise
// (exact price) case.
class BidAskRange {
 public:
  BidAskRange(double bid, double ask);

  double bid() const noexcept { return bid_; }
  double ask() const noexcept { return ask_; }
  double mid() const noexcept { return 0.5 * (bid_ + ask_); }
  double half_width() const noexcept { return 0.5 * (ask_ - bid_); }
  bool contains(double price, double tol = 0.0) const noexcept {
    return price >= bid_ - tol && price <= ask_ + tol;
  }

 private:
  double bid_;
  double ask_;
};

// Gross returns, one row per in-sample period and one column per asset.
class ReturnMatrix {
 public:
  explicit ReturnMatrix(Eigen::MatrixXd values);
  // Columns of equal length, one per asset.
  static ReturnMatrix from_columns(const std::vector<std::vector<double>>& columns);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::Index periods() const noexcept { return values_.rows(); }
  Eigen::Index assets() const noexcept { return values_.cols(); }

 private:
  Eigen::MatrixXd values_;
};

// Price scenarios for t = 1; row i is the i-th historical draw.
class ScenarioMatrix {
 public:
  explicit ScenarioMatrix(Eigen::MatrixXd values);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::Index scenarios() const noexcept { return values_.rows(); }
  Eigen::Index assets() const noexcept { return values_.cols(); }

 private:
  Eigen::MatrixXd values_;
};

// Discretized quantile functions: values()(i, j-1) = q_i(j/N), j = 1..N.
class QuantileGrid {
 public:
  explicit QuantileGrid(Eigen::MatrixXd values);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::Index assets() const noexcept { return values_.rows(); }
  Eigen::Index size() const noexcept { return values_.cols(); }

 private:
  Eigen::MatrixXd values_;
};

enum class Frequency { monthly, quarterly, yearly };

struct PeriodicClose {
  Date date;
  double close = 0.0;
};

// Reads the ticker-day CSV (header: date,ticker,open,high,low,close in any
// order). Rows may be unsorted; each series is returned date-sorted.
OhlcPanel load_ohlc(const std::filesystem::path& path);
OhlcPanel parse_ohlc(std::istream& in);

// Last available close of every calendar period covered by the series.
// Periods without trading days produce no entry.
std::vector<PeriodicClose> sample_periodic_closes(const OhlcSeries& series,
                                                  Frequency frequency = Frequency::monthly);

std::vector<double> gross_returns(std::span<const double> prices);

// Bid = mean of the daily lows, ask = mean of the daily highs, over the last
// `window_days` trading rows dated strictly before t.
BidAskRange estimate_bid_ask(const OhlcSeries& series, Date t, int window_days = 21);

// scenario(i, j) = R(i, j) * s0(j).
ScenarioMatrix scenario_prices(const ReturnMatrix& returns, const Eigen::VectorXd& s0);

// q_i(j/N) taken as the order statistic of rank ceil(j * n / N) of column i
// (right-continuous empirical inverse CDF).
QuantileGrid empirical_quantile_grid(const ScenarioMatrix& scenarios, int grid_size);

}  // namespace memprice
