#include "memprice/market_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "memprice/error.hpp"

namespace memprice {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_decimal(std::string_view field, const char* name, std::size_t line) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ParseError("bad " + std::string(name) + " value '" + std::string(field) + "'", line);
  }
  return value;
}

long period_key(const Date& d, Frequency f) {
  switch (f) {
    case Frequency::monthly:
      return static_cast<long>(month_index(d));
    case Frequency::quarterly:
      return static_cast<long>(d.year()) * 4 + static_cast<long>((d.month() - 1) / 3);
    case Frequency::yearly:
      return d.year();
  }
  return 0;
}

}  // namespace

void OhlcSeries::validate() const {
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const OhlcRow& r = rows[k];
    const std::string where = ticker + " on " + r.date.iso();
    if (k > 0 && !(rows[k - 1].date < r.date)) {
      throw ValidationError("dates not strictly increasing for " + where);
    }
    if (!(r.open > 0 && r.high > 0 && r.low > 0 && r.close > 0)) {
      throw ValidationError("nonpositive price for " + where);
    }
    if (!(r.low <= std::min(r.open, r.close) && std::max(r.open, r.close) <= r.high)) {
      throw ValidationError("OHLC inequality low <= open,close <= high violated for " + where);
    }
  }
}

BidAskRange::BidAskRange(double bid, double ask) : bid_(bid), ask_(ask) {
  if (!(bid > 0.0) || !(bid <= ask) || !std::isfinite(ask)) {
    throw DomainError("bid-ask range requires 0 < bid <= ask, got [" + std::to_string(bid) +
                      ", " + std::to_string(ask) + "]");
  }
}

ReturnMatrix::ReturnMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (!(values_.array() > 0.0).all() || !values_.allFinite()) {
    throw DomainError("gross returns must be positive and finite");
  }
}

ReturnMatrix ReturnMatrix::from_columns(const std::vector<std::vector<double>>& columns) {
  if (columns.empty()) return ReturnMatrix(Eigen::MatrixXd(0, 0));
  const std::size_t n = columns.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != n) throw DimensionError("return columns differ in length");
    for (std::size_t i = 0; i < n; ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columns[j][i];
    }
  }
  return ReturnMatrix(std::move(m));
}

ScenarioMatrix::ScenarioMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (!(values_.array() > 0.0).all() || !values_.allFinite()) {
    throw DomainError("scenario prices must be positive and finite");
  }
}

QuantileGrid::QuantileGrid(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (!(values_.array() > 0.0).all() || !values_.allFinite()) {
    throw DomainError("quantile values must be positive and finite");
  }
  for (Eigen::Index i = 0; i < values_.rows(); ++i) {
    for (Eigen::Index j = 1; j < values_.cols(); ++j) {
      if (values_(i, j) < values_(i, j - 1)) {
        throw DomainError("quantile grid is not nondecreasing for asset " + std::to_string(i));
      }
    }
  }
}

OhlcPanel parse_ohlc(std::istream& in) {
  static constexpr std::array<std::string_view, 6> kColumns = {"date", "ticker", "open",
                                                               "high", "low",    "close"};
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing CSV header", 1);
  ++line_no;
  const auto header = split_csv(line);
  std::array<std::size_t, 6> pos{};
  if (header.size() != kColumns.size()) {
    throw ParseError("CSV header must have exactly the columns date,ticker,open,high,low,close", 1);
  }
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end()) {
      throw ParseError("CSV header is missing column '" + std::string(kColumns[c]) + "'", 1);
    }
    pos[c] = static_cast<std::size_t>(it - header.begin());
  }

  OhlcPanel panel;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != kColumns.size()) {
      throw ParseError("expected 6 fields, got " + std::to_string(fields.size()), line_no);
    }
    OhlcRow row;
    try {
      row.date = Date::parse(fields[pos[0]]);
    } catch (const DomainError& e) {
      throw ParseError(e.what(), line_no);
    }
    const std::string ticker(fields[pos[1]]);
    if (ticker.empty()) throw ParseError("empty ticker", line_no);
    row.open = parse_decimal(fields[pos[2]], "open", line_no);
    row.high = parse_decimal(fields[pos[3]], "high", line_no);
    row.low = parse_decimal(fields[pos[4]], "low", line_no);
    row.close = parse_decimal(fields[pos[5]], "close", line_no);
    auto& series = panel[ticker];
    series.ticker = ticker;
    series.rows.push_back(row);
  }
  for (auto& [ticker, series] : panel) {
    std::stable_sort(series.rows.begin(), series.rows.end(),
                     [](const OhlcRow& a, const OhlcRow& b) { return a.date < b.date; });
    series.validate();
  }
  return panel;
}

OhlcPanel load_ohlc(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open input file '" + path.string() + "'");
  return parse_ohlc(in);
}

std::vector<PeriodicClose> sample_periodic_closes(const OhlcSeries& series, Frequency frequency) {
  if (series.rows.empty()) throw DomainError("series '" + series.ticker + "' is empty");
  std::vector<PeriodicClose> out;
  for (std::size_t k = 0; k < series.rows.size(); ++k) {
    const OhlcRow& r = series.rows[k];
    const bool last_in_period = k + 1 == series.rows.size() ||
                                period_key(series.rows[k + 1].date, frequency) !=
                                    period_key(r.date, frequency);
    if (last_in_period) out.push_back({r.date, r.close});
  }
  return out;
}

std::vector<double> gross_returns(std::span<const double> prices) {
  if (prices.size() < 2) throw DomainError("gross returns need at least two prices");
  for (double p : prices) {
    if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("gross returns need positive prices");
  }
  std::vector<double> out(prices.size() - 1);
  for (std::size_t k = 0; k + 1 < prices.size(); ++k) out[k] = prices[k + 1] / prices[k];
  return out;
}

BidAskRange estimate_bid_ask(const OhlcSeries& series, Date t, int window_days) {
  if (window_days < 1) throw DomainError("bid-ask window must be at least one trading day");
  auto end = std::lower_bound(series.rows.begin(), series.rows.end(), t,
                              [](const OhlcRow& r, const Date& d) { return r.date < d; });
  const auto available = end - series.rows.begin();
  if (available == 0) {
    throw DomainError("empty bid-ask epoch for " + series.ticker + ": no rows before " + t.iso());
  }
  auto begin = end - std::min<std::ptrdiff_t>(available, window_days);
  double lows = 0.0;
  double highs = 0.0;
  for (auto it = begin; it != end; ++it) {
    lows += it->low;
    highs += it->high;
  }
  const auto n = static_cast<double>(end - begin);
  const double bid = lows / n;
  // Rounding in the two sums can break bid <= ask when every row has low == high.
  const double ask = std::max(highs / n, bid);
  return BidAskRange(bid, ask);
}

ScenarioMatrix scenario_prices(const ReturnMatrix& returns, const Eigen::VectorXd& s0) {
  if (s0.size() != returns.assets()) {
    throw DimensionError("price vector length " + std::to_string(s0.size()) +
                         " does not match " + std::to_string(returns.assets()) + " assets");
  }
  if (!(s0.array() > 0.0).all()) throw DomainError("current prices must be positive");
  return ScenarioMatrix(returns.values() * s0.asDiagonal());
}

QuantileGrid empirical_quantile_grid(const ScenarioMatrix& scenarios, int grid_size) {
  const Eigen::Index n = scenarios.scenarios();
  if (n == 0 || scenarios.assets() == 0) throw DomainError("no scenarios to take quantiles of");
  if (grid_size < 1) throw DomainError("quantile grid size must be >= 1");
  Eigen::MatrixXd q(scenarios.assets(), grid_size);
  std::vector<double> column(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < scenarios.assets(); ++i) {
    for (Eigen::Index s = 0; s < n; ++s) column[static_cast<std::size_t>(s)] = scenarios.values()(s, i);
    std::sort(column.begin(), column.end());
    for (int j = 1; j <= grid_size; ++j) {
      const long long rank = (static_cast<long long>(j) * n + grid_size - 1) / grid_size;
      q(i, j - 1) = column[static_cast<std::size_t>(rank - 1)];
    }
  }
  return QuantileGrid(std::move(q));
}

}  // namespace memprice
