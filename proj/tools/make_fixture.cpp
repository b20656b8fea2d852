// Writes the synthetic OHLC fixture used by the tests and the README demo:
// correlated geometric random walks on weekdays, with open/high/low derived
// from the close path. Fully determined by the seed.

#include <CLI11.hpp>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "memprice/date.hpp"

namespace {

// Portable standard normal draws: mt19937_64 is fully specified by the
// standard, the distribution classes are not.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  double uniform_open() {
    return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct AssetModel {
  const char* ticker;
  double start_price;
  double annual_drift;
  double annual_vol;
  double beta;         // loading on the common factor
  double daily_range;  // typical intraday high-low excursion (log scale)
};

constexpr std::array<AssetModel, 7> kAssets = {{
    {"SYNA", 20.0, 0.06, 0.11, 0.6, 0.048},
    {"SYNB", 13.5, 0.12, 0.16, 0.7, 0.064},
    {"SYNC", 40.0, 0.05, 0.13, 0.6, 0.052},
    {"SYND", 16.0, 0.03, 0.09, 0.8, 0.036},
    {"SYNE", 28.0, 0.04, 0.10, 0.7, 0.044},
    {"SYNF", 17.0, 0.07, 0.14, 0.6, 0.060},
    {"SYNG", 60.0, 0.09, 0.08, 0.5, 0.032},
}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic OHLC fixture", "make_fixture"};
  std::string output = "synthetic_ohlc.csv";
  std::uint64_t seed = 20000103;
  std::string first = "2000-01-03";
  std::string last = "2016-12-30";
  app.add_option("--output", output, "CSV path")->capture_default_str();
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--first", first, "first calendar day")->capture_default_str();
  app.add_option("--last", last, "last calendar day")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const memprice::Date begin = memprice::Date::parse(first);
  const memprice::Date end = memprice::Date::parse(last);
  NormalSource normal(seed);
  constexpr double dt = 1.0 / 252.0;

  std::array<double, kAssets.size()> close{};
  for (std::size_t i = 0; i < kAssets.size(); ++i) close[i] = kAssets[i].start_price;

  std::ofstream os(output);
  if (!os) {
    std::cerr << "cannot write " << output << "\n";
    return 1;
  }
  os << "date,ticker,open,high,low,close\n";
  char line[160];
  for (memprice::Date d = begin; !(end < d); d = d + 1) {
    if (d.weekday() >= 5) continue;
    const double market = normal.next();
    for (std::size_t i = 0; i < kAssets.size(); ++i) {
      const AssetModel& a = kAssets[i];
      const double shock = a.beta * market + std::sqrt(1.0 - a.beta * a.beta) * normal.next();
      const double vol = a.annual_vol * std::sqrt(dt);
      const double gap = 0.25 * vol * normal.next();
      const double open = close[i] * std::exp(gap);
      const double next_close = close[i] * std::exp((a.annual_drift - 0.5 * a.annual_vol * a.annual_vol) * dt +
                                                    vol * shock);
      const double up = a.daily_range * std::abs(normal.next());
      const double down = a.daily_range * std::abs(normal.next());
      double high = std::max(open, next_close) * std::exp(up);
      double low = std::min(open, next_close) * std::exp(-down);
      // Round first, then restore low <= open, close <= high on the rounded values.
      auto round4 = [](double v) { return std::round(v * 1e4) / 1e4; };
      const double o = round4(open);
      const double c = round4(next_close);
      high = std::max({round4(high), o, c});
      low = std::min({round4(low), o, c});
      std::snprintf(line, sizeof line, "%s,%s,%.4f,%.4f,%.4f,%.4f\n", d.iso().c_str(), a.ticker, o, high,
                    low, c);
      os << line;
      close[i] = next_close;
    }
  }
  return 0;
}
