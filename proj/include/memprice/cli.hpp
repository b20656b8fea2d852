#pragma once

#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace memprice::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kUsage = 2 };

// Every flag of the command line, resolved. Defaults mirror the library's.
struct RunConfig {
  std::string input;
  std::optional<std::vector<std::string>> tickers;  // absent = every ticker in the input
  double rate = 0.0;
  int grid_size = 100;
  std::string mode = "unbounded";  // unbounded | bounded | both (price only)
  double bound = 100.0;
  int bidask_days = 21;
  double capital = 1e5;
  double gamma = 1e3;
  int window_months = 60;
  int step_months = 12;
  std::optional<std::string> date;   // pricing epoch for `price`
  std::optional<std::string> start;  // first month considered by `backtest`
  std::string output = ".";
  std::string format = "json";
  int jobs = 1;

  nlohmann::json to_json() const;
};

int cmd_price(const RunConfig& config, std::ostream& out);
int cmd_backtest(const RunConfig& config, std::ostream& out);
int cmd_report(const std::vector<std::string>& paths, const RunConfig& config, std::ostream& out);

// Full command-line entry point: parses args (without the program name),
// applies a --config file underneath explicit flags and dispatches. Returns
// the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memprice::cli
