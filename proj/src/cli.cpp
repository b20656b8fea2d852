#include "memprice/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "memprice/backtest.hpp"
#include "memprice/error.hpp"
#include "memprice/report_io.hpp"

namespace memprice::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> select_tickers(const OhlcPanel& panel, const RunConfig& config) {
  std::vector<std::string> tickers;
  if (config.tickers) {
    tickers = *config.tickers;
  } else {
    for (const auto& [ticker, series] : panel) tickers.push_back(ticker);
  }
  if (tickers.empty()) throw Error("no assets selected");
  return tickers;
}

BacktestOptions options_from(const RunConfig& config, SolveMode mode) {
  BacktestOptions opts;
  opts.rate = config.rate;
  opts.grid_size = config.grid_size;
  opts.mode = mode;
  opts.bidask_days = config.bidask_days;
  opts.capital = config.capital;
  opts.gamma = config.gamma;
  opts.jobs = config.jobs;
  opts.validate();
  return opts;
}

SolveMode mode_from(const std::string& name, double bound) {
  return name == "bounded" ? SolveMode::bounded(bound) : SolveMode::unbounded();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os << content;
}

fs::path prepare_output(const RunConfig& config) {
  fs::path dir(config.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void print_quartiles(const QuartileTable& table, std::ostream& out) {
  out << quartiles_csv(table);
}

// key=value lines, '#' comments, blank lines ignored. Keys are flag names
// without the leading dashes.
std::vector<std::string> config_file_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--config", path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (key == "config") {
      throw CLI::ValidationError("--config", "config files cannot include other config files");
    }
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

}  // namespace

// Execution-only settings (jobs, output) are left out.
json RunConfig::to_json() const {
  json j;
  j["input"] = input;
  j["tickers"] = tickers ? json(*tickers) : json(nullptr);
  j["rate"] = round15(rate);
  j["grid_size"] = grid_size;
  j["mode"] = mode;
  j["bound"] = round15(bound);
  j["bidask_days"] = bidask_days;
  j["capital"] = round15(capital);
  j["gamma"] = round15(gamma);
  j["window_months"] = window_months;
  j["step_months"] = step_months;
  j["date"] = date ? json(*date) : json(nullptr);
  j["start"] = start ? json(*start) : json(nullptr);
  j["format"] = format;
  return j;
}

int cmd_price(const RunConfig& config, std::ostream& out) {
  const OhlcPanel panel = load_ohlc(config.input);
  const std::vector<std::string> tickers = select_tickers(panel, config);

  std::optional<Date> epoch;
  if (config.date) {
    epoch = Date::parse(*config.date);
  } else {
    for (const auto& t : tickers) {
      auto it = panel.find(t);
      if (it == panel.end()) throw Error("ticker '" + t + "' not found in input");
      const Date last = it->second.rows.back().date;
      if (!epoch || last < *epoch) epoch = last;
    }
  }

  const MonthlyPanel months = build_monthly_panel(panel, tickers, epoch);
  WindowSpec spec;
  spec.length_months = config.window_months;
  spec.step_months = 1;
  const auto windows = roll_windows(months.months.size(), spec);
  const WindowData data = slice_window(months, panel, windows.back());

  std::vector<SolveMode> modes;
  if (config.mode == "both") {
    modes = {SolveMode::bounded(config.bound), SolveMode::unbounded()};
  } else {
    modes = {mode_from(config.mode, config.bound)};
  }
  const BacktestOptions opts = options_from(config, modes.back());
  const PricingResult pricing = price_window(data, opts, modes);

  json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["config"] = config.to_json();
  doc["config"]["date"] = epoch->iso();
  json assets = json::array();
  for (std::size_t i = 0; i < tickers.size(); ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    json a = {{"ticker", tickers[i]},
              {"date", data.price_dates[i].iso()},
              {"current", round15(pricing.current[ei])},
              {"bid", round15(pricing.boxes[i].bid())},
              {"ask", round15(pricing.boxes[i].ask())}};
    for (const auto& o : pricing.outcomes) {
      a["mem_" + o.mode.name()] = o.converged ? json(round15(o.solution.prices[ei])) : json(nullptr);
    }
    assets.push_back(std::move(a));
  }
  doc["assets"] = std::move(assets);
  json solutions = json::object();
  bool all_converged = true;
  for (const auto& o : pricing.outcomes) {
    json s = solution_to_json(o.solution, o.curve ? &*o.curve : nullptr);
    s["converged"] = o.converged;
    if (!o.converged) s["error"] = o.message;
    solutions[o.mode.name()] = std::move(s);
    all_converged = all_converged && o.converged;
  }
  doc["solutions"] = std::move(solutions);

  std::ostringstream table;
  table << "ticker,date,current";
  for (const auto& o : pricing.outcomes) table << ",mem_" << o.mode.name();
  table << ",bid,ask";
  for (const auto& o : pricing.outcomes) table << ",residual_" << o.mode.name();
  table << '\n';
  for (std::size_t i = 0; i < tickers.size(); ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    table << tickers[i] << ',' << data.price_dates[i].iso() << ',' << format_number(pricing.current[ei]);
    for (const auto& o : pricing.outcomes) {
      table << ',' << (o.converged ? format_number(o.solution.prices[ei]) : "");
    }
    table << ',' << format_number(pricing.boxes[i].bid()) << ',' << format_number(pricing.boxes[i].ask());
    for (const auto& o : pricing.outcomes) table << ',' << format_number(o.solution.residual);
    table << '\n';
  }

  const fs::path dir = prepare_output(config);
  if (config.format == "csv") {
    write_file(dir / "price.csv", table.str());
  } else {
    write_file(dir / "price.json", doc.dump(2) + "\n");
  }
  out << table.str();
  if (!all_converged) {
    for (const auto& o : pricing.outcomes) {
      if (!o.converged) throw Error(o.mode.name() + " MEM solve failed: " + o.message);
    }
  }
  return kSuccess;
}

int cmd_backtest(const RunConfig& config, std::ostream& out) {
  const OhlcPanel panel = load_ohlc(config.input);
  const std::vector<std::string> tickers = select_tickers(panel, config);
  WindowSpec spec;
  spec.length_months = config.window_months;
  spec.step_months = config.step_months;
  if (config.start) spec.start = Date::parse(*config.start);
  const BacktestOptions opts = options_from(config, mode_from(config.mode, config.bound));
  const BacktestReport report = run_backtest(panel, tickers, spec, opts);

  json cfg = config.to_json();
  cfg["tickers"] = tickers;
  const fs::path dir = prepare_output(config);
  const json doc = report_to_json(cfg, report);
  const QuartileTable table = report_quartiles(doc);
  write_file(dir / "report.json", doc.dump(2) + "\n");
  if (config.format == "csv") {
    write_file(dir / "quartiles.csv", quartiles_csv(table));
  } else {
    write_file(dir / "quartiles.json", quartiles_to_json(table).dump(2) + "\n");
  }
  for (const auto& w : report.windows) write_file(dir / ("boxplot_" + w.id + ".csv"), boxplot_csv(w));
  print_quartiles(table, out);
  return kSuccess;
}

int cmd_report(const std::vector<std::string>& paths, const RunConfig& config, std::ostream& out) {
  if (paths.empty()) throw Error("report needs at least one report file");
  std::vector<std::vector<WindowSummary>> runs;
  json sources = json::array();
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open report '" + p + "'");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError("report '" + p + "' is not valid JSON: " + e.what(), 0);
    }
    runs.push_back(summaries_from_report(doc));
    sources.push_back(p);
  }
  const std::vector<WindowSummary> merged = merge_summaries(runs);
  const QuartileTable table = quartile_report(merged);

  const fs::path dir = prepare_output(config);
  if (config.format == "csv") {
    write_file(dir / "merged_quartiles.csv", quartiles_csv(table));
  } else {
    json doc;
    doc["schema_version"] = kReportSchemaVersion;
    doc["sources"] = sources;
    json ids = json::array();
    for (const auto& s : merged) ids.push_back(s.id);
    doc["windows"] = ids;
    doc["quartiles"] = quartiles_to_json(table);
    write_file(dir / "merged_quartiles.json", doc.dump(2) + "\n");
  }
  print_quartiles(table, out);
  return kSuccess;
}

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conservative market prices by maximum entropy in the mean, and portfolio backtests",
               "memprice"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  RunConfig config;
  std::string tickers_text;
  std::string config_path;
  std::vector<std::string> report_paths;
  std::vector<CLI::Option*> ticker_opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value file; command-line flags take precedence");
    sub->add_option("--output", config.output, "output directory")->capture_default_str();
    sub->add_option("--format", config.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
  };
  auto add_model = [&](CLI::App* sub, std::vector<std::string> modes) {
    sub->add_option("--input", config.input, "OHLC CSV (date,ticker,open,high,low,close)")->required();
    ticker_opts.push_back(sub->add_option("--tickers", tickers_text, "comma-separated ticker filter"));
    sub->add_option("--rate", config.rate, "per-period continuously compounded rate")->capture_default_str();
    sub->add_option("--grid-size", config.grid_size, "quantile grid size N")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--mode", config.mode, "MEM reference measure")
        ->check(CLI::IsMember(modes))
        ->capture_default_str();
    sub->add_option("--bound", config.bound, "increment bound L for bounded mode")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--bidask-days", config.bidask_days, "trading days in the bid-ask epoch")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--capital", config.capital, "initial capital C0")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--gamma", config.gamma, "mean-variance risk aversion")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--window-months", config.window_months, "in-sample monthly observations")
        ->check(CLI::Range(2, 100000))
        ->capture_default_str();
    sub->add_option("--step-months", config.step_months, "months between windows")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--jobs", config.jobs, "parallel windows (0 = all cores)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    add_common(sub);
  };

  auto* price = app.add_subcommand("price", "conservative prices at one epoch");
  add_model(price, {"unbounded", "bounded", "both"});
  std::string date_text;
  auto* date_opt = price->add_option("--date", date_text, "pricing epoch yyyy-mm-dd (default: last common date)");

  auto* backtest = app.add_subcommand("backtest", "rolling-window portfolio experiment");
  add_model(backtest, {"unbounded", "bounded"});
  std::string start_text;
  auto* start_opt = backtest->add_option("--start", start_text, "first date considered (yyyy-mm-dd)");

  auto* report = app.add_subcommand("report", "merge quartile tables of earlier backtest reports");
  report->add_option("reports", report_paths, "report.json files")->required();
  add_common(report);

  // Splice the --config file contents in front of the explicit flags so the
  // latter win under the take-last policy.
  std::vector<std::string> args = args_in;
  try {
    for (std::size_t k = 0; k < args.size(); ++k) {
      std::string path;
      if (args[k] == "--config" && k + 1 < args.size()) {
        path = args[k + 1];
      } else if (args[k].rfind("--config=", 0) == 0) {
        path = args[k].substr(9);
      } else {
        continue;
      }
      const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) {
        return a == "price" || a == "backtest" || a == "report";
      });
      if (sub == args.end()) break;
      std::vector<std::string> extra = config_file_args(path);
      args.insert(sub + 1, extra.begin(), extra.end());
      break;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  for (const CLI::Option* opt : ticker_opts) {
    if (opt->count() > 0) config.tickers = split_list(tickers_text);
  }
  if (date_opt->count() > 0) config.date = date_text;
  if (start_opt->count() > 0) config.start = start_text;

  try {
    if (price->parsed()) return cmd_price(config, out);
    if (backtest->parsed()) return cmd_backtest(config, out);
    return cmd_report(report_paths, config, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace memprice::cli
