#include "memprice/report_io.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "memprice/error.hpp"

namespace memprice {
namespace {

using nlohmann::json;

json number(double v) { return std::isfinite(v) ? json(round15(v)) : json(nullptr); }

json vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(number(v[i]));
  return arr;
}

json five_json(const std::optional<FiveNumber>& f) {
  if (!f) return nullptr;
  json arr = json::array();
  for (double v : *f) arr.push_back(number(v));
  return arr;
}

json outcome_json(const MemOutcome& o) {
  json j = solution_to_json(o.solution, o.curve ? &*o.curve : nullptr);
  j["converged"] = o.converged;
  if (!o.converged) j["error"] = o.message;
  return j;
}

MethodKey parse_key(const std::string& objective, const std::string& source) {
  MethodKey key;
  if (objective == "EU") {
    key.objective = Objective::exponential_utility;
  } else if (objective == "MV") {
    key.objective = Objective::mean_variance;
  } else {
    throw ParseError("unknown objective '" + objective + "' in report", 0);
  }
  if (source == "S(0)_current") {
    key.source = PriceSource::current;
  } else if (source == "S(0)_mem") {
    key.source = PriceSource::mem;
  } else {
    throw ParseError("unknown price source '" + source + "' in report", 0);
  }
  return key;
}

}  // namespace

double round15(double value) {
  if (!std::isfinite(value) || value == 0.0) return value;
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 15);
  double out = value;
  std::from_chars(buf, ptr, out);
  return out;
}

std::string format_number(double value) {
  if (!std::isfinite(value)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 15);
  return std::string(buf, ptr);
}

json solution_to_json(const MemSolution& s, const DistortionCurve* curve) {
  json j;
  j["mode"] = s.mode.name();
  if (s.mode.is_bounded()) j["bound"] = number(s.mode.bound());
  j["lambda"] = vector_json(s.lambda);
  j["xi"] = vector_json(s.xi);
  j["phi"] = vector_json(s.phi);
  j["prices"] = vector_json(s.prices);
  j["residual"] = number(s.residual);
  j["dual_value"] = number(s.dual_value);
  j["iterations"] = s.iterations;
  if (curve) {
    j["g"] = {{"u", vector_json(curve->u)},
              {"gprime", vector_json(curve->gprime)},
              {"v", vector_json(curve->v)},
              {"g", vector_json(curve->g)},
              {"g_at_one", number(curve->total_mass)},
              {"normalized", false}};
  } else {
    j["g"] = nullptr;
  }
  return j;
}

json window_to_json(const WindowResult& w) {
  json j;
  j["index"] = w.index;
  j["id"] = w.id;
  json assets = json::array();
  for (const auto& a : w.assets) {
    assets.push_back({{"ticker", a.ticker},
                      {"date", a.date.iso()},
                      {"bid", number(a.bid)},
                      {"ask", number(a.ask)},
                      {"current", number(a.current)},
                      {"mem", a.mem ? number(*a.mem) : json(nullptr)}});
  }
  j["assets"] = std::move(assets);
  j["mem"] = outcome_json(w.mem);
  json cells = json::array();
  for (const auto& c : w.cells) {
    json cell;
    cell["objective"] = c.key.objective_label();
    cell["price_source"] = c.key.source_label();
    cell["ok"] = c.ok;
    if (!c.ok) cell["error"] = c.error;
    cell["shares"] = c.ok ? vector_json(c.shares) : json(nullptr);
    cell["weights"] = c.weights.size() > 0 ? vector_json(c.weights) : json(nullptr);
    json dist = json::array();
    for (double r : c.distribution) dist.push_back(number(r));
    cell["distribution"] = c.ok ? dist : json(nullptr);
    cell["realized"] = c.realized ? number(*c.realized) : json(nullptr);
    cell["summary"] = five_json(c.summary);
    cells.push_back(std::move(cell));
  }
  j["methods"] = std::move(cells);
  return j;
}

json quartiles_to_json(const QuartileTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    json row = {{"objective", r.key.objective_label()},
                {"price_source", r.key.source_label()},
                {"support", r.support}};
    const std::optional<FiveNumber>& q = r.quartiles;
    const char* names[] = {"Q0", "Q1", "Median", "Q3", "Q4"};
    for (std::size_t k = 0; k < 5; ++k) row[names[k]] = q ? number((*q)[k]) : json(nullptr);
    rows.push_back(std::move(row));
  }
  return rows;
}

json report_to_json(const json& config, const BacktestReport& report) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = config;
  json windows = json::array();
  for (const auto& w : report.windows) windows.push_back(window_to_json(w));
  j["windows"] = std::move(windows);
  j["quartiles"] = quartiles_to_json(report_quartiles(j));
  return j;
}

std::vector<WindowSummary> summaries_from_report(const json& report) {
  if (!report.is_object() || !report.contains("schema_version")) {
    throw ParseError("report has no schema_version", 0);
  }
  if (report.at("schema_version") != kReportSchemaVersion) {
    throw ParseError("report schema version " + report.at("schema_version").dump() +
                         " does not match supported version " + std::to_string(kReportSchemaVersion),
                     0);
  }
  std::vector<WindowSummary> out;
  try {
    for (const auto& w : report.at("windows")) {
      WindowSummary s;
      s.id = w.at("id").get<std::string>();
      for (const auto& c : w.at("methods")) {
        const MethodKey key =
            parse_key(c.at("objective").get<std::string>(), c.at("price_source").get<std::string>());
        std::optional<FiveNumber> f;
        if (c.at("ok").get<bool>() && !c.at("summary").is_null()) {
          FiveNumber v{};
          for (std::size_t k = 0; k < 5; ++k) v[k] = c.at("summary").at(k).get<double>();
          f = v;
        }
        s.cells.emplace_back(key, f);
      }
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what(), 0);
  }
  return out;
}

QuartileTable report_quartiles(const json& report) { return quartile_report(summaries_from_report(report)); }

std::vector<WindowSummary> merge_summaries(const std::vector<std::vector<WindowSummary>>& runs) {
  std::map<std::string, WindowSummary> by_id;
  for (const auto& run : runs) {
    for (const auto& s : run) {
      auto [it, inserted] = by_id.emplace(s.id, s);
      if (!inserted) {
        const bool same = it->second.cells.size() == s.cells.size() &&
                          std::equal(s.cells.begin(), s.cells.end(), it->second.cells.begin(),
                                     [](const auto& a, const auto& b) {
                                       return a.first == b.first && a.second == b.second;
                                     });
        if (!same) throw ValidationError("window " + s.id + " appears in several reports with different results");
      }
    }
  }
  std::vector<WindowSummary> out;
  for (auto& [id, s] : by_id) out.push_back(std::move(s));
  return out;
}

std::string quartiles_csv(const QuartileTable& table) {
  std::ostringstream os;
  os << "objective,price_source,Q0,Q1,Median,Q3,Q4,support\n";
  for (const auto& r : table.rows) {
    os << r.key.objective_label() << ',' << r.key.source_label();
    for (std::size_t k = 0; k < 5; ++k) os << ',' << (r.quartiles ? format_number((*r.quartiles)[k]) : "");
    os << ',' << r.support << '\n';
  }
  return os.str();
}

std::string boxplot_csv(const WindowResult& window) {
  std::ostringstream os;
  os << "method,price_source,return\n";
  for (const auto& c : window.cells) {
    for (double r : c.distribution) {
      os << c.key.objective_label() << ',' << c.key.source_label() << ',' << format_number(r) << '\n';
    }
  }
  return os.str();
}

}  // namespace memprice
