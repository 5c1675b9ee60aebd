#pragma once

// Event-study output: one entry per event time, plus CSV/JSON encodings.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stagger/error.hpp"
#include "stagger/text.hpp"

namespace stagger {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One switcher-vs-controls 2x2 comparison.
struct CellDid {
  std::string switcher;
  int switch_period = 0;
  int event_time = 0;  // negative: placebo horizon -h
  double value = 0.0;
  std::size_t control_count = 0;
  double weight = 1.0;
};

struct SeriesEntry {
  int event_time = 0;
  bool identified = false;
  bool reference = false;  // normalised to zero by construction
  double estimate = kNaN;
  double se = kNaN;
  double ci_low = kNaN;
  double ci_high = kNaN;
  double normal_ci_low = kNaN;
  double normal_ci_high = kNaN;
  std::size_t n_switchers = 0;
  std::size_t replications_used = 0;
  std::size_t replications_excluded = 0;
};

struct EstimateSeries {
  std::string estimator;
  std::vector<SeriesEntry> entries;  // ascending event time
  std::vector<CellDid> cells;

  const SeriesEntry* find(int event_time) const {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.event_time == event_time; });
    return it == entries.end() ? nullptr : &*it;
  }
  SeriesEntry* find(int event_time) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.event_time == event_time; });
    return it == entries.end() ? nullptr : &*it;
  }
  const SeriesEntry& at(int event_time) const {
    if (const auto* e = find(event_time)) return *e;
    throw Error(ErrorCode::kInvalidArgument, "no entry at event time " + std::to_string(event_time));
  }
  double estimate_at(int event_time) const { return at(event_time).estimate; }
  void sort() {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.event_time < b.event_time; });
  }
};

inline constexpr std::string_view kSeriesColumns = "event_time,estimate,se,ci_low,ci_high,n_switchers";

/// Manifest lines are emitted as `# manifest: {...}` ahead of the header.
inline std::string write_series_csv(const EstimateSeries& series, const nlohmann::json* manifest = nullptr) {
  std::string out;
  if (manifest) out += "# manifest: " + manifest->dump() + "\n";
  if (!series.estimator.empty()) out += "# estimator: " + series.estimator + "\n";
  out += kSeriesColumns;
  out += '\n';
  for (const auto& e : series.entries) {
    out += std::to_string(e.event_time);
    for (double v : {e.estimate, e.se, e.ci_low, e.ci_high}) {
      out += ',';
      out += text::format_double(v);
    }
    out += ',';
    out += std::to_string(e.n_switchers);
    out += '\n';
  }
  return out;
}

inline nlohmann::json json_number(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

inline nlohmann::json series_to_json(const EstimateSeries& series) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : series.entries) {
    rows.push_back({{"event_time", e.event_time},
                    {"estimate", json_number(e.estimate)},
                    {"se", json_number(e.se)},
                    {"ci_low", json_number(e.ci_low)},
                    {"ci_high", json_number(e.ci_high)},
                    {"n_switchers", e.n_switchers}});
  }
  return rows;
}

inline std::string write_series_json(const EstimateSeries& series, const nlohmann::json* manifest = nullptr) {
  nlohmann::json doc;
  if (manifest) doc["manifest"] = *manifest;
  doc["estimator"] = series.estimator;
  doc["series"] = series_to_json(series);
  return doc.dump(2) + "\n";
}

inline double parse_optional_double(std::string_view s, std::string_view what) {
  s = text::trim(s);
  if (s.empty() || s == "NA" || s == "nan") return kNaN;
  return text::parse_double(s, what);
}

inline EstimateSeries read_series_csv(std::string_view content) {
  EstimateSeries series;
  // The estimator label rides in a comment line.
  constexpr std::string_view kTag = "# estimator: ";
  if (auto pos = content.find(kTag); pos != std::string_view::npos) {
    auto end = content.find('\n', pos);
    series.estimator = std::string(text::trim(content.substr(pos + kTag.size(), end - pos - kTag.size())));
  }
  const auto table = text::Table::parse(content);
  const auto c_et = table.require_column("event_time");
  const auto c_est = table.require_column("estimate");
  const auto c_se = table.require_column("se");
  const auto c_lo = table.require_column("ci_low");
  const auto c_hi = table.require_column("ci_high");
  const auto c_n = table.require_column("n_switchers");
  for (const auto& f : table.rows()) {
    SeriesEntry e;
    e.event_time = static_cast<int>(text::parse_int(f[c_et], "event_time"));
    e.estimate = parse_optional_double(f[c_est], "estimate");
    e.identified = !std::isnan(e.estimate);
    e.se = parse_optional_double(f[c_se], "se");
    e.ci_low = parse_optional_double(f[c_lo], "ci_low");
    e.ci_high = parse_optional_double(f[c_hi], "ci_high");
    e.n_switchers = static_cast<std::size_t>(text::parse_int(f[c_n], "n_switchers"));
    // The normalised period is written as an all-zero row.
    e.reference = e.event_time == -1 && e.n_switchers == 0 && e.estimate == 0.0 && e.se == 0.0;
    series.entries.push_back(e);
  }
  series.sort();
  return series;
}

inline EstimateSeries read_series_json(std::string_view content) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParse, std::string("invalid series JSON: ") + ex.what());
  }
  EstimateSeries series;
  series.estimator = doc.value("estimator", "");
  const auto value = [](const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); };
  for (const auto& row : doc.at("series")) {
    SeriesEntry e;
    e.event_time = row.at("event_time").get<int>();
    e.estimate = value(row.at("estimate"));
    e.identified = !std::isnan(e.estimate);
    e.se = value(row.at("se"));
    e.ci_low = value(row.at("ci_low"));
    e.ci_high = value(row.at("ci_high"));
    e.n_switchers = row.at("n_switchers").get<std::size_t>();
    series.entries.push_back(e);
  }
  series.sort();
  return series;
}

}  // namespace stagger
