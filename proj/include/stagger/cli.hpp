#pragma once

// Command-line front end. Every run resolves its options into a manifest
// (canonical argument list, resolved settings, input hashes) that is written
// to manifest.json and embedded in each output file; `rerun` replays it.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stagger/stagger.hpp"

namespace stagger::cli {

using nlohmann::json;

inline constexpr std::string_view kVersion = "1.0.0";

struct Io {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

struct Common {
  std::string panel;
  char delim = ',';
  int lags = 30;
  int leads = 25;
  int shift = 0;
  std::string control = "not-yet";
  std::string weighting = "equal";
  std::size_t reps = 999;
  std::optional<std::uint64_t> seed;
  double level = 0.95;
  std::string format = "csv";
  std::string out = ".";
  bool log = false;
  std::size_t threads = 0;
};

inline ControlRule control_rule(const std::string& s) {
  return s == "never" ? ControlRule::kNeverTreated : ControlRule::kNotYetTreated;
}

inline std::string weight_column(const std::string& weighting) {
  if (weighting == "equal") return {};
  if (weighting.rfind("column=", 0) == 0 && weighting.size() > 7) return weighting.substr(7);
  throw Error(ErrorCode::kInvalidArgument, "--weighting must be 'equal' or 'column=<name>'");
}

inline std::string hash_file(const std::string& path) { return text::hex64(text::fnv1a(text::read_file(path))); }

inline void add_input(json& manifest, const std::string& role, const std::string& path) {
  manifest["inputs"][role] = {{"path", path}, {"fnv1a64", hash_file(path)}};
}

inline json base_manifest(const std::string& command) {
  json m;
  m["tool"] = "stagger";
  m["version"] = std::string(kVersion);
  m["command"] = command;
  m["args"] = json::array();
  m["inputs"] = json::object();
  return m;
}

inline std::string fmt_num(double v) { return text::format_double(v); }

class Writer {
 public:
  Writer(std::string dir, const json& manifest) : dir_(std::move(dir)), manifest_(manifest) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create output directory " + dir_ + ": " + ec.message());
  }

  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

  void write(const std::string& name, const std::string& content) {
    text::write_file(path(name), content);
    written_.push_back(name);
  }

  void write_manifest() { write("manifest.json", manifest_.dump(2) + "\n"); }

  const std::vector<std::string>& written() const { return written_; }

 private:
  std::string dir_;
  const json& manifest_;
  std::vector<std::string> written_;
};

inline Panel load_input_panel(const Common& c) {
  Panel panel = read_panel(text::read_file(c.panel), c.delim);
  if (c.log) panel = log_transform(panel);
  if (c.shift != 0) panel = shift_treatment(panel, c.shift);
  return panel;
}

inline void common_args(json& m, const Common& c, bool with_inference) {
  auto& a = m["args"];
  a.push_back("--panel");
  a.push_back(c.panel);
  if (c.delim != ',') {
    a.push_back("--delim");
    a.push_back(std::string(1, c.delim));
  }
  for (const auto& [flag, v] : {std::pair<std::string, std::string>{"--lags", std::to_string(c.lags)},
                                {"--leads", std::to_string(c.leads)},
                                {"--shift", std::to_string(c.shift)},
                                {"--control", c.control},
                                {"--weighting", c.weighting}}) {
    a.push_back(flag);
    a.push_back(v);
  }
  if (with_inference) {
    a.push_back("--reps");
    a.push_back(std::to_string(c.reps));
    a.push_back("--seed");
    a.push_back(std::to_string(*c.seed));
    a.push_back("--level");
    a.push_back(fmt_num(c.level));
  }
  a.push_back("--format");
  a.push_back(c.format);
  if (c.log) a.push_back("--log");
  m["config"]["lags"] = c.lags;
  m["config"]["leads"] = c.leads;
  m["config"]["shift"] = c.shift;
  m["config"]["control"] = c.control;
  m["config"]["weighting"] = c.weighting;
  m["config"]["log_outcome"] = c.log;
  m["config"]["format"] = c.format;
  if (with_inference) {
    m["config"]["reps"] = c.reps;
    m["config"]["seed"] = *c.seed;
    m["config"]["level"] = c.level;
    m["config"]["inference"] = "unit cluster bootstrap, percentile intervals";
  }
}

inline std::string series_file(const EstimateSeries& s, const json& m, const std::string& format) {
  return format == "json" ? write_series_json(s, &m) : write_series_csv(s, &m);
}

inline std::string ext(const std::string& format) { return format == "json" ? ".json" : ".csv"; }

inline BootstrapConfig bootstrap_config(const Common& c) {
  BootstrapConfig b;
  b.replications = c.reps;
  b.seed = *c.seed;
  b.ci_level = c.level;
  b.threads = c.threads;
  return b;
}

inline RobustOptions robust_options(const Common& c) {
  RobustOptions o;
  o.lags = c.lags;
  o.leads = c.leads;
  o.control = control_rule(c.control);
  o.weight_column = weight_column(c.weighting);
  return o;
}

// Side-by-side robust / TWFE table.
inline std::string comparison_file(const EstimateSeries& robust, const EstimateSeries* twfe,
                                   const std::optional<TwfeEstimate>& twfe_static_fit, const json& m,
                                   const std::string& format) {
  std::map<int, std::pair<const SeriesEntry*, const SeriesEntry*>> rows;
  for (const auto& e : robust.entries) rows[e.event_time].first = &e;
  if (twfe) {
    for (const auto& e : twfe->entries) rows[e.event_time].second = &e;
  }
  const auto est = [](const SeriesEntry* e) { return e && e->identified ? e->estimate : kNaN; };
  const auto se = [](const SeriesEntry* e) { return e && e->identified ? e->se : kNaN; };
  if (format == "json") {
    json doc;
    doc["manifest"] = m;
    json arr = json::array();
    for (const auto& [l, p] : rows) {
      arr.push_back({{"event_time", l},
                     {"robust_estimate", json_number(est(p.first))},
                     {"robust_se", json_number(se(p.first))},
                     {"twfe_estimate", json_number(est(p.second))},
                     {"twfe_se", json_number(se(p.second))}});
    }
    doc["comparison"] = arr;
    if (twfe_static_fit) {
      doc["twfe_static"] = {{"estimate", json_number(twfe_static_fit->coefficient)},
                            {"se", json_number(twfe_static_fit->se)}};
    }
    return doc.dump(2) + "\n";
  }
  std::string out = "# manifest: " + m.dump() + "\n";
  if (twfe_static_fit) {
    out += "# twfe_static: " + fmt_num(twfe_static_fit->coefficient) + " se " + fmt_num(twfe_static_fit->se) + "\n";
  }
  out += "event_time,robust_estimate,robust_se,twfe_estimate,twfe_se\n";
  for (const auto& [l, p] : rows) {
    out += std::to_string(l) + "," + fmt_num(est(p.first)) + "," + fmt_num(se(p.first)) + "," +
           fmt_num(est(p.second)) + "," + fmt_num(se(p.second)) + "\n";
  }
  return out;
}

inline void check_common(const Common& c) {
  if (c.lags < 0 || c.leads < 0) throw Error(ErrorCode::kInvalidArgument, "--lags and --leads must be >= 0");
  if (c.shift < 0) throw Error(ErrorCode::kInvalidArgument, "--shift must be >= 0");
  if (!(c.level > 0.0 && c.level < 1.0)) throw Error(ErrorCode::kInvalidArgument, "--level must lie in (0, 1)");
  weight_column(c.weighting);
}

inline void add_common_flags(CLI::App* sub, Common& c, bool inference) {
  sub->add_option("--panel", c.panel, "long-format panel file (unit,period,outcome,treated)")->required();
  sub->add_option("--delim", c.delim, "field delimiter");
  sub->add_option("--lags", c.lags, "dynamic horizons 0..L");
  sub->add_option("--leads", c.leads, "placebo horizons 1..K");
  sub->add_option("--shift", c.shift, "move every switch N periods earlier");
  sub->add_option("--control", c.control, "control pool")->check(CLI::IsMember({"not-yet", "never"}));
  sub->add_option("--weighting", c.weighting, "equal or column=<name>");
  sub->add_option("--format", c.format, "output format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--out", c.out, "output directory");
  sub->add_flag("--log", c.log, "take logs of the outcome first");
  if (inference) {
    sub->add_option("--reps", c.reps, "bootstrap replications (0 disables inference)");
    sub->add_option("--seed", c.seed, "random seed")->required();
    sub->add_option("--level", c.level, "confidence level");
    sub->add_option("--threads", c.threads, "bootstrap worker threads (0 = all cores)");
  }
}

inline int cmd_validate(const Common& c, Io io) {
  check_common(c);
  const Panel panel = load_input_panel(c);
  const auto map = cohorts(panel);
  auto& o = io.out;
  o << "units: " << panel.num_units() << "\n";
  o << "periods: " << panel.min_period() << "-" << panel.max_period() << " (" << panel.num_periods() << ")\n";
  o << "observations: " << panel.num_observations() << "\n";
  o << "balanced: " << (panel.balanced() ? "yes" : "no") << "\n";
  o << "never treated: " << map.never_treated.size() << "\n";
  o << "always treated: " << map.always_treated.size() << "\n";
  o << "switchers: " << map.num_switchers() << "\n";
  std::map<int, std::size_t> histogram;
  for (const auto& [unit, s] : map.first_switch) {
    if (!map.always_treated.count(unit)) ++histogram[s];
  }
  o << "cohorts (switch period: units)\n";
  for (const auto& [s, n] : histogram) o << "  " << s << ": " << n << "\n";
  const auto counts = switcher_counts(panel, map, c.lags, c.leads, control_rule(c.control));
  o << "identified switchers (event time: units)\n";
  for (const auto& [l, n] : counts.per_event_time) {
    // Placebo horizons are listed at the event time they are reported at.
    o << "  " << (l < 0 ? -1 + l : l) << ": " << n << "\n";
  }
  return 0;
}

inline int cmd_estimate(const Common& c, const std::string& estimator, bool bin, Io io) {
  check_common(c);
  json m = base_manifest("estimate");
  common_args(m, c, true);
  m["args"].push_back("--estimator");
  m["args"].push_back(estimator);
  m["args"].push_back("--twfe-endpoints");
  m["args"].push_back(bin ? "binned" : "reference");
  m["config"]["estimator"] = estimator;
  m["config"]["twfe_endpoints"] = bin ? "binned" : "reference";
  add_input(m, "panel", c.panel);
  const Panel panel = load_input_panel(c);
  const auto map = cohorts(panel);

  Writer w(c.out, m);
  EstimateSeries robust;
  std::optional<EstimateSeries> twfe;
  std::optional<TwfeEstimate> twfe_fit;
  if (estimator != "twfe") {
    const auto config = bootstrap_config(c);
    BootstrapResult boot;
    robust = robust_event_study(panel, map, robust_options(c), c.reps > 0 ? &config : nullptr, &boot);
    w.write("robust" + ext(c.format), series_file(robust, m, c.format));
    if (c.reps > 0 && c.leads > 0) {
      try {
        const auto wald = pretrend_wald(robust, boot);
        io.out << "pre-trend wald: chi2(" << wald.dof << ") = " << text::format_fixed(wald.statistic, 3)
               << ", p = " << text::format_fixed(wald.p_value, 4) << "\n";
      } catch (const Error& e) {
        io.err << "warning: " << e.class_name() << ": " << e.what() << "\n";
      }
    }
  }
  if (estimator != "robust") {
    const Panel tw = exclude_always_treated(panel);
    TwfeSpec spec;
    spec.leads = std::max(c.leads, 1);
    spec.lags = c.lags;
    spec.bin_endpoints = bin;
    spec.level = c.level;
    twfe = twfe_event_study(tw, spec);
    twfe->estimator = "twfe";
    w.write("twfe" + ext(c.format), series_file(*twfe, m, c.format));
    try {
      twfe_fit = twfe_static(tw);
      io.out << "static twfe: " << format_estimate(twfe_fit->coefficient, twfe_fit->se) << "\n";
      const auto weights = twfe_weights(tw);
      io.out << "twfe weights: " << weights.num_negative << " of " << weights.cells.size()
             << " treated cells negative (mass " << text::format_fixed(weights.negative_mass, 4) << ")\n";
      w.write("twfe_weights.csv", write_weights_csv(weights, &m));
    } catch (const Error& e) {
      io.err << "warning: " << e.class_name() << ": " << e.what() << "\n";
    }
  }
  if (estimator == "both") {
    w.write("comparison" + ext(c.format), comparison_file(robust, &*twfe, twfe_fit, m, c.format));
  }
  w.write_manifest();
  for (const auto& f : w.written()) io.out << "wrote " << w.path(f) << "\n";
  return 0;
}

inline int cmd_spillover(const Common& c, const std::string& adjacency, const std::string& match, Io io) {
  check_common(c);
  json m = base_manifest("spillover");
  common_args(m, c, true);
  m["args"].push_back("--adjacency");
  m["args"].push_back(adjacency);
  m["args"].push_back("--match");
  m["args"].push_back(match);
  m["config"]["match"] = match;
  add_input(m, "panel", c.panel);
  add_input(m, "adjacency", adjacency);
  const Panel panel = load_input_panel(c);
  const auto graph = read_adjacency(text::read_file(adjacency), c.delim);
  const auto spill = build_spillover_panel(panel, cohorts(panel), graph,
                                           match == "nearest" ? MatchMode::kNearest : MatchMode::kAdjacentEarliest);
  const auto config = bootstrap_config(c);
  const auto series = spillover_event_study(spill, robust_options(c), c.reps > 0 ? &config : nullptr);

  Writer w(c.out, m);
  w.write("spillover" + ext(c.format), series_file(series, m, c.format));
  std::string report = "# manifest: " + m.dump() + "\nunit,status,neighbour,switch_period\n";
  for (const auto& r : spill.report.matched) {
    report += r.unit + ",matched," + r.neighbour + "," + std::to_string(r.switch_period) + "\n";
  }
  for (const auto& u : spill.report.unmatched) report += u + ",unmatched,,\n";
  w.write("matches.csv", report);
  w.write_manifest();
  io.out << "never-treated units: " << spill.report.never_treated << ", matched: " << spill.report.matched.size()
         << ", unmatched: " << spill.report.unmatched.size() << "\n";
  for (const auto& f : w.written()) io.out << "wrote " << w.path(f) << "\n";
  return 0;
}

struct CrossOptions {
  std::string plants;
  std::string rail;
  std::string groups;
  std::string window = "1913:1917";
  int digits = 2;
  std::string format = "csv";
  std::string out = ".";
  char delim = ',';
};

inline std::pair<int, int> parse_window(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--window must be first:last");
  return {static_cast<int>(text::parse_int(std::string_view(s).substr(0, colon), "--window")),
          static_cast<int>(text::parse_int(std::string_view(s).substr(colon + 1), "--window"))};
}

inline std::map<std::string, std::string> read_unit_labels(const std::string& path, const std::string& column,
                                                           char delim) {
  const auto table = text::Table::parse(text::read_file(path), delim);
  const auto cu = table.require_column("unit");
  const auto cv = table.require_column(column);
  std::map<std::string, std::string> out;
  for (const auto& f : table.rows()) out[f[cu]] = f[cv];
  return out;
}

inline int cmd_crosssec(const CrossOptions& c, Io io) {
  json m = base_manifest("crosssec");
  auto& a = m["args"];
  for (const auto& v : {std::string("--plants"), c.plants, std::string("--rail"), c.rail}) a.push_back(v);
  if (!c.groups.empty()) {
    a.push_back("--groups");
    a.push_back(c.groups);
  }
  for (const auto& v : {std::string("--window"), c.window, std::string("--digits"), std::to_string(c.digits),
                        std::string("--format"), c.format}) {
    a.push_back(v);
  }
  if (c.delim != ',') {
    a.push_back("--delim");
    a.push_back(std::string(1, c.delim));
  }
  m["config"] = {{"window", c.window}, {"digits", c.digits}, {"format", c.format}, {"outcome", "log production value"}};
  add_input(m, "plants", c.plants);
  add_input(m, "rail", c.rail);
  if (!c.groups.empty()) add_input(m, "groups", c.groups);

  const auto [y0, y1] = parse_window(c.window);
  const auto agg = aggregate_plant_outcomes(read_plants(text::read_file(c.plants), c.delim), y0, y1);
  std::map<std::string, bool> rail;
  for (const auto& [unit, v] : read_unit_labels(c.rail, "rail", c.delim)) {
    if (v != "0" && v != "1") throw Error(ErrorCode::kParse, "rail must be 0 or 1 for unit " + unit, {unit});
    rail[unit] = v == "1";
  }
  std::vector<std::pair<std::string, std::map<std::string, std::string>>> panels{{"all", {}}};
  if (!c.groups.empty()) {
    std::map<std::string, std::map<std::string, std::string>> by_group;
    for (const auto& [unit, g] : read_unit_labels(c.groups, "group", c.delim)) by_group[g][unit] = g;
    for (auto& [g, members] : by_group) panels.emplace_back(g, std::move(members));
  }

  struct Cell {
    std::string group;
    std::string sector;
    StrataRow row;
  };
  std::vector<Cell> cells;
  for (const auto& [group, members] : panels) {
    for (int sector = 0; sector <= 9; ++sector) {
      auto outcomes = log_production(agg, sector);
      if (group != "all") std::erase_if(outcomes, [&](const auto& kv) { return !members.count(kv.first); });
      if (outcomes.empty()) continue;
      auto table = cross_sectional(outcomes, rail);
      StrataRow row = table.rows.front();
      row.stratum = sector == 0 ? "all" : std::to_string(sector);
      cells.push_back({group, row.stratum, row});
      io.out << (group == "all" ? "" : "[" + group + "] ")
             << (sector == 0 ? std::string("all sectors") : "sector " + row.stratum) << ": "
             << format_strata_row(row, c.digits) << "\n";
    }
  }

  Writer w(c.out, m);
  if (c.format == "json") {
    json doc;
    doc["manifest"] = m;
    json arr = json::array();
    for (const auto& cell : cells) {
      arr.push_back({{"group", cell.group},
                     {"sector", cell.sector},
                     {"available", cell.row.available},
                     {"coefficient", json_number(cell.row.coefficient)},
                     {"se", json_number(cell.row.se)},
                     {"n_treated", cell.row.n_treated},
                     {"n_control", cell.row.n_control}});
    }
    doc["strata"] = arr;
    w.write("crosssec.json", doc.dump(2) + "\n");
  } else {
    // Strata as columns, one block of rows per initial-condition group.
    std::vector<std::string> sectors{"all"};
    for (int s = 1; s <= 9; ++s) sectors.push_back(std::to_string(s));
    std::string out = "# manifest: " + m.dump() + "\ngroup,statistic";
    for (const auto& s : sectors) out += "," + s;
    out += "\n";
    for (const auto& [group, members] : panels) {
      for (const std::string stat : {"coefficient", "se", "n_treated", "n_control", "cell"}) {
        out += group + "," + stat;
        for (const auto& s : sectors) {
          auto it = std::find_if(cells.begin(), cells.end(),
                                 [&](const Cell& x) { return x.group == group && x.sector == s; });
          out += ",";
          if (it == cells.end()) {
            out += "NA";
          } else if (stat == "coefficient") {
            out += fmt_num(it->row.coefficient);
          } else if (stat == "se") {
            out += fmt_num(it->row.se);
          } else if (stat == "n_treated") {
            out += std::to_string(it->row.n_treated);
          } else if (stat == "n_control") {
            out += std::to_string(it->row.n_control);
          } else {
            out += text::quote_if_needed(format_strata_row(it->row, c.digits), ',');
          }
        }
        out += "\n";
      }
    }
    w.write("crosssec.csv", out);
  }
  w.write_manifest();
  return 0;
}

struct SimulateOptions {
  std::string scenario;
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

inline int cmd_simulate(const SimulateOptions& s, Io io) {
  if (s.scenario.empty() == s.config.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "give exactly one of --scenario and --config");
  }
  json m = base_manifest("simulate");
  auto& a = m["args"];
  DgpConfig config;
  if (!s.scenario.empty()) {
    a.push_back("--scenario");
    a.push_back(s.scenario);
    config = scenario(s.scenario);
  } else {
    a.push_back("--config");
    a.push_back(s.config);
    add_input(m, "config", s.config);
    config = config_from_text(text::read_file(s.config));
  }
  for (const auto& kv : s.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--set expects key=value");
    apply_config_entry(config, text::trim(std::string_view(kv).substr(0, eq)),
                       text::trim(std::string_view(kv).substr(eq + 1)));
    a.push_back("--set");
    a.push_back(kv);
  }
  config.seed = *s.seed;
  validate(config);
  a.push_back("--seed");
  a.push_back(std::to_string(*s.seed));
  m["config"]["dgp"] = config_to_text(config);
  m["config"]["seed"] = *s.seed;

  const auto sim = generate(config);
  Writer w(s.out, m);
  const std::string tag = "# manifest: " + m.dump() + "\n";
  w.write("panel.csv", tag + write_panel(sim.panel));
  w.write("truth.csv", tag + write_truth_csv(sim.truth));
  w.write("config.txt", "# manifest: " + m.dump() + "\n" + config_to_text(config));
  if (!sim.truth.graph.empty()) w.write("adjacency.csv", tag + write_adjacency(sim.truth.graph));
  w.write_manifest();
  io.out << "scenario " << config.name << ": " << sim.panel.num_units() << " units, " << sim.panel.num_observations()
         << " observations\n";
  for (const auto& f : w.written()) io.out << "wrote " << w.path(f) << "\n";
  return 0;
}

inline EstimateSeries read_any_series(const std::string& path) {
  const auto content = text::read_file(path);
  const auto first = content.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && content[first] == '{') return read_series_json(content);
  return read_series_csv(content);
}

inline int cmd_compare(const std::vector<std::string>& files, const std::string& format, const std::string& out_dir,
                       Io io) {
  json m = base_manifest("compare");
  for (const auto& f : files) m["args"].push_back(f);
  m["args"].push_back("--format");
  m["args"].push_back(format);
  m["config"]["format"] = format;
  for (std::size_t i = 0; i < files.size(); ++i) add_input(m, "series" + std::to_string(i + 1), files[i]);
  std::vector<std::pair<std::string, EstimateSeries>> all;
  for (const auto& f : files) all.emplace_back(std::filesystem::path(f).filename().string(), read_any_series(f));

  Writer w(out_dir, m);
  if (format == "json") {
    json doc;
    doc["manifest"] = m;
    json arr = json::array();
    for (const auto& [source, s] : all) {
      for (const auto& e : s.entries) {
        arr.push_back({{"source", source},
                       {"estimator", s.estimator},
                       {"event_time", e.event_time},
                       {"estimate", json_number(e.identified ? e.estimate : kNaN)},
                       {"se", json_number(e.se)},
                       {"ci_low", json_number(e.ci_low)},
                       {"ci_high", json_number(e.ci_high)},
                       {"n_switchers", e.n_switchers}});
      }
    }
    doc["rows"] = arr;
    w.write("compare.json", doc.dump(2) + "\n");
  } else {
    std::string out = "# manifest: " + m.dump() + "\nsource,estimator,event_time,estimate,se,ci_low,ci_high,n_switchers\n";
    for (const auto& [source, s] : all) {
      for (const auto& e : s.entries) {
        out += text::quote_if_needed(source, ',') + "," + text::quote_if_needed(s.estimator, ',') + "," +
               std::to_string(e.event_time) + "," + fmt_num(e.identified ? e.estimate : kNaN) + "," + fmt_num(e.se) +
               "," + fmt_num(e.ci_low) + "," + fmt_num(e.ci_high) + "," + std::to_string(e.n_switchers) + "\n";
      }
    }
    w.write("compare.csv", out);
  }
  w.write_manifest();
  for (const auto& f : w.written()) io.out << "wrote " << w.path(f) << "\n";
  return 0;
}

}  // namespace detail

int run(std::vector<std::string> args, Io io);

namespace detail {

inline int cmd_rerun(const std::string& manifest_path, const std::string& out_dir, Io io) {
  json m;
  try {
    m = json::parse(text::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "manifest " + manifest_path + ": " + e.what());
  }
  if (!m.contains("command") || !m.contains("args")) {
    throw Error(ErrorCode::kParse, "manifest " + manifest_path + " lacks command or args");
  }
  for (const auto& [role, input] : m["inputs"].items()) {
    const auto path = input.at("path").get<std::string>();
    if (hash_file(path) != input.at("fnv1a64").get<std::string>()) {
      throw Error(ErrorCode::kInvalidArgument, "input " + path + " changed since the manifest was written", {path});
    }
  }
  std::vector<std::string> args{m["command"].get<std::string>()};
  for (const auto& a : m["args"]) args.push_back(a.get<std::string>());
  args.push_back("--out");
  args.push_back(out_dir);
  return run(std::move(args), io);
}

}  // namespace detail

/// Runs one command line (without the program name) and returns its exit
/// code: 0 on success, the ErrorCode value otherwise.
inline int run(std::vector<std::string> args, Io io) {
  CLI::App app{"Staggered-adoption event studies", "stagger"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  detail::Common validate_opts;
  auto* validate = app.add_subcommand("validate", "summarise a panel and its switcher counts");
  validate->add_option("--panel", validate_opts.panel, "panel file")->required();
  validate->add_option("--delim", validate_opts.delim, "field delimiter");
  validate->add_option("--lags", validate_opts.lags, "dynamic horizons 0..L");
  validate->add_option("--leads", validate_opts.leads, "placebo horizons 1..K");
  validate->add_option("--shift", validate_opts.shift, "move every switch N periods earlier");
  validate->add_option("--control", validate_opts.control, "control pool")->check(CLI::IsMember({"not-yet", "never"}));
  validate->add_flag("--log", validate_opts.log, "take logs of the outcome first");

  detail::Common estimate_opts;
  std::string estimator = "both";
  std::string endpoints = "binned";
  auto* estimate = app.add_subcommand("estimate", "robust and TWFE event studies");
  detail::add_common_flags(estimate, estimate_opts, true);
  estimate->add_option("--estimator", estimator, "which estimators")->check(CLI::IsMember({"robust", "twfe", "both"}));
  estimate->add_option("--twfe-endpoints", endpoints, "TWFE event times beyond the window")
      ->check(CLI::IsMember({"binned", "reference"}));

  detail::Common spill_opts;
  std::string adjacency;
  std::string match = "adjacent";
  auto* spillover = app.add_subcommand("spillover", "neighbour spillover placebo design");
  detail::add_common_flags(spillover, spill_opts, true);
  spillover->add_option("--adjacency", adjacency, "adjacency file (unit_a,unit_b[,distance])")->required();
  spillover->add_option("--match", match, "matching rule")->check(CLI::IsMember({"adjacent", "nearest"}));

  detail::CrossOptions cross_opts;
  auto* crosssec = app.add_subcommand("crosssec", "cross-sectional rail comparison by sector");
  crosssec->add_option("--plants", cross_opts.plants, "plant file")->required();
  crosssec->add_option("--rail", cross_opts.rail, "unit,rail indicator file")->required();
  crosssec->add_option("--groups", cross_opts.groups, "unit,group initial-condition file");
  crosssec->add_option("--window", cross_opts.window, "aggregation years first:last");
  crosssec->add_option("--digits", cross_opts.digits, "decimals in the printed table");
  crosssec->add_option("--format", cross_opts.format, "output format")->check(CLI::IsMember({"csv", "json"}));
  crosssec->add_option("--out", cross_opts.out, "output directory");
  crosssec->add_option("--delim", cross_opts.delim, "field delimiter");

  detail::SimulateOptions sim_opts;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic panel with known truth");
  simulate->add_option("--scenario", sim_opts.scenario, "library scenario name");
  simulate->add_option("--config", sim_opts.config, "key = value configuration file");
  simulate->add_option("--set", sim_opts.set, "override one configuration entry (key=value)");
  simulate->add_option("--seed", sim_opts.seed, "random seed")->required();
  simulate->add_option("--out", sim_opts.out, "output directory");

  std::vector<std::string> files;
  std::string compare_format = "csv";
  std::string compare_out = ".";
  auto* compare = app.add_subcommand("compare", "merge series files into one long table");
  compare->add_option("files", files, "series files (csv or json)")->required();
  compare->add_option("--format", compare_format, "output format")->check(CLI::IsMember({"csv", "json"}));
  compare->add_option("--out", compare_out, "output directory");

  std::string manifest_path;
  std::string rerun_out = ".";
  auto* rerun = app.add_subcommand("rerun", "replay the run recorded in a manifest");
  rerun->add_option("manifest", manifest_path, "manifest.json")->required();
  rerun->add_option("--out", rerun_out, "output directory");

  auto* scenarios = app.add_subcommand("scenarios", "list library scenarios");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    io.out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << error_class_name(ErrorCode::kInvalidArgument) << ": " << e.what() << "\n";
    return static_cast<int>(ErrorCode::kInvalidArgument);
  }

  try {
    if (*validate) return detail::cmd_validate(validate_opts, io);
    if (*estimate) return detail::cmd_estimate(estimate_opts, estimator, endpoints == "binned", io);
    if (*spillover) return detail::cmd_spillover(spill_opts, adjacency, match, io);
    if (*crosssec) return detail::cmd_crosssec(cross_opts, io);
    if (*simulate) return detail::cmd_simulate(sim_opts, io);
    if (*compare) return detail::cmd_compare(files, compare_format, compare_out, io);
    if (*rerun) return detail::cmd_rerun(manifest_path, rerun_out, io);
    if (*scenarios) {
      for (const auto& c : scenario_library()) io.out << c.name << "\n";
      return 0;
    }
  } catch (const Error& e) {
    io.err << "error: " << e.class_name() << ": " << e.what() << "\n";
    return static_cast<int>(e.code());
  }
  return 0;
}

}  // namespace stagger::cli
