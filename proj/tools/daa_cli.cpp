// daa — regime-switching dynamic asset allocation toolkit.
//
// Subcommands: generate, fit, select-features, calibrate-window, backtest,
// sweep, report. Configuration comes from a JSON file plus a few command-line
// overrides; every command is deterministic given (config, seed) and writes
// byte-identical outputs on re-runs.
//
// Exit codes: 0 success, 2 config/usage, 3 numerical failure,
//             4 pipeline (e.g. empty feature selection), 5 I/O.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "daa/backtest.hpp"
#include "daa/fshmm.hpp"
#include "daa/ghmm.hpp"
#include "daa/metrics.hpp"
#include "daa/panel.hpp"
#include "daa/portfolio.hpp"
#include "daa/serialize.hpp"
#include "daa/synthetic.hpp"

namespace fs = std::filesystem;
using daa::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPipeline = 4;
constexpr int kExitIo = 5;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

fs::path resolve_out_dir(const CommonArgs& args, const json& config) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (config.contains("output_dir")) return config["output_dir"].get<std::string>();
  if (const char* env = std::getenv("DAA_OUTPUT_DIR")) return env;
  return "out";
}

json load_config(const CommonArgs& args) {
  if (args.config_path.empty()) throw daa::ParameterError("--config is required");
  if (!fs::exists(args.config_path))
    throw daa::ParameterError("config file does not exist: " + args.config_path);
  return daa::read_json(args.config_path);
}

std::uint64_t effective_seed(const CommonArgs& args, const json& config) {
  if (args.seed) return *args.seed;
  return config.value("seed", 0ull);
}

// Declarative run description: panels, asset subsets, splits, hyperparameters.
struct RunConfig {
  json raw;
  std::uint64_t seed = 0;
  daa::ReturnPanel train_panel;
  daa::ReturnPanel alloc_panel;
  daa::DateSplits splits;
  daa::DaaConfig daa;
  daa::FsDaaConfig fs;
  std::vector<int> candidate_windows;
  std::optional<std::string> model_file;

  RunConfig(daa::ReturnPanel train, daa::ReturnPanel alloc)
      : train_panel(std::move(train)), alloc_panel(std::move(alloc)) {}
};

std::vector<int> parse_window_range(const std::string& text) {
  std::vector<int> out;
  auto dots = text.find("..");
  if (dots != std::string::npos) {
    int lo = std::stoi(text.substr(0, dots));
    int hi = std::stoi(text.substr(dots + 2));
    if (lo < 1 || hi < lo) throw daa::ParameterError("bad window range: " + text);
    for (int d = lo; d <= hi; ++d) out.push_back(d);
  } else {
    std::string tok;
    std::stringstream ss(text);
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw daa::ParameterError("empty window candidate list");
  return out;
}

RunConfig build_run_config(const json& config, std::uint64_t seed) {
  if (!config.contains("data")) throw daa::ParameterError("config needs a 'data' section");
  const json& data = config["data"];
  const std::string train_path = data.at("train_panel").get<std::string>();
  const std::string alloc_path = data.value("alloc_panel", train_path);
  const std::string date_column = data.value("date_column", std::string("date"));
  for (const auto& p : {train_path, alloc_path})
    if (!fs::exists(p)) throw daa::ParameterError("panel file does not exist: " + p);

  daa::ReturnPanel train = daa::load_csv(train_path, date_column).panel;
  daa::ReturnPanel alloc = alloc_path == train_path
                               ? train
                               : daa::load_csv(alloc_path, date_column).panel;

  RunConfig rc(std::move(train), std::move(alloc));
  rc.raw = config;
  rc.seed = seed;

  if (data.contains("train_assets")) {
    rc.daa.train_assets = data["train_assets"].get<std::vector<std::string>>();
    rc.train_panel = rc.train_panel.select_columns_by_name(rc.daa.train_assets);
  }
  if (data.contains("alloc_assets")) {
    rc.daa.alloc_assets = data["alloc_assets"].get<std::vector<std::string>>();
    rc.alloc_panel = rc.alloc_panel.select_columns_by_name(rc.daa.alloc_assets);
  }

  if (!config.contains("splits")) throw daa::ParameterError("config needs a 'splits' section");
  const json& sp = config["splits"];
  rc.splits.train_end = daa::Date::parse(sp.at("train_end").get<std::string>());
  rc.splits.validation_end = daa::Date::parse(sp.at("validation_end").get<std::string>());
  rc.splits.test_end = daa::Date::parse(sp.at("test_end").get<std::string>());
  rc.splits.validate();

  const json model = config.value("model", json::object());
  rc.daa.n_states = model.value("n_states", 2);
  rc.daa.fit.tol = model.value("tol", 1e-6);
  rc.daa.fit.max_iter = model.value("max_iter", 500);
  rc.daa.fit.n_restarts = model.value("n_restarts", 10);
  rc.daa.fit.seed = seed;

  const json bt = config.value("backtest", json::object());
  rc.daa.method = daa::portfolio_method_from_string(bt.value("method", std::string("sharpe")));
  rc.daa.confirm_window = bt.value("confirm_window", 5);
  rc.daa.cost_rate = bt.value("cost_rate", 0.005);
  rc.daa.max_return_cap = bt.value("max_return_cap", 0.8);
  if (bt.contains("moment_span_start"))
    rc.daa.moment_span_start = daa::Date::parse(bt["moment_span_start"].get<std::string>());
  if (bt.contains("candidate_windows"))
    rc.candidate_windows = bt["candidate_windows"].get<std::vector<int>>();
  if (bt.contains("model_file")) {
    rc.model_file = bt["model_file"].get<std::string>();
    if (!fs::exists(*rc.model_file))
      throw daa::ParameterError("model file does not exist: " + *rc.model_file);
  }

  const json fscfg = config.value("fshmm", json::object());
  rc.fs.k_scale = fscfg.value("k_scale", 0.25);
  rc.fs.threshold = fscfg.value("threshold", 0.9);
  rc.fs.fshmm.delta = fscfg.value("delta", 1e-6);
  rc.fs.fshmm.max_iter = fscfg.value("max_iter", 500);
  rc.fs.fshmm.n_restarts = fscfg.value("n_restarts", 5);
  rc.fs.fshmm.seed = seed;
  return rc;
}

json manifest_skeleton(const std::string& command, const json& config, std::uint64_t seed) {
  return json{{"command", command},
              {"config", config},
              {"config_hash", daa::fnv1a_hex(config.dump())},
              {"seed", seed},
              {"outputs", json::array()},
              {"models", json::object()},
              {"strategies", json::object()}};
}

void add_output(json& manifest, const fs::path& p) {
  manifest["outputs"].push_back(p.string());
}

json ledger_summary(const daa::BacktestLedger& ledger) {
  json events = json::array();
  for (const auto& e : ledger.events) events.push_back(e);
  return json{{"n_days", ledger.rows.size()},
              {"n_rebalances", ledger.rebalance_count()},
              {"total_cost", ledger.total_cost()},
              {"events", std::move(events)},
              {"notes", ledger.notes},
              {"aborted", ledger.aborted},
              {"error", ledger.error}};
}

void write_strategy_outputs(const std::string& name, const daa::BacktestLedger& ledger,
                            const fs::path& out_dir, json& manifest) {
  const fs::path ledger_path = out_dir / ("ledger_" + name + ".csv");
  daa::export_ledger_csv(ledger, ledger_path);
  add_output(manifest, ledger_path);

  auto report = daa::compute_report(ledger.net_returns());
  json rj = report;
  rj["label"] = name;
  const fs::path report_path = out_dir / ("report_" + name + ".json");
  daa::write_json(rj, report_path);
  add_output(manifest, report_path);
  manifest["strategies"][name] = ledger_summary(ledger);
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

int cmd_generate(const CommonArgs& args) {
  json config = load_config(args);
  if (!config.contains("synthetic"))
    throw daa::ParameterError("config needs a 'synthetic' section");
  daa::SyntheticSpec spec = config["synthetic"].get<daa::SyntheticSpec>();
  if (!config["synthetic"].contains("seed")) spec.seed = effective_seed(args, config);
  if (args.seed) spec.seed = *args.seed;

  auto sample = daa::generate_synthetic(spec);
  const fs::path out_dir = resolve_out_dir(args, config);
  fs::create_directories(out_dir);

  const fs::path panel_path = out_dir / "panel.csv";
  daa::save_csv(sample.panel, panel_path);

  const fs::path states_path = out_dir / "states.csv";
  {
    std::ofstream out(states_path);
    if (!out) throw daa::IoError("cannot write " + states_path.string());
    out << "date,state\n";
    for (std::size_t t = 0; t < sample.panel.rows(); ++t)
      out << sample.panel.date(t).to_string() << ',' << sample.states[t] << '\n';
  }

  json spec_json = spec;
  daa::write_json(spec_json, out_dir / "spec.json");
  std::cout << "wrote " << panel_path.string() << " (" << sample.panel.rows() << " x "
            << sample.panel.cols() << "), states.csv, spec.json\n";
  return kExitOk;
}

int cmd_fit(const CommonArgs& args, const std::string& panel_path,
            const std::string& model_kind, int n_states, double k_scale, int n_restarts,
            const std::string& date_column) {
  if (n_states < 1) throw daa::ParameterError("--states must be >= 1");
  json config = args.config_path.empty() ? json::object() : load_config(args);
  std::string path = panel_path;
  if (path.empty() && config.contains("data"))
    path = config["data"].value("train_panel", std::string());
  if (path.empty()) throw daa::ParameterError("--panel (or config data.train_panel) required");
  if (!fs::exists(path)) throw daa::ParameterError("panel file does not exist: " + path);

  auto loaded = daa::load_csv(path, date_column);
  const std::uint64_t seed = effective_seed(args, config);
  const fs::path out_dir = resolve_out_dir(args, config);
  fs::create_directories(out_dir);

  json manifest = manifest_skeleton("fit", config, seed);
  if (loaded.dropped_rows > 0)
    std::cout << "dropped " << loaded.dropped_rows << " rows with missing values\n";

  if (model_kind == "hmm") {
    daa::FitConfig fit;
    fit.seed = seed;
    fit.n_restarts = n_restarts;
    auto [model, report] = daa::fit_baum_welch(loaded.panel, n_states, fit);
    json mj = model;
    mj["assets"] = loaded.panel.assets();
    mj["fit_report"] = report;
    const fs::path model_path = out_dir / "model_hmm.json";
    daa::write_json(mj, model_path);
    add_output(manifest, model_path);
    manifest["models"]["hmm"] = daa::fnv1a_hex(mj.dump());
    std::cout << "hmm fit: K=" << n_states << " log_likelihood=" << report.log_likelihood
              << " converged=" << (report.converged ? "yes" : "no") << '\n';
  } else if (model_kind == "fshmm") {
    daa::FshmmConfig fit;
    fit.seed = seed;
    fit.n_restarts = n_restarts;
    auto priors = daa::default_priors(loaded.panel, n_states, k_scale);
    auto [model, report] = daa::fit_fshmm_map(loaded.panel, n_states, priors, fit);
    json mj = model;
    mj["assets"] = loaded.panel.assets();
    mj["priors"] = priors;
    const fs::path model_path = out_dir / "model_fshmm.json";
    daa::write_json(mj, model_path);
    add_output(manifest, model_path);
    manifest["models"]["fshmm"] = daa::fnv1a_hex(mj.dump());

    json rj = report;
    rj["assets"] = loaded.panel.assets();
    rj["k_scale"] = k_scale;
    const fs::path report_path = out_dir / "saliency_report.json";
    daa::write_json(rj, report_path);
    add_output(manifest, report_path);
    std::cout << "fshmm fit: I=" << n_states << " k=" << priors.saliency_weight[0]
              << " selected=" << report.selected.size() << "/" << loaded.panel.cols() << '\n';
  } else {
    throw daa::ParameterError("--model must be hmm or fshmm");
  }
  daa::write_json(manifest, out_dir / "manifest.json");
  return kExitOk;
}

int cmd_select_features(const CommonArgs& args, const std::string& report_path,
                        double threshold) {
  if (!fs::exists(report_path))
    throw daa::ParameterError("report file does not exist: " + report_path);
  json rj = daa::read_json(report_path);
  daa::SaliencyReport report = rj.get<daa::SaliencyReport>();
  auto selected = daa::select_features(report, threshold);

  json out{{"threshold", threshold}, {"selected", selected}};
  if (rj.contains("assets")) {
    std::vector<std::string> names;
    auto assets = rj["assets"].get<std::vector<std::string>>();
    for (int idx : selected) names.push_back(assets.at(idx));
    out["selected_assets"] = names;
  }
  const fs::path out_dir = resolve_out_dir(args, json::object());
  fs::create_directories(out_dir);
  daa::write_json(out, out_dir / "selected.json");
  std::cout << "selected " << selected.size() << " of " << report.saliency.size()
            << " features at threshold " << threshold << '\n';
  return kExitOk;
}

int cmd_calibrate(const CommonArgs& args, const std::string& window_range) {
  json config = load_config(args);
  RunConfig rc = build_run_config(config, effective_seed(args, config));
  std::vector<int> candidates =
      window_range.empty() ? rc.candidate_windows : parse_window_range(window_range);
  if (candidates.empty()) throw daa::ParameterError("no candidate windows configured");

  auto cal = daa::calibrate_window(rc.train_panel, rc.alloc_panel, rc.daa, rc.splits,
                                   candidates);
  const fs::path out_dir = resolve_out_dir(args, config);
  fs::create_directories(out_dir);

  json cj{{"best_d", cal.best_d}, {"table", cal.table}};
  daa::write_json(cj, out_dir / "calibration.json");

  json manifest = manifest_skeleton("calibrate-window", config, rc.seed);
  manifest["chosen_d"] = cal.best_d;
  manifest["calibration_table"] = cal.table;
  add_output(manifest, out_dir / "calibration.json");
  daa::write_json(manifest, out_dir / "manifest.json");
  std::cout << "calibrated confirmation window: d=" << cal.best_d << '\n';
  return kExitOk;
}

int cmd_backtest(const CommonArgs& args, const std::string& strategy,
                 const std::string& window_range) {
  json config = load_config(args);
  RunConfig rc = build_run_config(config, effective_seed(args, config));
  const fs::path out_dir = resolve_out_dir(args, config);
  fs::create_directories(out_dir);
  json manifest = manifest_skeleton("backtest", config, rc.seed);

  if (!window_range.empty()) {
    auto cal = daa::calibrate_window(rc.train_panel, rc.alloc_panel, rc.daa, rc.splits,
                                     parse_window_range(window_range));
    rc.daa.confirm_window = cal.best_d;
    manifest["chosen_d"] = cal.best_d;
    manifest["calibration_table"] = cal.table;
  }
  manifest["confirm_window"] = rc.daa.confirm_window;

  std::optional<daa::HmmModel> pretrained;
  if (rc.model_file) {
    json mj = daa::read_json(*rc.model_file);
    pretrained = mj.get<daa::HmmModel>();
    manifest["models"]["model_file"] =
        json{{"path", *rc.model_file}, {"hash", daa::fnv1a_hex(mj.dump())}};
  }

  bool any_aborted = false;
  auto run_and_write = [&](const std::string& name, const daa::BacktestLedger& ledger) {
    write_strategy_outputs(name, ledger, out_dir, manifest);
    if (ledger.aborted) any_aborted = true;
  };

  if (strategy == "daa" || strategy == "all") {
    auto ledger = pretrained
                      ? daa::run_daa(rc.train_panel, rc.alloc_panel, rc.daa, rc.splits,
                                     *pretrained)
                      : daa::run_daa(rc.train_panel, rc.alloc_panel, rc.daa, rc.splits);
    run_and_write("daa", ledger);
  }
  if (strategy == "benchmark" || strategy == "all") {
    auto ledger = daa::run_benchmark(rc.alloc_panel, rc.daa.method, rc.daa.cost_rate,
                                     rc.splits, rc.daa.moment_span_start,
                                     rc.daa.max_return_cap);
    run_and_write("benchmark", ledger);
  }
  if (strategy == "fs-daa" || strategy == "all") {
    auto res = daa::run_fs_daa(rc.train_panel, rc.alloc_panel, rc.fs, rc.daa, rc.splits);
    run_and_write("fs_daa", res.ledger);
    json sj = res.saliency;
    sj["selected_assets"] = res.selected_names;
    daa::write_json(sj, out_dir / "saliency_report.json");
    add_output(manifest, out_dir / "saliency_report.json");
  }

  daa::write_json(manifest, out_dir / "manifest.json");
  if (any_aborted) {
    std::cerr << "backtest aborted mid-run; partial ledgers written\n";
    return kExitNumerical;
  }
  std::cout << "backtest complete: outputs in " << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_report(const CommonArgs& args, const std::string& ledger_path) {
  if (!fs::exists(ledger_path))
    throw daa::ParameterError("ledger file does not exist: " + ledger_path);
  std::ifstream in(ledger_path);
  if (!in) throw daa::IoError("cannot open " + ledger_path);
  std::string line;
  if (!std::getline(in, line)) throw daa::FormatError("empty ledger: " + ledger_path);
  auto header = daa::detail::split_csv_line(line);
  std::size_t net_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "net") net_col = i;
  if (net_col == header.size())
    throw daa::FormatError("ledger has no 'net' column: " + ledger_path);

  std::vector<double> net;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = daa::detail::split_csv_line(line);
    double v;
    if (cells.size() <= net_col || !daa::detail::parse_double(cells[net_col], v))
      throw daa::FormatError("bad ledger row in " + ledger_path);
    net.push_back(v);
  }
  auto report = daa::compute_report(net);

  const fs::path out_dir = resolve_out_dir(args, json::object());
  fs::create_directories(out_dir);
  const std::string label = fs::path(ledger_path).stem().string();
  json rj = report;
  rj["label"] = label;
  daa::write_json(rj, out_dir / "report.json");
  std::ofstream csv(out_dir / "report.csv");
  if (!csv) throw daa::IoError("cannot write report.csv");
  csv << daa::report_csv_header() << '\n' << daa::report_csv_row(label, report) << '\n';
  std::cout << "ir=" << report.ir << " sortino=" << report.sortino
            << " max_drawdown=" << report.max_drawdown << '\n';
  return kExitOk;
}

struct SweepRow {
  int combination = 0;
  std::string assets;
  std::string method;
  std::string variant;
  std::string status = "ok";
  daa::PerformanceReport report;
  double total_cost = 0.0;
  int n_rebalances = 0;
  bool has_report = false;
};

int cmd_sweep(const CommonArgs& args) {
  json config = load_config(args);
  RunConfig rc = build_run_config(config, effective_seed(args, config));
  if (!config.contains("sweep")) throw daa::ParameterError("config needs a 'sweep' section");
  const json& sw = config["sweep"];
  if (!sw.contains("families")) throw daa::ParameterError("sweep needs 'families'");

  // json objects iterate in sorted key order, so family order is stable
  std::vector<std::pair<std::string, std::vector<std::string>>> families;
  for (auto it = sw["families"].begin(); it != sw["families"].end(); ++it)
    families.emplace_back(it.key(), it.value().get<std::vector<std::string>>());
  if (families.empty()) throw daa::ParameterError("sweep families are empty");

  const int n_combinations = sw.value("n_combinations", 10);
  if (n_combinations < 1) throw daa::ParameterError("n_combinations must be >= 1");
  std::vector<std::string> methods =
      sw.value("methods", std::vector<std::string>{"sharpe"});
  std::vector<std::string> variants =
      sw.value("variants", std::vector<std::string>{"daa", "benchmark", "equal_weight"});
  const int workers = std::max(1, sw.value("workers", 2));

  // one asset per family per combination
  const auto combo_seeds = daa::spawn_seeds(rc.seed, n_combinations);
  std::vector<std::vector<std::string>> combos(n_combinations);
  for (int c = 0; c < n_combinations; ++c) {
    std::mt19937_64 rng(combo_seeds[c]);
    for (const auto& [name, members] : families) {
      if (members.empty()) throw daa::ParameterError("family " + name + " is empty");
      combos[c].push_back(members[rng() % members.size()]);
    }
  }

  std::vector<std::vector<SweepRow>> results(n_combinations);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next.fetch_add(1); c < n_combinations; c = next.fetch_add(1)) {
      std::string assets_label;
      for (const auto& a : combos[c]) {
        if (!assets_label.empty()) assets_label += '|';
        assets_label += a;
      }
      for (const auto& method_name : methods) {
        for (const auto& variant : variants) {
          SweepRow row;
          row.combination = c;
          row.assets = assets_label;
          row.method = method_name;
          row.variant = variant;
          try {
            daa::ReturnPanel panel = rc.train_panel.select_columns_by_name(combos[c]);
            daa::DaaConfig cfg = rc.daa;
            cfg.method = daa::portfolio_method_from_string(method_name);
            cfg.fit.seed = combo_seeds[c];
            cfg.fit.parallel = false;  // combinations already run in parallel
            daa::BacktestLedger ledger;
            if (variant == "daa") {
              ledger = daa::run_daa(panel, panel, cfg, rc.splits);
            } else if (variant == "benchmark") {
              ledger = daa::run_benchmark(panel, cfg.method, cfg.cost_rate, rc.splits,
                                          cfg.moment_span_start, cfg.max_return_cap);
            } else if (variant == "equal_weight") {
              ledger = daa::run_benchmark(panel, daa::PortfolioMethod::EqualWeight,
                                          cfg.cost_rate, rc.splits, cfg.moment_span_start);
            } else {
              throw daa::ParameterError("unknown variant: " + variant);
            }
            if (ledger.aborted) throw daa::NumericalError(ledger.error);
            row.report = daa::compute_report(ledger.net_returns());
            row.total_cost = ledger.total_cost();
            row.n_rebalances = static_cast<int>(ledger.rebalance_count());
            row.has_report = true;
          } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
          }
          results[c].push_back(std::move(row));
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  const fs::path out_dir = resolve_out_dir(args, config);
  fs::create_directories(out_dir);
  const fs::path csv_path = out_dir / "sweep.csv";
  std::ofstream out(csv_path);
  if (!out) throw daa::IoError("cannot write " + csv_path.string());
  out << "combination,assets,method,variant,ann_return,ann_vol,ir,skewness,excess_kurtosis,"
         "downside_risk,sortino,max_drawdown,drawdown_days,total_cost,n_rebalances,status\n";
  char buf[512];
  std::size_t n_rows = 0, n_failed = 0;
  for (const auto& combo_rows : results) {
    for (const auto& r : combo_rows) {
      if (r.has_report) {
        std::snprintf(buf, sizeof(buf),
                      "%d,%s,%s,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%ld,%.10g,"
                      "%d,%s",
                      r.combination, r.assets.c_str(), r.method.c_str(), r.variant.c_str(),
                      r.report.ann_return, r.report.ann_vol, r.report.ir, r.report.skewness,
                      r.report.excess_kurtosis, r.report.downside_risk, r.report.sortino,
                      r.report.max_drawdown, r.report.drawdown_days, r.total_cost,
                      r.n_rebalances, r.status.c_str());
      } else {
        std::snprintf(buf, sizeof(buf), "%d,%s,%s,%s,,,,,,,,,,,,\"%s\"", r.combination,
                      r.assets.c_str(), r.method.c_str(), r.variant.c_str(), r.status.c_str());
        ++n_failed;
      }
      out << buf << '\n';
      ++n_rows;
    }
  }
  out.close();

  json manifest = manifest_skeleton("sweep", config, rc.seed);
  add_output(manifest, csv_path);
  manifest["n_rows"] = n_rows;
  manifest["n_failed"] = n_failed;
  daa::write_json(manifest, out_dir / "manifest.json");
  std::cout << "sweep: " << n_rows << " rows (" << n_failed << " failed) -> "
            << csv_path.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"daa: regime-switching dynamic asset allocation toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  std::uint64_t seed_arg = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON configuration file");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", seed_arg, "seed override")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  auto* generate = app.add_subcommand("generate", "write a synthetic regime panel");
  add_common(generate);

  auto* fit = app.add_subcommand("fit", "fit an HMM or FSHMM to a panel");
  add_common(fit);
  std::string fit_panel, fit_model = "hmm", fit_date_column = "date";
  int fit_states = 2, fit_restarts = 10;
  double fit_k_scale = 0.25;
  fit->add_option("--panel", fit_panel, "panel CSV path");
  fit->add_option("--model", fit_model, "hmm | fshmm");
  fit->add_option("--states", fit_states, "number of hidden states");
  fit->add_option("--k-scale", fit_k_scale, "saliency prior weight as a fraction of T");
  fit->add_option("--restarts", fit_restarts, "EM restarts");
  fit->add_option("--date-column", fit_date_column, "date column name");

  auto* select = app.add_subcommand("select-features", "threshold a saliency report");
  add_common(select);
  std::string select_report;
  double select_threshold = 0.9;
  select->add_option("--report", select_report, "saliency report JSON")->required();
  select->add_option("--threshold", select_threshold, "selection threshold in (0,1)");

  auto* calibrate = app.add_subcommand("calibrate-window", "pick the confirmation window");
  add_common(calibrate);
  std::string calibrate_range;
  calibrate->add_option("--candidates", calibrate_range, "e.g. 1..30 or 1,5,15");

  auto* backtest = app.add_subcommand("backtest", "run DAA / benchmark / FS-DAA");
  add_common(backtest);
  std::string bt_strategy = "all", bt_window_range;
  backtest->add_option("--strategy", bt_strategy, "daa | benchmark | fs-daa | all");
  backtest->add_option("--calibrate-window", bt_window_range,
                       "calibrate d on the validation range first (e.g. 1..30)");

  auto* sweep = app.add_subcommand("sweep", "factor-combination sweep");
  add_common(sweep);

  auto* report = app.add_subcommand("report", "performance report from a ledger CSV");
  add_common(report);
  std::string report_ledger;
  report->add_option("--ledger", report_ledger, "ledger CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_set) common.seed = seed_arg;

  try {
    if (app.got_subcommand(generate)) return cmd_generate(common);
    if (app.got_subcommand(fit))
      return cmd_fit(common, fit_panel, fit_model, fit_states, fit_k_scale, fit_restarts,
                     fit_date_column);
    if (app.got_subcommand(select))
      return cmd_select_features(common, select_report, select_threshold);
    if (app.got_subcommand(calibrate)) return cmd_calibrate(common, calibrate_range);
    if (app.got_subcommand(backtest)) return cmd_backtest(common, bt_strategy, bt_window_range);
    if (app.got_subcommand(sweep)) return cmd_sweep(common);
    if (app.got_subcommand(report)) return cmd_report(common, report_ledger);
    return kExitConfig;
  } catch (const daa::PipelineError& e) {
    std::cerr << "pipeline error: " << e.what() << '\n';
    return kExitPipeline;
  } catch (const daa::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const daa::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const daa::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
