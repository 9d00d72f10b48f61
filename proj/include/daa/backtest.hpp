#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "daa/fshmm.hpp"
#include "daa/ghmm.hpp"
#include "daa/metrics.hpp"
#include "daa/panel.hpp"
#include "daa/portfolio.hpp"

namespace daa {

// ===========================================================================
// Dynamic asset allocation engine: daily state prediction on lagged returns,
// d-day regime confirmation, regime-conditional rebalancing with transaction
// costs, and monthly expanding-window retraining.
// ===========================================================================

struct DateSplits {
  Date train_end;
  Date validation_end;
  Date test_end;

  void validate() const {
    if (!(train_end < validation_end && validation_end < test_end))
      throw ParameterError("date splits must satisfy train_end < validation_end < test_end");
  }
};

struct DaaConfig {
  int n_states = 2;
  int confirm_window = 5;    // d consecutive days in the new state
  double cost_rate = 0.005;  // charge per unit of L1 turnover (both legs counted)
  PortfolioMethod method = PortfolioMethod::Sharpe;
  double max_return_cap = 0.8;
  FitConfig fit;
  std::optional<Date> moment_span_start;  // default: entire available history
  // Asset name subsets used by callers that slice a wider panel; the engine
  // itself always consumes the panels it is handed.
  std::vector<std::string> train_assets;
  std::vector<std::string> alloc_assets;

  void validate() const {
    if (n_states < 1) throw ParameterError("n_states must be >= 1");
    if (confirm_window < 1) throw ParameterError("confirm_window must be >= 1");
    if (cost_rate < 0) throw ParameterError("cost_rate must be >= 0");
  }
};

struct LedgerRow {
  Date date;
  int predicted_state = -1;  // -1 for strategies without a regime model
  int confirmed_state = -1;
  Eigen::VectorXd weights_before;  // drifted weights prior to any trade
  Eigen::VectorXd weights_after;
  double gross_return = 0.0;
  double turnover = 0.0;
  double cost = 0.0;
  double net_return = 0.0;  // always gross_return - cost
  double cumulative_net = 0.0;
  bool rebalanced = false;
};

struct RebalanceEvent {
  Date date;
  int from_state = -1;
  int to_state = -1;
  double turnover = 0.0;
  double cost = 0.0;
  std::string reason;  // "inception", "regime_change", "monthly"
};

struct BacktestLedger {
  std::vector<LedgerRow> rows;
  std::vector<RebalanceEvent> events;
  std::vector<std::string> notes;
  bool aborted = false;
  std::string error;

  std::vector<double> net_returns() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.net_return);
    return out;
  }
  double total_cost() const {
    double c = 0.0;
    for (const auto& r : rows) c += r.cost;
    return c;
  }
  std::size_t rebalance_count() const { return events.size(); }
};

// Per-state allocation moments; states short of observations fall back to the
// unconditional moments (and the fallback is logged by the engine).
struct RegimeMomentTable {
  std::vector<RegimeMoments> by_state;
  std::vector<bool> fallback;
};

// Last element of the decoded state path: the day-ahead regime prediction.
inline int predict_state_daily(const HmmModel& model, const ReturnPanel& history) {
  return viterbi_decode(model, history).back();
}

// Emits the new regime exactly when the most recent d predictions agree on a
// state different from the current regime.
inline std::optional<int> confirm_regime_change(const std::vector<int>& predictions,
                                                int current_regime, int d) {
  if (d < 1) throw ParameterError("confirmation window d must be >= 1");
  if (static_cast<int>(predictions.size()) < d) return std::nullopt;
  const int candidate = predictions.back();
  if (candidate == current_regime) return std::nullopt;
  for (int k = 1; k < d; ++k)
    if (predictions[predictions.size() - 1 - k] != candidate) return std::nullopt;
  return candidate;
}

namespace detail {

// Forward max-product recursion maintained day by day; its last state equals
// the tail of a full Viterbi decode over the same window.
class IncrementalViterbi {
public:
  void reset(const HmmModel& model, const Eigen::MatrixXd& window) {
    log_a_ = safe_log(model.transition);
    emitters_.clear();
    for (int i = 0; i < model.n_states(); ++i)
      emitters_.emplace_back(model.means.row(i).transpose(), model.covariances[i]);
    scores_ = safe_log(model.initial);
    for (int i = 0; i < model.n_states(); ++i)
      scores_[i] += emitters_[i].log_pdf(window.row(0).transpose());
    for (Eigen::Index t = 1; t < window.rows(); ++t) extend(window.row(t));
  }

  void extend(const Eigen::RowVectorXd& y) {
    const int K = static_cast<int>(scores_.size());
    Eigen::VectorXd next(K);
    for (int j = 0; j < K; ++j) {
      double best = scores_[0] + log_a_(0, j);
      for (int i = 1; i < K; ++i) best = std::max(best, scores_[i] + log_a_(i, j));
      next[j] = best + emitters_[j].log_pdf(y.transpose());
    }
    scores_ = std::move(next);
  }

  int last_state() const {
    int best = 0;
    for (int i = 1; i < scores_.size(); ++i)
      if (scores_[i] > scores_[best]) best = i;
    return best;
  }

private:
  Eigen::MatrixXd log_a_;
  Eigen::VectorXd scores_;
  std::vector<MvNormal> emitters_;
};

inline void check_aligned(const ReturnPanel& a, const ReturnPanel& b) {
  if (a.rows() != b.rows()) throw ShapeError("panels must cover the same dates");
  for (std::size_t t = 0; t < a.rows(); ++t)
    if (a.date(t) != b.date(t)) throw ShapeError("panels must cover the same dates");
}

// Moments per state over original-day indices [span_start, n) labelled by the
// decoded path. Falls back to unconditional moments when a state has fewer
// than L + 2 assigned days.
inline RegimeMomentTable estimate_regime_moments(const Eigen::MatrixXd& alloc_values,
                                                 const std::vector<int>& labels, int n_states,
                                                 std::size_t span_start, Date when,
                                                 std::vector<std::string>* notes) {
  const std::size_t n = labels.size();
  const Eigen::Index L = alloc_values.cols();
  if (span_start >= n) throw InsufficientDataError("empty moment estimation span");

  auto moments_of = [&](const std::vector<std::size_t>& idx) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(L);
    for (auto p : idx) mean += alloc_values.row(p).transpose();
    mean /= static_cast<double>(idx.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(L, L);
    for (auto p : idx) {
      Eigen::VectorXd d = alloc_values.row(p).transpose() - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(idx.size() - 1);
    return RegimeMoments{std::move(mean), std::move(cov)};
  };

  std::vector<std::size_t> all;
  for (std::size_t p = span_start; p < n; ++p) all.push_back(p);
  if (all.size() < static_cast<std::size_t>(L) + 2)
    throw InsufficientDataError("not enough observations to estimate allocation moments");
  RegimeMoments unconditional = moments_of(all);

  RegimeMomentTable table;
  for (int i = 0; i < n_states; ++i) {
    std::vector<std::size_t> idx;
    for (std::size_t p = span_start; p < n; ++p)
      if (labels[p] == i) idx.push_back(p);
    if (idx.size() < static_cast<std::size_t>(L) + 2) {
      table.by_state.push_back(unconditional);
      table.fallback.push_back(true);
      if (notes)
        notes->push_back("moment fallback to unconditional for state " + std::to_string(i) +
                         " at " + when.to_string() + " (" + std::to_string(idx.size()) +
                         " assigned days)");
    } else {
      table.by_state.push_back(moments_of(idx));
      table.fallback.push_back(false);
    }
  }
  return table;
}

struct StreamDay {
  Date date;
  std::size_t panel_index = 0;  // row in the aligned original panels
  int predicted_state = 0;
  int epoch = 0;  // moment-table index in effect
};

struct PredictionStream {
  std::vector<StreamDay> days;
  std::vector<RegimeMomentTable> tables;
  int n_states = 0;
  std::vector<std::string> notes;
  HmmModel initial_model;
  HmmModel final_model;
  FitReport initial_fit;
  bool aborted = false;
  std::string error;
};

// Model/prediction phase of the DAA loop. Trading decisions do not feed back
// into the model, so one stream can be re-traded under many configurations
// (confirmation windows, portfolio methods, cost rates).
inline PredictionStream build_prediction_stream(const ReturnPanel& panel_train,
                                                const ReturnPanel& panel_alloc,
                                                const DaaConfig& cfg, const DateSplits& splits,
                                                Date ledger_end,
                                                const HmmModel* pretrained = nullptr) {
  cfg.validate();
  splits.validate();
  check_aligned(panel_train, panel_alloc);
  const std::size_t train_end_idx = panel_alloc.last_index_at_or_before(splits.train_end);
  if (train_end_idx == ReturnPanel::npos || train_end_idx < 2)
    throw InsufficientDataError("training period is empty");
  const std::size_t end_idx = panel_alloc.last_index_at_or_before(ledger_end);
  if (end_idx == ReturnPanel::npos || end_idx <= train_end_idx)
    throw InsufficientDataError("no ledger days after train_end");

  ReturnPanel lagged = lag_returns(panel_train, 1);
  // lagged row j carries the return of original day j, dated at day j+1
  const std::size_t first = train_end_idx + 1;

  PredictionStream stream;
  stream.n_states = cfg.n_states;
  HmmModel model;
  if (pretrained) {
    if (pretrained->n_states() != cfg.n_states)
      throw ShapeError("pretrained model state count does not match config");
    check_dims(*pretrained, lagged);
    model = *pretrained;
    stream.initial_fit.log_likelihood =
        log_likelihood(model, lagged.slice_rows(0, train_end_idx));
  } else {
    auto [fitted, fit_report] =
        fit_baum_welch(lagged.slice_rows(0, train_end_idx), cfg.n_states, cfg.fit);
    model = std::move(fitted);
    stream.initial_fit = fit_report;
  }
  stream.initial_model = model;

  std::size_t span_start = 0;
  if (cfg.moment_span_start) {
    auto lo = std::lower_bound(panel_alloc.dates().begin(), panel_alloc.dates().end(),
                               *cfg.moment_span_start);
    span_start = static_cast<std::size_t>(lo - panel_alloc.dates().begin());
  }

  IncrementalViterbi scorer;
  long prev_month = 0;
  int epoch = -1;
  for (std::size_t tau = first; tau <= end_idx; ++tau) {
    const Date today = panel_alloc.date(tau);
    const bool inception = tau == first;
    const bool boundary = !inception && today.month_key() != prev_month;
    prev_month = today.month_key();

    if (inception || boundary) {
      ReturnPanel window = lagged.slice_rows(0, tau);
      if (boundary) {
        FitConfig warm = cfg.fit;
        warm.n_restarts = 1;
        try {
          auto [refit, report] = fit_baum_welch_from(window, model, warm);
          model = std::move(refit);
        } catch (const Error& e) {
          stream.aborted = true;
          stream.error = "refit failed at " + today.to_string() + ": " + e.what();
          break;
        }
      }
      std::vector<int> labels = viterbi_decode(model, window);
      stream.tables.push_back(estimate_regime_moments(
          panel_alloc.values(), labels, cfg.n_states, span_start, today, &stream.notes));
      ++epoch;
      scorer.reset(model, lagged.values().topRows(tau));
    } else {
      scorer.extend(lagged.values().row(tau - 1));
    }

    StreamDay day;
    day.date = today;
    day.panel_index = tau;
    day.predicted_state = scorer.last_state();
    day.epoch = epoch;
    stream.days.push_back(day);
  }
  stream.final_model = std::move(model);
  return stream;
}

// One day of accounting: optionally trade to `target` at the open, then
// accrue the day's return and drift the weights.
inline LedgerRow settle_day(Date date, const Eigen::RowVectorXd& asset_returns,
                            const std::optional<Eigen::VectorXd>& target, double cost_rate,
                            Eigen::VectorXd& weights, double& cumulative) {
  LedgerRow row;
  row.date = date;
  row.weights_before = weights;
  if (target) {
    row.turnover = (*target - weights).cwiseAbs().sum();
    row.cost = cost_rate * row.turnover;
    weights = *target;
    row.rebalanced = true;
  }
  row.weights_after = weights;
  row.gross_return = weights.dot(asset_returns.transpose());
  row.net_return = row.gross_return - row.cost;
  cumulative = (1.0 + cumulative) * (1.0 + row.net_return) - 1.0;
  row.cumulative_net = cumulative;

  const double growth = 1.0 + row.gross_return;
  if (growth <= 1e-9) throw NumericalError("portfolio wealth wiped out at " + date.to_string());
  weights = weights.cwiseProduct((1.0 + asset_returns.transpose().array()).matrix()) / growth;
  return row;
}

// Trading phase: confirmation windows, regime-conditional rebalances, costs.
inline BacktestLedger trade_stream(const PredictionStream& stream,
                                   const ReturnPanel& panel_alloc, const DaaConfig& cfg) {
  BacktestLedger ledger;
  ledger.notes = stream.notes;
  ledger.aborted = stream.aborted;
  ledger.error = stream.error;
  if (stream.days.empty()) return ledger;

  const Eigen::Index L = static_cast<Eigen::Index>(panel_alloc.cols());
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(L);
  double cumulative = 0.0;
  int current_regime = stream.days.front().predicted_state;
  std::vector<int> predictions;

  for (std::size_t k = 0; k < stream.days.size(); ++k) {
    const auto& day = stream.days[k];
    predictions.push_back(day.predicted_state);

    std::optional<Eigen::VectorXd> target;
    std::string reason;
    int from_state = current_regime;
    if (k == 0) {
      target = build_portfolio(stream.tables[day.epoch].by_state[current_regime], cfg.method,
                               cfg.max_return_cap)
                   .w;
      reason = "inception";
    } else if (auto change = confirm_regime_change(predictions, current_regime,
                                                   cfg.confirm_window)) {
      current_regime = *change;
      target = build_portfolio(stream.tables[day.epoch].by_state[current_regime], cfg.method,
                               cfg.max_return_cap)
                   .w;
      reason = "regime_change";
    }

    LedgerRow row = settle_day(day.date, panel_alloc.row(day.panel_index), target,
                               cfg.cost_rate, weights, cumulative);
    row.predicted_state = day.predicted_state;
    row.confirmed_state = current_regime;
    if (target)
      ledger.events.push_back(
          {day.date, from_state, current_regime, row.turnover, row.cost, reason});
    ledger.rows.push_back(std::move(row));
  }
  return ledger;
}

}  // namespace detail

// Full DAA run over validation + test days: daily prediction on the expanding
// lagged window, d-day confirmation, regime-conditional rebalancing, monthly
// warm-started retraining.
inline BacktestLedger run_daa(const ReturnPanel& panel_train, const ReturnPanel& panel_alloc,
                              const DaaConfig& cfg, const DateSplits& splits) {
  auto stream =
      detail::build_prediction_stream(panel_train, panel_alloc, cfg, splits, splits.test_end);
  return detail::trade_stream(stream, panel_alloc, cfg);
}

// Variant consuming a previously fitted model (e.g. loaded from disk); the
// monthly retrains still run, warm-started from it.
inline BacktestLedger run_daa(const ReturnPanel& panel_train, const ReturnPanel& panel_alloc,
                              const DaaConfig& cfg, const DateSplits& splits,
                              const HmmModel& pretrained) {
  auto stream = detail::build_prediction_stream(panel_train, panel_alloc, cfg, splits,
                                                splits.test_end, &pretrained);
  return detail::trade_stream(stream, panel_alloc, cfg);
}

// Single-regime counterpart: monthly rebalance to the portfolio built from
// unconditional expanding-window moments, identical cost accounting.
inline BacktestLedger run_benchmark(const ReturnPanel& panel_alloc, PortfolioMethod method,
                                    double cost_rate, const DateSplits& splits,
                                    std::optional<Date> moment_span_start = std::nullopt,
                                    double max_return_cap = 0.8) {
  splits.validate();
  if (cost_rate < 0) throw ParameterError("cost_rate must be >= 0");
  const std::size_t train_end_idx = panel_alloc.last_index_at_or_before(splits.train_end);
  if (train_end_idx == ReturnPanel::npos || train_end_idx < 2)
    throw InsufficientDataError("training period is empty");
  const std::size_t end_idx = panel_alloc.last_index_at_or_before(splits.test_end);
  if (end_idx == ReturnPanel::npos || end_idx <= train_end_idx)
    throw InsufficientDataError("no ledger days after train_end");

  std::size_t span_start = 0;
  if (moment_span_start) {
    auto lo = std::lower_bound(panel_alloc.dates().begin(), panel_alloc.dates().end(),
                               *moment_span_start);
    span_start = static_cast<std::size_t>(lo - panel_alloc.dates().begin());
  }

  BacktestLedger ledger;
  const Eigen::Index L = static_cast<Eigen::Index>(panel_alloc.cols());
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(L);
  double cumulative = 0.0;
  long prev_month = 0;

  for (std::size_t tau = train_end_idx + 1; tau <= end_idx; ++tau) {
    const Date today = panel_alloc.date(tau);
    const bool inception = tau == train_end_idx + 1;
    const bool boundary = !inception && today.month_key() != prev_month;
    prev_month = today.month_key();

    std::optional<Eigen::VectorXd> target;
    if (inception || boundary) {
      std::vector<int> labels(tau, 0);  // unconditional: single pseudo-state
      auto table = detail::estimate_regime_moments(panel_alloc.values(), labels, 1, span_start,
                                                   today, &ledger.notes);
      target = build_portfolio(table.by_state[0], method, max_return_cap).w;
    }
    LedgerRow row = detail::settle_day(today, panel_alloc.row(tau), target, cost_rate, weights,
                                       cumulative);
    if (target)
      ledger.events.push_back(
          {today, -1, -1, row.turnover, row.cost, inception ? "inception" : "monthly"});
    ledger.rows.push_back(std::move(row));
  }
  return ledger;
}

struct WindowCalibrationRow {
  int d = 0;
  double net_ir = 0.0;
  double total_cost = 0.0;
  int n_rebalances = 0;
};

struct WindowCalibration {
  int best_d = 0;
  std::vector<WindowCalibrationRow> table;
};

// Scores each candidate confirmation window by net IR over the validation
// range; the model/prediction phase is shared across candidates. Ties go to
// the smaller window.
inline WindowCalibration calibrate_window(const ReturnPanel& panel_train,
                                          const ReturnPanel& panel_alloc, const DaaConfig& cfg,
                                          const DateSplits& splits,
                                          const std::vector<int>& candidates) {
  if (candidates.empty()) throw ParameterError("no candidate windows");
  auto stream = detail::build_prediction_stream(panel_train, panel_alloc, cfg, splits,
                                                splits.validation_end);
  if (stream.aborted) throw NumericalError(stream.error);

  std::vector<int> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  WindowCalibration out;
  double best_ir = -std::numeric_limits<double>::infinity();
  for (int d : sorted) {
    DaaConfig c = cfg;
    c.confirm_window = d;
    BacktestLedger ledger = detail::trade_stream(stream, panel_alloc, c);
    WindowCalibrationRow row;
    row.d = d;
    row.total_cost = ledger.total_cost();
    row.n_rebalances = static_cast<int>(ledger.rebalance_count());
    row.net_ir = compute_report(ledger.net_returns()).ir;
    out.table.push_back(row);
    if (row.net_ir > best_ir) {
      best_ir = row.net_ir;
      out.best_d = d;
    }
  }
  return out;
}

struct FsDaaConfig {
  double k_scale = 0.25;    // saliency prior weight as a fraction of T
  double threshold = 0.9;   // selection cutoff on rho_l
  FshmmConfig fshmm;
};

struct FsDaaResult {
  BacktestLedger ledger;
  SaliencyReport saliency;
  std::vector<int> selected;
  std::vector<std::string> selected_names;
};

// FS-DAA pipeline: FSHMM saliency fit on the training window, threshold
// selection (frozen thereafter), then the standard DAA loop on the selected
// training features with a full-covariance HMM.
inline FsDaaResult run_fs_daa(const ReturnPanel& panel_train, const ReturnPanel& panel_alloc,
                              const FsDaaConfig& fs_cfg, const DaaConfig& daa_cfg,
                              const DateSplits& splits) {
  daa_cfg.validate();
  splits.validate();
  detail::check_aligned(panel_train, panel_alloc);
  const std::size_t train_end_idx = panel_train.last_index_at_or_before(splits.train_end);
  if (train_end_idx == ReturnPanel::npos || train_end_idx < 8)
    throw InsufficientDataError("training period too short for feature selection");

  ReturnPanel lagged = lag_returns(panel_train, 1);
  ReturnPanel window = lagged.slice_rows(0, train_end_idx);

  FshmmConfig fit_cfg = fs_cfg.fshmm;
  fit_cfg.selection_threshold = fs_cfg.threshold;
  auto priors = default_priors(window, daa_cfg.n_states, fs_cfg.k_scale);
  auto [model, report] = fit_fshmm_map(window, daa_cfg.n_states, priors, fit_cfg);

  FsDaaResult result;
  result.saliency = report;
  result.selected = report.selected;
  if (result.selected.empty()) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "feature selection is empty: threshold=%.3f, max saliency=%.4f",
                  fs_cfg.threshold, report.saliency.maxCoeff());
    throw PipelineError(buf);
  }
  for (int idx : result.selected) result.selected_names.push_back(panel_train.assets()[idx]);

  ReturnPanel train_selected = panel_train.select_columns(result.selected);
  result.ledger = run_daa(train_selected, panel_alloc, daa_cfg, splits);
  return result;
}

// Ledger CSV: one row per day, full precision.
inline void export_ledger_csv(const BacktestLedger& ledger, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "date,predicted_state,confirmed_state,gross,cost,net,cumulative,turnover\n";
  char buf[256];
  for (const auto& r : ledger.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g",
                  r.date.to_string().c_str(), r.predicted_state, r.confirmed_state,
                  r.gross_return, r.cost, r.net_return, r.cumulative_net, r.turnover);
    out << buf << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace daa
