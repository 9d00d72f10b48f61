#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "daa/date.hpp"
#include "daa/errors.hpp"

namespace daa {

// Dated T x L matrix of simple daily returns. Immutable after construction;
// dates are strictly increasing and every entry is finite.
class ReturnPanel {
public:
  ReturnPanel(std::vector<Date> dates, std::vector<std::string> assets, Eigen::MatrixXd values)
      : dates_(std::move(dates)), assets_(std::move(assets)), values_(std::move(values)) {
    if (dates_.empty() || assets_.empty())
      throw ShapeError("panel requires T >= 1 and L >= 1");
    if (values_.rows() != static_cast<Eigen::Index>(dates_.size()) ||
        values_.cols() != static_cast<Eigen::Index>(assets_.size()))
      throw ShapeError("panel value matrix does not match dates x assets");
    for (std::size_t t = 1; t < dates_.size(); ++t)
      if (!(dates_[t - 1] < dates_[t]))
        throw FormatError("panel dates must be strictly increasing (offender: " +
                          dates_[t].to_string() + ")");
    if (!values_.allFinite()) throw ParameterError("panel contains non-finite returns");
  }

  std::size_t rows() const { return dates_.size(); }
  std::size_t cols() const { return assets_.size(); }
  const std::vector<Date>& dates() const { return dates_; }
  const std::vector<std::string>& assets() const { return assets_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const Date& date(std::size_t t) const { return dates_[t]; }
  double value(std::size_t t, std::size_t l) const { return values_(t, l); }
  Eigen::RowVectorXd row(std::size_t t) const { return values_.row(t); }

  // Rows [first, last) as a new panel.
  ReturnPanel slice_rows(std::size_t first, std::size_t last) const {
    if (first >= last || last > rows()) throw ShapeError("invalid row slice");
    std::vector<Date> d(dates_.begin() + first, dates_.begin() + last);
    return ReturnPanel(std::move(d), assets_,
                       values_.middleRows(first, last - first));
  }

  ReturnPanel select_columns(const std::vector<int>& idx) const {
    if (idx.empty()) throw ShapeError("empty column selection");
    std::vector<std::string> names;
    Eigen::MatrixXd v(values_.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (idx[j] < 0 || idx[j] >= static_cast<int>(cols()))
        throw ShapeError("column index out of range: " + std::to_string(idx[j]));
      names.push_back(assets_[idx[j]]);
      v.col(static_cast<Eigen::Index>(j)) = values_.col(idx[j]);
    }
    return ReturnPanel(dates_, std::move(names), std::move(v));
  }

  ReturnPanel select_columns_by_name(const std::vector<std::string>& names) const {
    std::vector<int> idx;
    for (const auto& n : names) {
      auto it = std::find(assets_.begin(), assets_.end(), n);
      if (it == assets_.end()) throw ParameterError("unknown asset: " + n);
      idx.push_back(static_cast<int>(it - assets_.begin()));
    }
    return select_columns(idx);
  }

  // Index of the last row with date <= d, or npos when d precedes all rows.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t last_index_at_or_before(const Date& d) const {
    auto it = std::upper_bound(dates_.begin(), dates_.end(), d);
    if (it == dates_.begin()) return npos;
    return static_cast<std::size_t>(it - dates_.begin()) - 1;
  }

private:
  std::vector<Date> dates_;
  std::vector<std::string> assets_;
  Eigen::MatrixXd values_;
};

struct CsvLoadResult {
  ReturnPanel panel;
  std::size_t dropped_rows = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b != e && (*b == ' ' || *b == '\t')) ++b;
  while (e != b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  if (b == e) return false;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && std::isfinite(out);
}

}  // namespace detail

// Loads a header-first CSV with one date column; rows with any missing or
// unparseable numeric cell are dropped and counted. Rows come back sorted by
// date. Throws FormatError on bad dates/headers, InsufficientDataError when
// fewer than 2 usable rows remain.
inline CsvLoadResult load_csv(const std::filesystem::path& path,
                              const std::string& date_column = "date") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty file: " + path.string());
  auto header = detail::split_csv_line(line);
  std::size_t date_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == date_column) date_idx = i;
  if (date_idx == header.size())
    throw FormatError("date column '" + date_column + "' not found in " + path.string());
  if (header.size() < 2) throw FormatError("no asset columns in " + path.string());

  std::vector<std::string> assets;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (i != date_idx) assets.push_back(header[i]);

  struct Row {
    Date date;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw FormatError("row with " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()) + " in " + path.string());
    Row r;
    r.date = Date::parse(cells[date_idx]);
    bool ok = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == date_idx) continue;
      double v;
      if (!detail::parse_double(cells[i], v)) {
        ok = false;
        break;
      }
      r.values.push_back(v);
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(r));
  }
  if (rows.size() < 2)
    throw InsufficientDataError("fewer than 2 usable rows in " + path.string());

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.date < b.date; });
  for (std::size_t t = 1; t < rows.size(); ++t)
    if (rows[t - 1].date == rows[t].date)
      throw FormatError("duplicate date " + rows[t].date.to_string() + " in " + path.string());

  std::vector<Date> dates;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(assets.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    dates.push_back(rows[t].date);
    for (std::size_t l = 0; l < assets.size(); ++l) values(t, l) = rows[t].values[l];
  }
  return CsvLoadResult{ReturnPanel(std::move(dates), std::move(assets), std::move(values)),
                       dropped};
}

// Writes `date,<assets...>` with 17 significant digits so that reload is exact.
inline void save_csv(const ReturnPanel& panel, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "date";
  for (const auto& a : panel.assets()) out << ',' << a;
  out << '\n';
  char buf[64];
  for (std::size_t t = 0; t < panel.rows(); ++t) {
    out << panel.date(t).to_string();
    for (std::size_t l = 0; l < panel.cols(); ++l) {
      std::snprintf(buf, sizeof(buf), "%.17g", panel.value(t, l));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// Shifts returns forward by k dates: the row at date d carries the returns
// observed k dates earlier. The first k dates are dropped.
inline ReturnPanel lag_returns(const ReturnPanel& panel, std::size_t k) {
  if (k < 1) throw ParameterError("lag k must be >= 1");
  if (panel.rows() <= k)
    throw InsufficientDataError("panel too short to lag by " + std::to_string(k));
  std::vector<Date> dates(panel.dates().begin() + k, panel.dates().end());
  Eigen::MatrixXd values = panel.values().topRows(panel.rows() - k);
  return ReturnPanel(std::move(dates), panel.assets(), std::move(values));
}

// Grow-only view [anchor_start, cursor] over a panel's rows.
class ExpandingWindow {
public:
  ExpandingWindow(const ReturnPanel& panel, Date anchor_start, Date cursor)
      : panel_(&panel), anchor_(anchor_start), cursor_(cursor) {
    if (cursor < anchor_) throw ParameterError("window cursor precedes anchor");
    recompute();
  }

  void advance_to(Date cursor) {
    if (cursor < cursor_) throw ParameterError("expanding window cannot move backwards");
    cursor_ = cursor;
    recompute();
  }

  Date anchor() const { return anchor_; }
  Date cursor() const { return cursor_; }
  std::size_t first_index() const { return first_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  ReturnPanel to_panel() const {
    if (empty()) throw InsufficientDataError("empty expanding window");
    return panel_->slice_rows(first_, first_ + count_);
  }

private:
  void recompute() {
    const auto& d = panel_->dates();
    auto lo = std::lower_bound(d.begin(), d.end(), anchor_);
    auto hi = std::upper_bound(d.begin(), d.end(), cursor_);
    first_ = static_cast<std::size_t>(lo - d.begin());
    count_ = hi > lo ? static_cast<std::size_t>(hi - lo) : 0;
  }

  const ReturnPanel* panel_;
  Date anchor_;
  Date cursor_;
  std::size_t first_ = 0;
  std::size_t count_ = 0;
};

}  // namespace daa
