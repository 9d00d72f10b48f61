#pragma once

#include <charconv>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "daa/errors.hpp"

namespace daa {

// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
class Date {
public:
  Date() = default;
  Date(int year, int month, int day) : serial_(days_from_civil(year, month, day)) {
    int y, m, d;
    civil_from_days(serial_, y, m, d);
    if (y != year || m != month || d != day)
      throw FormatError("invalid calendar date: " + std::to_string(year) + "-" +
                        std::to_string(month) + "-" + std::to_string(day));
  }

  static Date from_serial(long serial) {
    Date out;
    out.serial_ = serial;
    return out;
  }

  // Parses strict ISO-8601 "YYYY-MM-DD".
  static Date parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
      throw FormatError("unparseable date: '" + std::string(s) + "' (expected YYYY-MM-DD)");
    auto to_int = [&](std::string_view part) {
      int v = 0;
      auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc() || ptr != part.data() + part.size())
        throw FormatError("unparseable date: '" + std::string(s) + "'");
      return v;
    };
    return Date(to_int(s.substr(0, 4)), to_int(s.substr(5, 2)), to_int(s.substr(8, 2)));
  }

  long serial() const { return serial_; }
  int year() const { return civil().y; }
  int month() const { return civil().m; }
  int day() const { return civil().d; }

  // year*12 + month; equal iff two dates share a calendar month.
  long month_key() const {
    auto c = civil();
    return static_cast<long>(c.y) * 12 + (c.m - 1);
  }

  // 0 = Monday ... 6 = Sunday.
  int weekday() const {
    long w = (serial_ + 3) % 7;  // 1970-01-01 was a Thursday
    return static_cast<int>(w < 0 ? w + 7 : w);
  }

  Date next_day() const { return from_serial(serial_ + 1); }

  Date next_weekday() const {
    Date d = next_day();
    while (d.weekday() >= 5) d = d.next_day();
    return d;
  }

  std::string to_string() const {
    auto c = civil();
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", c.y, c.m, c.d);
    return std::string(buf);
  }

  auto operator<=>(const Date&) const = default;

private:
  long serial_ = 0;

  struct Civil {
    int y, m, d;
  };

  Civil civil() const {
    int y, m, d;
    civil_from_days(serial_, y, m, d);
    return {y, m, d};
  }

  // Howard Hinnant's civil-days algorithms.
  static long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
  }

  static void civil_from_days(long z, int& y, int& m, int& d) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long yy = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
  }
};

}  // namespace daa
