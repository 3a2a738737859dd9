#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "enskit/common.hpp"

// Civil-calendar arithmetic on Unix epoch seconds (UTC, no time zones) and
// ISO-8601 parsing/formatting for the CSV interfaces.

namespace enskit::time_util {

constexpr std::int64_t kSecondsPerDay = 86400;

// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
// civil-days algorithm).
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  int year;
  int month;
  int day;
};

inline CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

inline std::int64_t day_stamp(std::int64_t t) {
  std::int64_t d = t / kSecondsPerDay;
  if (t < 0 && t % kSecondsPerDay != 0) --d;
  return d * kSecondsPerDay;
}

inline int hour_of_day(std::int64_t t) {
  return static_cast<int>((t - day_stamp(t)) / 3600);
}

// 0 = Sunday .. 6 = Saturday.
inline int weekday(std::int64_t t) {
  const std::int64_t days = day_stamp(t) / kSecondsPerDay;
  return static_cast<int>(((days % 7) + 11) % 7);
}

inline bool is_weekend(std::int64_t t) {
  const int w = weekday(t);
  return w == 0 || w == 6;
}

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS" and the space-separated
// variant, with an optional trailing "Z".
inline std::int64_t parse_iso8601(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char sep = 0;
  int fields = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &se);
  if (fields != 3 && fields != 7)
    throw input_error("timestamp not ISO-8601: '" + s + "'");
  if (fields == 7 && sep != 'T' && sep != ' ')
    throw input_error("timestamp not ISO-8601: '" + s + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 ||
      se > 60)
    throw input_error("timestamp out of range: '" + s + "'");
  return days_from_civil(y, mo, d) * kSecondsPerDay + h * 3600 + mi * 60 + se;
}

inline std::string format_iso8601(std::int64_t t) {
  const std::int64_t ds = day_stamp(t);
  const CivilDate cd = civil_from_days(ds / kSecondsPerDay);
  const std::int64_t rem = t - ds;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", cd.year, cd.month, cd.day,
                static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                static_cast<int>(rem % 60));
  return buf;
}

inline std::string format_date(std::int64_t t) {
  const CivilDate cd = civil_from_days(day_stamp(t) / kSecondsPerDay);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", cd.year, cd.month, cd.day);
  return buf;
}

}  // namespace enskit::time_util
