#include "clinloop/time_util.hpp"

#include <cstdio>

#include "clinloop/errors.hpp"
#include "clinloop/numfmt.hpp"

namespace clinloop {

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& year, int& month, int& day) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  year = static_cast<int>(y + (month <= 2));
}

int days_in_month(int year, int month) {
  static const int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2) {
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[month - 1];
}

Timestamp timestamp_from_civil(const CivilTime& c) {
  return days_from_civil(c.year, c.month, c.day) * kDay + c.hour * kHour +
         c.minute * kMinute + c.second;
}

CivilTime civil_from_timestamp(Timestamp t) {
  std::int64_t z = t / kDay;
  std::int64_t rem = t % kDay;
  if (rem < 0) {
    rem += kDay;
    z -= 1;
  }
  CivilTime c;
  civil_from_days(z, c.year, c.month, c.day);
  c.hour = static_cast<int>(rem / kHour);
  c.minute = static_cast<int>((rem % kHour) / kMinute);
  c.second = static_cast<int>(rem % kMinute);
  return c;
}

int weekday_from_timestamp(Timestamp t) {
  std::int64_t z = t / kDay;
  if (t % kDay < 0) z -= 1;
  // 1970-01-01 was a Thursday (weekday 4).
  std::int64_t w = (z + 4) % 7;
  if (w < 0) w += 7;
  return static_cast<int>(w);
}

int year_of(Timestamp t) { return civil_from_timestamp(t).year; }

std::string format_rfc3339(Timestamp t) {
  const CivilTime c = civil_from_timestamp(t);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", c.year,
                c.month, c.day, c.hour, c.minute, c.second);
  return buf;
}

std::string format_date(Timestamp t) {
  const CivilTime c = civil_from_timestamp(t);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", c.year, c.month, c.day);
  return buf;
}

namespace {

int parse_digits(std::string_view s, size_t pos, size_t len) {
  int v = 0;
  for (size_t i = pos; i < pos + len; ++i) {
    if (i >= s.size() || s[i] < '0' || s[i] > '9') {
      throw ValidationError("bad timestamp: '" + std::string(s) + "'");
    }
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

}  // namespace

Timestamp parse_rfc3339(std::string_view s) {
  // YYYY-MM-DDTHH:MM:SSZ
  if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' ||
      s[13] != ':' || s[16] != ':' || s[19] != 'Z') {
    throw ValidationError("bad timestamp: '" + std::string(s) + "'");
  }
  CivilTime c;
  c.year = parse_digits(s, 0, 4);
  c.month = parse_digits(s, 5, 2);
  c.day = parse_digits(s, 8, 2);
  c.hour = parse_digits(s, 11, 2);
  c.minute = parse_digits(s, 14, 2);
  c.second = parse_digits(s, 17, 2);
  if (c.month < 1 || c.month > 12 || c.day < 1 ||
      c.day > days_in_month(c.year, c.month) || c.hour > 23 || c.minute > 59 ||
      c.second > 59) {
    throw ValidationError("bad timestamp: '" + std::string(s) + "'");
  }
  return timestamp_from_civil(c);
}

Timestamp parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
    throw ValidationError("bad date: '" + std::string(s) + "'");
  }
  CivilTime c;
  c.year = parse_digits(s, 0, 4);
  c.month = parse_digits(s, 5, 2);
  c.day = parse_digits(s, 8, 2);
  if (c.month < 1 || c.month > 12 || c.day < 1 ||
      c.day > days_in_month(c.year, c.month)) {
    throw ValidationError("bad date: '" + std::string(s) + "'");
  }
  return timestamp_from_civil(c);
}

double age_years(Timestamp birth, Timestamp at) {
  return static_cast<double>(at - birth) / (365.25 * kDay);
}

}  // namespace clinloop
