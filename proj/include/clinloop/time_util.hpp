#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace clinloop {

// Seconds since the Unix epoch, UTC. All simulation time is carried in this
// form; calendar math below is only for formatting, cron matching and
// year-based splits.
using Timestamp = std::int64_t;
using Duration = std::int64_t;

constexpr Duration kSecond = 1;
constexpr Duration kMinute = 60;
constexpr Duration kHour = 3600;
constexpr Duration kDay = 86400;

constexpr Duration hours(std::int64_t n) { return n * kHour; }
constexpr Duration days(std::int64_t n) { return n * kDay; }

struct CivilTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  int second = 0;
};

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
std::int64_t days_from_civil(int year, int month, int day);
void civil_from_days(std::int64_t z, int& year, int& month, int& day);

int days_in_month(int year, int month);

Timestamp timestamp_from_civil(const CivilTime& c);
CivilTime civil_from_timestamp(Timestamp t);

// 0 = Sunday .. 6 = Saturday.
int weekday_from_timestamp(Timestamp t);

int year_of(Timestamp t);

// "2021-07-04T12:30:00Z". Seconds resolution, UTC only.
std::string format_rfc3339(Timestamp t);
Timestamp parse_rfc3339(std::string_view s);  // throws ValidationError

// "2021-07-04" (midnight UTC).
std::string format_date(Timestamp t);
Timestamp parse_date(std::string_view s);  // throws ValidationError

double age_years(Timestamp birth, Timestamp at);

}  // namespace clinloop
