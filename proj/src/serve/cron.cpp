#include "clinloop/serve/cron.hpp"

#include <vector>

#include "clinloop/errors.hpp"

namespace clinloop::serve {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

int parse_field_number(const std::string& s, const std::string& expr) {
  if (s.empty() || s.size() > 2) {
    throw ValidationError("cron: bad number '" + s + "' in '" + expr + "'");
  }
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') {
      throw ValidationError("cron: bad number '" + s + "' in '" + expr + "'");
    }
    v = v * 10 + (c - '0');
  }
  return v;
}

// One field: comma-separated elements of *, */step, N, N-M, N-M/step.
template <std::size_t Bits>
void parse_field(const std::string& field, int lo, int hi,
                 std::bitset<Bits>& out, bool& is_star,
                 const std::string& expr) {
  is_star = (field == "*");
  for (const std::string& elem : split(field, ',')) {
    if (elem.empty()) {
      throw ValidationError("cron: empty element in '" + expr + "'");
    }
    std::string range = elem;
    int step = 1;
    const auto slash = elem.find('/');
    if (slash != std::string::npos) {
      range = elem.substr(0, slash);
      step = parse_field_number(elem.substr(slash + 1), expr);
      if (step < 1) throw ValidationError("cron: zero step in '" + expr + "'");
    }
    int from = lo;
    int to = hi;
    if (range != "*") {
      const auto dash = range.find('-');
      if (dash == std::string::npos) {
        from = to = parse_field_number(range, expr);
        if (slash != std::string::npos) to = hi;  // "N/step" extends to max
      } else {
        from = parse_field_number(range.substr(0, dash), expr);
        to = parse_field_number(range.substr(dash + 1), expr);
      }
    }
    if (from < lo || to > hi || from > to) {
      throw ValidationError("cron: field value out of range in '" + expr + "'");
    }
    for (int v = from; v <= to; v += step) out.set(v);
  }
  if (out.none()) {
    throw ValidationError("cron: empty field set in '" + expr + "'");
  }
}

}  // namespace

CronExpr CronExpr::parse(const std::string& expr) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : expr) {
    if (c == ' ' || c == '\t') {
      if (!cur.empty()) fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) fields.push_back(std::move(cur));
  if (fields.size() != 5) {
    throw ValidationError("cron: expected 5 fields, got " +
                          std::to_string(fields.size()) + " in '" + expr + "'");
  }

  CronExpr c;
  c.text_ = expr;
  bool ignored;
  parse_field(fields[0], 0, 59, c.minutes_, ignored, expr);
  parse_field(fields[1], 0, 23, c.hours_, ignored, expr);
  parse_field(fields[2], 1, 31, c.dom_, c.dom_star_, expr);
  parse_field(fields[3], 1, 12, c.months_, ignored, expr);
  parse_field(fields[4], 0, 6, c.dow_, c.dow_star_, expr);

  // Reject combinations that can never fire (e.g. day 31 in a 30-day-only
  // month set) unless the weekday alternative rescues them.
  if (c.dow_star_) {
    bool satisfiable = false;
    for (int m = 1; m <= 12 && !satisfiable; ++m) {
      if (!c.months_.test(m)) continue;
      const int max_d = (m == 2) ? 29 : days_in_month(2001, m);
      for (int d = 1; d <= max_d; ++d) {
        if (c.dom_.test(d)) {
          satisfiable = true;
          break;
        }
      }
    }
    if (!satisfiable) {
      throw ValidationError("cron: expression never matches: '" + expr + "'");
    }
  }
  return c;
}

bool CronExpr::day_matches(int year, int month, int day) const {
  const bool dom_ok = dom_.test(day);
  const bool dow_ok =
      dow_.test(weekday_from_timestamp(days_from_civil(year, month, day) * kDay));
  if (dom_star_ && dow_star_) return true;
  if (dom_star_) return dow_ok;
  if (dow_star_) return dom_ok;
  return dom_ok || dow_ok;
}

bool CronExpr::matches(Timestamp t) const {
  const CivilTime c = civil_from_timestamp(t);
  return minutes_.test(c.minute) && hours_.test(c.hour) &&
         months_.test(c.month) && day_matches(c.year, c.month, c.day);
}

Timestamp CronExpr::next_after(Timestamp after) const {
  // First minute boundary strictly after `after`.
  Timestamp t = (after >= 0 ? after / kMinute : (after - kMinute + 1) / kMinute);
  t = (t + 1) * kMinute;

  CivilTime c = civil_from_timestamp(t);
  // Day-level stepping keeps the search cheap for sparse date patterns.
  const int kMaxDays = 366 * 9;
  for (int guard = 0; guard < kMaxDays; ++guard) {
    if (!months_.test(c.month) || !day_matches(c.year, c.month, c.day)) {
      Timestamp day_start = days_from_civil(c.year, c.month, c.day) * kDay;
      c = civil_from_timestamp(day_start + kDay);
      continue;
    }
    for (int h = c.hour; h < 24; ++h) {
      if (!hours_.test(h)) continue;
      const int first_min = (h == c.hour) ? c.minute : 0;
      for (int m = first_min; m < 60; ++m) {
        if (minutes_.test(m)) {
          return days_from_civil(c.year, c.month, c.day) * kDay + h * kHour +
                 m * kMinute;
        }
      }
    }
    Timestamp day_start = days_from_civil(c.year, c.month, c.day) * kDay;
    c = civil_from_timestamp(day_start + kDay);
  }
  throw ValidationError("cron: no match within nine years for '" + text_ + "'");
}

}  // namespace clinloop::serve
