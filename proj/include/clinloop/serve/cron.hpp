#pragma once

#include <bitset>
#include <string>

#include "clinloop/time_util.hpp"

namespace clinloop::serve {

// Classic 5-field cron (minute hour day-of-month month day-of-week) with
// numbers, ranges, lists, steps and *. Day-of-week is 0-6, 0 = Sunday; when
// both day fields are restricted a day matches if either does (vixie rule).
// Parsing rejects out-of-range fields and expressions that can never match,
// so schedules fail at registration, not at runtime.
class CronExpr {
 public:
  static CronExpr parse(const std::string& expr);  // throws ValidationError

  bool matches(Timestamp t) const;  // minute resolution

  // Smallest matching timestamp strictly after `after`.
  Timestamp next_after(Timestamp after) const;

  const std::string& text() const { return text_; }

 private:
  CronExpr() = default;

  bool day_matches(int year, int month, int day) const;

  std::bitset<60> minutes_;
  std::bitset<24> hours_;
  std::bitset<32> dom_;  // 1..31
  std::bitset<13> months_;  // 1..12
  std::bitset<7> dow_;   // 0 = Sunday
  bool dom_star_ = true;
  bool dow_star_ = true;
  std::string text_;
};

}  // namespace clinloop::serve
