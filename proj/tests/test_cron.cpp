#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "clinloop/rng.hpp"
#include "clinloop/serve/cron.hpp"
#include "helpers.hpp"

using namespace clinloop;
using namespace clinloop::serve;
using testutil::ts;

namespace {

// Independent oracle built from explicit field sets: a generated expression
// is evaluated by scanning minute by minute, with the dom/dow union rule
// applied directly.
struct OracleExpr {
  std::set<int> minutes, hours, dom, months, dow;
  bool dom_star = true, dow_star = true;

  bool matches(Timestamp t) const {
    const CivilTime c = civil_from_timestamp(t);
    if (minutes.count(c.minute) == 0) return false;
    if (hours.count(c.hour) == 0) return false;
    if (months.count(c.month) == 0) return false;
    const bool dom_ok = dom.count(c.day) > 0;
    const bool dow_ok = dow.count(weekday_from_timestamp(t)) > 0;
    if (dom_star && dow_star) return true;
    if (dom_star) return dow_ok;
    if (dow_star) return dom_ok;
    return dom_ok || dow_ok;
  }

  Timestamp next_after(Timestamp after) const {
    Timestamp t = (after / kMinute + 1) * kMinute;
    for (int i = 0; i < 60 * 24 * 366 * 9; ++i, t += kMinute) {
      if (matches(t)) return t;
    }
    throw std::runtime_error("oracle found no match");
  }
};

// Random expression drawn from the supported grammar, rendered to text and
// kept as explicit sets for the oracle.
std::pair<std::string, OracleExpr> random_expr(Rng& rng) {
  OracleExpr oracle;
  std::string text;
  struct FieldSpec {
    int lo, hi;
    std::set<int>* out;
    bool* star_flag;
  };
  FieldSpec fields[5] = {{0, 59, &oracle.minutes, nullptr},
                         {0, 23, &oracle.hours, nullptr},
                         {1, 31, &oracle.dom, &oracle.dom_star},
                         {1, 12, &oracle.months, nullptr},
                         {0, 6, &oracle.dow, &oracle.dow_star}};
  for (int f = 0; f < 5; ++f) {
    const auto& fs = fields[f];
    const int span = fs.hi - fs.lo + 1;
    std::string field_text;
    const int kind = static_cast<int>(rng.index(4));
    if (kind == 0) {  // *
      field_text = "*";
      for (int v = fs.lo; v <= fs.hi; ++v) fs.out->insert(v);
      if (fs.star_flag != nullptr) *fs.star_flag = true;
    } else if (kind == 1) {  // */step
      const int step = 1 + static_cast<int>(rng.index(span > 10 ? 14 : span));
      field_text = "*/" + std::to_string(step);
      for (int v = fs.lo; v <= fs.hi; v += step) fs.out->insert(v);
      if (fs.star_flag != nullptr) *fs.star_flag = false;
    } else if (kind == 2) {  // list of numbers
      const int count = 1 + static_cast<int>(rng.index(3));
      std::set<int> vals;
      for (int i = 0; i < count; ++i) {
        vals.insert(fs.lo + static_cast<int>(rng.index(span)));
      }
      for (int v : vals) {
        if (!field_text.empty()) field_text += ",";
        field_text += std::to_string(v);
        fs.out->insert(v);
      }
      if (fs.star_flag != nullptr) *fs.star_flag = false;
    } else {  // range with optional step
      int a = fs.lo + static_cast<int>(rng.index(span));
      int b = fs.lo + static_cast<int>(rng.index(span));
      if (a > b) std::swap(a, b);
      const int step = 1 + static_cast<int>(rng.index(3));
      field_text = std::to_string(a) + "-" + std::to_string(b);
      if (step > 1) field_text += "/" + std::to_string(step);
      for (int v = a; v <= b; v += step) fs.out->insert(v);
      if (fs.star_flag != nullptr) *fs.star_flag = false;
    }
    if (f > 0) text += " ";
    text += field_text;
  }
  return {text, oracle};
}

}  // namespace

TEST_CASE("cron parse rejects bad syntax and ranges") {
  CHECK_THROWS_AS(CronExpr::parse("61 * * * *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("* 24 * * *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("* * 0 * *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("* * * 13 *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("* * * * 7"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("* * * *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("* * * * * *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("*/0 * * * *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("5-2 * * * *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("a * * * *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse(""), ValidationError);
  // Unsatisfiable date combinations fail at parse time, not at runtime.
  CHECK_THROWS_AS(CronExpr::parse("0 0 31 2 *"), ValidationError);
  CHECK_THROWS_AS(CronExpr::parse("0 0 30 2 *"), ValidationError);
  CHECK_NOTHROW(CronExpr::parse("0 0 29 2 *"));   // leap day
  CHECK_NOTHROW(CronExpr::parse("0 0 31 2 0"));   // dow rescues it
}

TEST_CASE("cron next: quarter-hour schedule") {
  const auto e = CronExpr::parse("*/15 * * * *");
  CHECK(e.next_after(ts("2022-01-05T00:07:00Z")) == ts("2022-01-05T00:15:00Z"));
  CHECK(e.next_after(ts("2022-01-05T00:15:00Z")) == ts("2022-01-05T00:30:00Z"));
  CHECK(e.next_after(ts("2022-01-05T00:59:30Z")) == ts("2022-01-05T01:00:00Z"));
}

TEST_CASE("cron next: daily at midnight") {
  const auto e = CronExpr::parse("0 0 * * *");
  CHECK(e.next_after(ts("2022-01-05T00:00:00Z")) == ts("2022-01-06T00:00:00Z"));
  CHECK(e.next_after(ts("2022-01-05T13:30:00Z")) == ts("2022-01-06T00:00:00Z"));
  CHECK(e.next_after(ts("2022-12-31T23:59:00Z")) == ts("2023-01-01T00:00:00Z"));
}

TEST_CASE("cron next: leap day") {
  const auto e = CronExpr::parse("30 12 29 2 *");
  CHECK(e.next_after(ts("2021-03-01T00:00:00Z")) == ts("2024-02-29T12:30:00Z"));
}

TEST_CASE("cron: vixie dom/dow union rule") {
  // Both restricted: fire on the 15th OR on Sundays.
  const auto e = CronExpr::parse("0 0 15 * 0");
  // 2022-01-09 is a Sunday; the 15th is a Saturday.
  CHECK(e.next_after(ts("2022-01-07T00:00:00Z")) == ts("2022-01-09T00:00:00Z"));
  CHECK(e.next_after(ts("2022-01-10T00:00:00Z")) == ts("2022-01-15T00:00:00Z"));
  CHECK(e.matches(ts("2022-01-16T00:00:00Z")));  // next Sunday
}

TEST_CASE("cron next matches the minute-enumeration oracle") {
  Rng rng(404);
  const Timestamp base = ts("2021-01-01T00:00:00Z");
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const auto [text, oracle] = random_expr(rng);
    CronExpr parsed = CronExpr::parse("* * * * *");
    try {
      parsed = CronExpr::parse(text);
    } catch (const ValidationError&) {
      // The generator may emit an unsatisfiable dom/month combination; the
      // oracle would also never match it.
      continue;
    }
    const Timestamp after =
        base + static_cast<Timestamp>(rng.u01() * 2.0 * 365.0 * kDay);
    CHECK(parsed.next_after(after) == oracle.next_after(after));
    ++checked;
  }
  CHECK(checked > 300);
}
