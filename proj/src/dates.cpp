#include "wildfire/dates.hpp"

#include <charconv>
#include <cstdio>

#include "wildfire/errors.hpp"

namespace wildfire {

namespace chr = std::chrono;

Date::Date(int y, unsigned m, unsigned d) {
  const chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) throw FormatError("invalid calendar date");
  days_ = chr::sys_days{ymd};
}

Date Date::parse(std::string_view text) {
  auto field = [&](std::size_t pos, std::size_t len) {
    int value = 0;
    const char* first = text.data() + pos;
    const char* last = first + len;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
      throw FormatError("unparsable date '" + std::string(text) + "'");
    }
    return value;
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw FormatError("unparsable date '" + std::string(text) + "'");
  }
  const int y = field(0, 4);
  const int m = field(5, 2);
  const int d = field(8, 2);
  const chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(m)}, chr::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw FormatError("unparsable date '" + std::string(text) + "'");
  return Date(chr::sys_days{ymd});
}

std::string Date::iso() const {
  const chr::year_month_day ymd{days_};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int Date::year() const { return static_cast<int>(chr::year_month_day{days_}.year()); }

int Date::day_of_year() const {
  const chr::year_month_day ymd{days_};
  const chr::sys_days jan1{ymd.year() / chr::January / 1};
  return (days_ - jan1).count() + 1;
}

}  // namespace wildfire
