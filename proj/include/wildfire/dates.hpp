#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace wildfire {

// Calendar day backed by std::chrono::sys_days.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  // Parses YYYY-MM-DD; throws FormatError.
  static Date parse(std::string_view text);

  std::string iso() const;
  int year() const;
  // 1-based; Dec 31 of a leap year is 366 and is clamped to 365 by callers
  // that need the [1,365] range.
  int day_of_year() const;

  Date plus_days(int n) const { return Date(days_ + std::chrono::days{n}); }
  int days_until(const Date& other) const { return (other.days_ - days_).count(); }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace wildfire
