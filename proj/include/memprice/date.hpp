#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace memprice {

// A proleptic Gregorian calendar day, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  Date(int year, unsigned month, unsigned day);

  // Parses yyyy-mm-dd. Throws DomainError on malformed or impossible dates.
  static Date parse(std::string_view text);
  static constexpr Date from_serial(std::int64_t days) {
    Date d;
    d.serial_ = days;
    return d;
  }

  int year() const;
  unsigned month() const;
  unsigned day() const;
  // 0 = Monday ... 6 = Sunday
  unsigned weekday() const;

  std::int64_t serial() const noexcept { return serial_; }
  std::string iso() const;

  Date operator+(std::int64_t days) const { return from_serial(serial_ + days); }
  Date operator-(std::int64_t days) const { return from_serial(serial_ - days); }
  std::int64_t operator-(Date other) const { return serial_ - other.serial_; }

  auto operator<=>(const Date&) const = default;

 private:
  std::int64_t serial_ = 0;
};

// Year and month packed as year*12 + (month-1); consecutive months differ by 1.
using MonthIndex = std::int64_t;

inline MonthIndex month_index(const Date& d) {
  return static_cast<MonthIndex>(d.year()) * 12 + (d.month() - 1);
}

std::string month_label(MonthIndex m);

}  // namespace memprice
