#pragma once

// UTC instants, local calendar dates and the 10-minute bucket grid.

#include <boost/date_time/local_time/local_time.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace safebike {

using Instant = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

inline constexpr int kBucketsPerDay = 144;
inline constexpr int kBucketSeconds = 600;
inline constexpr int kSecondsPerDay = 86'400;

struct LocalDateTime {
  Date date;
  int seconds_of_day = 0;  // [0, 86400)

  friend bool operator==(const LocalDateTime&, const LocalDateTime&) = default;
};

inline Instant instant_from_epoch(std::int64_t seconds) {
  return Instant{std::chrono::seconds{seconds}};
}

inline std::int64_t epoch_seconds(Instant t) { return t.time_since_epoch().count(); }

inline int bucket_of(int hour, int minute) { return (hour * 60 + minute) / 10; }

inline int bucket_of(const LocalDateTime& t) { return t.seconds_of_day / kBucketSeconds; }

/// 0 for Monday-Friday, 1 for Saturday-Sunday.
inline int weekday_flag(const Date& d) {
  const std::chrono::weekday wd{std::chrono::sys_days{d}};
  return (wd == std::chrono::Saturday || wd == std::chrono::Sunday) ? 1 : 0;
}

inline Date add_days(const Date& d, int days) {
  return Date{std::chrono::sys_days{d} + std::chrono::days{days}};
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

namespace detail {

inline bool parse_int(std::string_view s, int& out) {
  if (s.empty()) {
    return false;
  }
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace detail

/// Accepts YYYY-MM-DD and MM/DD/YYYY; an optional time suffix after 'T' or ' '
/// is ignored.
inline std::optional<Date> parse_date(std::string_view s) {
  if (auto cut = s.find_first_of("T "); cut != std::string_view::npos) {
    s = s.substr(0, cut);
  }
  int y = 0;
  int m = 0;
  int d = 0;
  if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
    if (!detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(5, 2), m) ||
        !detail::parse_int(s.substr(8, 2), d)) {
      return std::nullopt;
    }
  } else if (s.size() == 10 && s[2] == '/' && s[5] == '/') {
    if (!detail::parse_int(s.substr(0, 2), m) || !detail::parse_int(s.substr(3, 2), d) ||
        !detail::parse_int(s.substr(6, 4), y)) {
      return std::nullopt;
    }
  } else {
    return std::nullopt;
  }
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) {
    return std::nullopt;
  }
  return date;
}

inline std::string format_instant(Instant t) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  const Date d{day};
  const auto sod = (t - day).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lldZ", format_date(d).c_str(),
                static_cast<long long>(sod / 3600), static_cast<long long>(sod / 60 % 60),
                static_cast<long long>(sod % 60));
  return buf;
}

/// Parses "YYYY-MM-DDTHH:MM[:SS](Z|+HH:MM|-HH:MM)" or plain epoch seconds.
inline std::optional<Instant> parse_instant(std::string_view s) {
  if (!s.empty() && s.find_first_not_of("0123456789-") == std::string_view::npos &&
      s.find('-', 1) == std::string_view::npos) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && ptr == s.data() + s.size()) {
      return instant_from_epoch(v);
    }
    return std::nullopt;
  }
  if (s.size() < 16 || (s[10] != 'T' && s[10] != ' ')) {
    return std::nullopt;
  }
  auto date = parse_date(s.substr(0, 10));
  if (!date) {
    return std::nullopt;
  }
  int hh = 0;
  int mm = 0;
  int ss = 0;
  if (s[13] != ':' || !detail::parse_int(s.substr(11, 2), hh) || !detail::parse_int(s.substr(14, 2), mm)) {
    return std::nullopt;
  }
  std::string_view rest = s.substr(16);
  if (!rest.empty() && rest[0] == ':') {
    if (rest.size() < 3 || !detail::parse_int(rest.substr(1, 2), ss)) {
      return std::nullopt;
    }
    rest = rest.substr(3);
  }
  int offset = 0;
  if (rest == "Z" || rest.empty()) {
    offset = 0;
  } else if (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') && rest[3] == ':') {
    int oh = 0;
    int om = 0;
    if (!detail::parse_int(rest.substr(1, 2), oh) || !detail::parse_int(rest.substr(4, 2), om)) {
      return std::nullopt;
    }
    offset = (oh * 3600 + om * 60) * (rest[0] == '-' ? -1 : 1);
  } else {
    return std::nullopt;
  }
  if (hh > 23 || mm > 59 || ss > 60) {
    return std::nullopt;
  }
  return Instant{std::chrono::sys_days{*date}} + std::chrono::seconds{hh * 3600 + mm * 60 + ss - offset};
}

/// Local civil time rules. Accepts a handful of IANA names, "UTC", or a
/// Boost posix_time_zone rule string (offsets east-positive, e.g.
/// "EST-05EDT+01,M3.2.0/02:00,M11.1.0/02:00").
class TimeZone {
public:
  TimeZone() : TimeZone("America/New_York") {}

  explicit TimeZone(const std::string& name) : name_(name) {
    static const std::map<std::string, std::string, std::less<>> aliases = {
        {"America/New_York", "EST-05EDT+01,M3.2.0/02:00,M11.1.0/02:00"},
        {"America/Chicago", "CST-06CDT+01,M3.2.0/02:00,M11.1.0/02:00"},
        {"America/Denver", "MST-07MDT+01,M3.2.0/02:00,M11.1.0/02:00"},
        {"America/Los_Angeles", "PST-08PDT+01,M3.2.0/02:00,M11.1.0/02:00"},
        {"Europe/London", "GMT+00BST+01,M3.5.0/01:00,M10.5.0/02:00"},
        {"Europe/Paris", "CET+01CEST+01,M3.5.0/02:00,M10.5.0/03:00"},
        {"UTC", "UTC+00"},
    };
    const auto it = aliases.find(name);
    const std::string rule = it != aliases.end() ? it->second : name;
    try {
      zone_ = boost::local_time::time_zone_ptr(new boost::local_time::posix_time_zone(rule));
    } catch (const std::exception& e) {
      throw std::invalid_argument("unrecognized timezone '" + name + "': " + e.what());
    }
  }

  const std::string& name() const { return name_; }

  /// Seconds to add to UTC to get local wall time at instant t.
  int offset_at(Instant t) const {
    const auto secs = epoch_seconds(t);
    const boost::posix_time::ptime utc =
        boost::posix_time::ptime(boost::gregorian::date(1970, 1, 1)) + boost::posix_time::seconds(static_cast<long>(secs));
    const boost::local_time::local_date_time ldt(utc, zone_);
    return static_cast<int>((ldt.local_time() - utc).total_seconds());
  }

  LocalDateTime to_local(Instant t) const {
    const auto local = t + std::chrono::seconds{offset_at(t)};
    const auto day = std::chrono::floor<std::chrono::days>(local);
    return LocalDateTime{Date{day}, static_cast<int>((local - day).count())};
  }

  /// Inverse of to_local; inside a DST overlap the later offset wins.
  Instant to_utc(const Date& date, int seconds_of_day) const {
    const Instant wall = Instant{std::chrono::sys_days{date}} + std::chrono::seconds{seconds_of_day};
    const int guess = offset_at(wall);
    const int corrected = offset_at(wall - std::chrono::seconds{guess});
    return wall - std::chrono::seconds{corrected};
  }

private:
  std::string name_;
  boost::local_time::time_zone_ptr zone_;
};

}  // namespace safebike
