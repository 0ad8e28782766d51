#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace wwps {

// Seconds since the Unix epoch, UTC. All plant data is on a whole-second grid.
using Timestamp = std::chrono::sys_seconds;

constexpr std::chrono::seconds kStep{120};

struct Calendar {
  int hour;   // 0-23
  int wday;   // 0-6, Sunday = 0
  int month;  // 1-12
};

Calendar calendar_of(Timestamp t);

// "YYYY-MM-DDTHH:MM:SS"
std::string format_iso(Timestamp t);
Timestamp parse_iso(std::string_view text);

inline Timestamp make_time(int y, unsigned m, unsigned d, int hour = 0, int minute = 0) {
  using namespace std::chrono;
  return sys_days{year{y} / month{m} / day{d}} + hours{hour} + minutes{minute};
}

}  // namespace wwps
