#pragma once

#include <chrono>
#include <memory>
#include <mutex>

#include "tmagent/timeutil.hpp"

namespace tmagent {

/// Time source for timestamps, latency measurement and waits. The manual
/// variant makes whole sessions reproducible down to the event log bytes.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs wall_now() = 0;
  virtual std::chrono::milliseconds monotonic() = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock final : public Clock {
 public:
  TimestampMs wall_now() override;
  std::chrono::milliseconds monotonic() override;
  void sleep_for(std::chrono::milliseconds d) override;
};

/// Virtual time: sleeping advances the clock instead of blocking.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimestampMs start = TimestampMs{std::chrono::sys_days{std::chrono::year{2025} / 1 / 1}});

  TimestampMs wall_now() override;
  std::chrono::milliseconds monotonic() override;
  void sleep_for(std::chrono::milliseconds d) override;
  void advance(std::chrono::milliseconds d) { sleep_for(d); }

 private:
  std::mutex mu_;
  TimestampMs start_;
  std::chrono::milliseconds elapsed_{0};
};

std::shared_ptr<Clock> make_system_clock();

}  // namespace tmagent
