#include "tmagent/clock.hpp"

#include <thread>

namespace tmagent {

using namespace std::chrono;

TimestampMs SystemClock::wall_now() { return floor<milliseconds>(system_clock::now()); }

milliseconds SystemClock::monotonic() { return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()); }

void SystemClock::sleep_for(milliseconds d) {
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

ManualClock::ManualClock(TimestampMs start) : start_(start) {}

TimestampMs ManualClock::wall_now() {
  std::lock_guard lock(mu_);
  return start_ + elapsed_;
}

milliseconds ManualClock::monotonic() {
  std::lock_guard lock(mu_);
  return elapsed_;
}

void ManualClock::sleep_for(milliseconds d) {
  std::lock_guard lock(mu_);
  if (d.count() > 0) elapsed_ += d;
}

std::shared_ptr<Clock> make_system_clock() { return std::make_shared<SystemClock>(); }

}  // namespace tmagent
