#pragma once

#include <atomic>
#include <chrono>
#include <memory>

#include "clinloop/time_util.hpp"

namespace clinloop {

// Injectable clock. Every component reads time through this so that cron
// schedules, result maturation and label extraction run in milliseconds
// under test; wall-clock mode exists only in the CLI.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class VirtualClock : public Clock {
 public:
  explicit VirtualClock(Timestamp start = 0) : now_(start) {}

  Timestamp now() const override { return now_.load(std::memory_order_acquire); }

  void set(Timestamp t) { now_.store(t, std::memory_order_release); }

  void advance(Duration d) { now_.fetch_add(d, std::memory_order_acq_rel); }

 private:
  std::atomic<Timestamp> now_;
};

class SystemClock : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
};

}  // namespace clinloop
