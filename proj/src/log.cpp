#include "pdegnn/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace pdegnn::log {

namespace {
std::atomic<long> g_count{0};
std::atomic<bool> g_silenced{false};
std::mutex g_stderr_mutex;
}  // namespace

void warn(std::string_view message) {
  g_count.fetch_add(1, std::memory_order_relaxed);
  if (g_silenced.load(std::memory_order_relaxed)) return;
  std::lock_guard lock(g_stderr_mutex);
  std::cerr << "[pdegnn] warning: " << message << '\n';
}

long warning_count() { return g_count.load(std::memory_order_relaxed); }

Silence::Silence() : previous_(g_silenced.exchange(true)) {}
Silence::~Silence() { g_silenced.store(previous_); }

}  // namespace pdegnn::log
