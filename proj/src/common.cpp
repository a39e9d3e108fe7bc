#include "aegis/common.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace aegis {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int n) {
  if (n < 0) fail(ErrorKind::config, "thread count must be >= 0");
  g_threads.store(n);
}

int thread_count() {
  int n = g_threads.load();
  if (n == 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n = hw == 0 ? 1 : static_cast<int>(std::min<unsigned>(hw, 8));
  }
  return n;
}

void parallel_for(int64_t n, int64_t grain, const std::function<void(int64_t, int64_t)>& body) {
  if (n <= 0) return;
  int threads = thread_count();
  if (threads <= 1 || n < 2 * grain) {
    body(0, n);
    return;
  }
  int64_t chunks = std::min<int64_t>(threads, (n + grain - 1) / grain);
  int64_t step = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(chunks));
  for (int64_t c = 0; c < chunks; ++c) {
    int64_t lo = c * step;
    int64_t hi = std::min(n, lo + step);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace aegis
