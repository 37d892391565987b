#include "bidrn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bidrn {
namespace {

std::atomic<std::size_t> g_override{0};

std::size_t env_threads() {
  if (const char* env = std::getenv("BIDRN_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

std::size_t max_threads() {
  std::size_t o = g_override.load();
  return o > 0 ? o : env_threads();
}

void set_max_threads(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t min_per_thread) {
  std::size_t workers = std::min(max_threads(),
                                 count / std::max<std::size_t>(1, min_per_thread));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace bidrn
