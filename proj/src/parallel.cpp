#include "maskcls/parallel.hpp"

#include <cstdlib>

namespace maskcls {

int default_thread_count() {
  if (const char* env = std::getenv("MASKCLS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace maskcls
