#include "coordconv/runtime.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <thread>

namespace coordconv {

namespace {

FiniteChecks g_finite_checks = FiniteChecks::full;

int threads_from_env() {
  if (const char* s = std::getenv("COORDCONV_LAB_THREADS")) {
    int n = std::atoi(s);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

int g_max_threads = [] {
  int n = threads_from_env();
  Eigen::setNbThreads(n);
  return n;
}();

}  // namespace

FiniteChecks finite_checks() { return g_finite_checks; }
void set_finite_checks(FiniteChecks mode) { g_finite_checks = mode; }

int max_threads() { return g_max_threads; }

void set_max_threads(int n) {
  if (n < 1) throw std::invalid_argument("set_max_threads: need n >= 1");
  g_max_threads = n;
  Eigen::setNbThreads(n);
}

}  // namespace coordconv
