#include "talkinghead/error.hpp"

#include <atomic>
#include <iostream>

namespace th {

namespace {
std::atomic<bool> g_quiet{false};
}

void warn(std::string_view message) {
  if (!g_quiet.load()) std::cerr << "warning: " << message << '\n';
}

void set_quiet(bool q) { g_quiet.store(q); }

bool quiet() { return g_quiet.load(); }

}  // namespace th
