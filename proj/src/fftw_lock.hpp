#pragma once

#include <mutex>

namespace spur::detail {

/// FFTW's planner is not thread-safe; every plan create/destroy takes this.
std::mutex& fftw_planner_mutex();

}  // namespace spur::detail
