#include "fable/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>

namespace fable {

int default_thread_count() {
    if (const char* env = std::getenv("FABLE_THREADS")) {
        int value = 0;
        const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), value);
        if (ec == std::errc() && value > 0) return value;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace fable
