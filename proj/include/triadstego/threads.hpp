#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "triadstego/errors.hpp"

namespace triadstego {

// Evaluation parallelism cap. TRIAD_STEGO_THREADS overrides the hardware
// count; anything unparsable or < 1 is a config error. Training never uses
// this — the optimization loop is sequential by construction.
inline int eval_threads() {
    const char* env = std::getenv("TRIAD_STEGO_THREADS");
    if (env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == nullptr || *end != '\0' || v < 1) {
            throw ConfigError("TRIAD_STEGO_THREADS must be a positive integer, got \"" +
                              std::string(env) + "\"");
        }
        return static_cast<int>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Index-parallel loop with deterministic work assignment: worker t handles
// indices t, t+threads, t+2*threads, ... Each index must write only its own
// output slot; the schedule (and therefore every result) is independent of
// thread timing.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads < 1) throw ConfigError("thread count must be positive");
    const int used = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads),
                                                            std::max<std::size_t>(n, 1)));
    if (used == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(used));
    pool.reserve(static_cast<std::size_t>(used));
    for (int t = 0; t < used; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = static_cast<std::size_t>(t); i < n;
                     i += static_cast<std::size_t>(used)) {
                    fn(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace triadstego
