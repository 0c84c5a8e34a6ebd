#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace lnl::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

// Verbosity comes from the LNL_LOG environment variable: quiet|info|debug.
inline Level level() {
    static Level lvl = [] {
        const char* env = std::getenv("LNL_LOG");
        if (!env) return Level::info;
        if (std::strcmp(env, "quiet") == 0) return Level::quiet;
        if (std::strcmp(env, "debug") == 0) return Level::debug;
        return Level::info;
    }();
    return lvl;
}

inline void info(const std::string& msg) {
    if (level() >= Level::info) std::fprintf(stderr, "[lnl] %s\n", msg.c_str());
}

inline void debug(const std::string& msg) {
    if (level() >= Level::debug) std::fprintf(stderr, "[lnl:debug] %s\n", msg.c_str());
}

inline void warn(const std::string& msg) {
    std::fprintf(stderr, "[lnl:warn] %s\n", msg.c_str());
}

}  // namespace lnl::log
