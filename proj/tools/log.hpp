#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace mlc::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level threshold() {
    static const Level lvl = [] {
        const char* v = std::getenv("MLC_LOG");
        std::string s = v ? v : "warn";
        if (s == "error") return Level::error;
        if (s == "info") return Level::info;
        if (s == "debug") return Level::debug;
        return Level::warn;
    }();
    return lvl;
}

inline void emit(Level l, const char* tag, const std::string& msg) {
    if (static_cast<int>(l) <= static_cast<int>(threshold())) std::cerr << "[mlc " << tag << "] " << msg << "\n";
}

inline void error(const std::string& m) { emit(Level::error, "error", m); }
inline void warn(const std::string& m) { emit(Level::warn, "warn", m); }
inline void info(const std::string& m) { emit(Level::info, "info", m); }
inline void debug(const std::string& m) { emit(Level::debug, "debug", m); }

} // namespace mlc::log
