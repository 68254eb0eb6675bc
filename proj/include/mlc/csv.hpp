#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mlc/error.hpp"

namespace mlc::csv {

using Row = std::vector<std::string>;

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::missing_file, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::missing_file, "cannot write '" + path + "'");
    out << text;
}

// RFC-4180-ish: quoted fields, doubled quotes, CRLF tolerated. Blank lines are skipped.
inline std::vector<Row> parse(const std::string& text) {
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool quoted = false, any = false;
    auto end_row = [&] {
        if (any || !field.empty() || !row.empty()) {
            row.push_back(field);
            rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') { field += '"'; ++i; }
                else quoted = false;
            } else {
                field += ch;
            }
            continue;
        }
        switch (ch) {
        case '"': quoted = true; any = true; break;
        case ',': row.push_back(field); field.clear(); any = true; break;
        case '\r': break;
        case '\n': end_row(); break;
        default: field += ch;
        }
    }
    if (quoted) throw TableError("unterminated quoted field", rows.size() + 1, "");
    end_row();
    return rows;
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

/// Parse a finite real; row/column are used only for the diagnostic.
inline double to_real(const std::string& cell, std::size_t row, const std::string& column) {
    std::string t = trim(cell);
    if (t.empty()) throw TableError("empty numeric cell", row, column);
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE) throw TableError("non-numeric cell '" + t + "'", row, column);
    if (!std::isfinite(v)) throw TableError("non-finite value '" + t + "'", row, column);
    return v;
}

inline std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace mlc::csv
