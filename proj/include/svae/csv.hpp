#pragma once

#include <cstdio>
#include <ostream>
#include <span>
#include <string>

namespace svae {

/// Round-trip decimal form shared by every CSV writer.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv_row(std::ostream& out, std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        out << format_double(values[i]);
    }
    out << '\n';
}

}  // namespace svae
