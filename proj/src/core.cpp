#include "am/core.hpp"

#include <cstdio>

namespace am {

std::string format_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_gcode(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10f", v);
    std::string s(buf);
    // trim trailing zeros but keep one digit after the point
    auto dot = s.find('.');
    if (dot != std::string::npos) {
        size_t last = s.find_last_not_of('0');
        if (last == dot) last += 1;
        s.erase(last + 1);
    }
    return s;
}

}  // namespace am
