#pragma once

// Test-only reference G-code interpreter. Deliberately written as a direct,
// line-at-a-time string walker (no lexer, no Command objects) so it provides
// an independent trace to compare the production parser against.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

namespace refinterp {

struct Move {
    double x0, y0, z0, x1, y1, z1;
    double de;
    bool extruding;
};

inline std::vector<Move> trace(const std::string& text) {
    std::vector<Move> moves;
    double x = 0, y = 0, z = 0, e = 0, f = 0;
    bool rel = false, erel = false;

    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto sc = line.find(';');
        if (sc != std::string::npos) line.erase(sc);
        for (;;) {
            auto po = line.find('(');
            if (po == std::string::npos) break;
            auto pc = line.find(')', po);
            if (pc == std::string::npos) { line.erase(po); break; }
            line.erase(po, pc - po + 1);
        }

        double vals[26];
        bool has[26] = {false};
        size_t i = 0;
        while (i < line.size()) {
            char c = line[i];
            if (std::isalpha((unsigned char)c)) {
                char L = char(std::toupper((unsigned char)c));
                size_t j = i + 1;
                while (j < line.size() && (std::isdigit((unsigned char)line[j]) ||
                                           line[j] == '.' || line[j] == '-' || line[j] == '+'))
                    j++;
                if (j > i + 1) {
                    vals[L - 'A'] = std::atof(line.substr(i + 1, j - i - 1).c_str());
                    has[L - 'A'] = true;
                }
                i = j;
            } else {
                i++;
            }
        }

        auto code = [&](char L, double n) {
            return has[L - 'A'] && std::abs(vals[L - 'A'] - n) < 1e-9;
        };
        // only the first command word on the line counts; pick G over M
        if (code('G', 90)) { rel = false; erel = false; continue; }
        if (code('G', 91)) { rel = true; erel = true; continue; }
        if (code('M', 82)) { erel = false; continue; }
        if (code('M', 83)) { erel = true; continue; }
        if (code('G', 92)) {
            if (has['X' - 'A']) x = vals['X' - 'A'];
            if (has['Y' - 'A']) y = vals['Y' - 'A'];
            if (has['Z' - 'A']) z = vals['Z' - 'A'];
            if (has['E' - 'A']) e = vals['E' - 'A'];
            continue;
        }
        if (code('G', 0) || code('G', 1)) {
            if (has['F' - 'A']) f = vals['F' - 'A'];
            double nx = x, ny = y, nz = z, ne = e;
            if (rel) {
                if (has['X' - 'A']) nx += vals['X' - 'A'];
                if (has['Y' - 'A']) ny += vals['Y' - 'A'];
                if (has['Z' - 'A']) nz += vals['Z' - 'A'];
            } else {
                if (has['X' - 'A']) nx = vals['X' - 'A'];
                if (has['Y' - 'A']) ny = vals['Y' - 'A'];
                if (has['Z' - 'A']) nz = vals['Z' - 'A'];
            }
            if (has['E' - 'A']) ne = erel ? e + vals['E' - 'A'] : vals['E' - 'A'];
            bool moved = (nx != x) || (ny != y) || (nz != z);
            if (moved)
                moves.push_back({x, y, z, nx, ny, nz, ne - e, ne - e > 0.0});
            x = nx; y = ny; z = nz; e = ne;
            (void)f;
        }
    }
    return moves;
}

}  // namespace refinterp
