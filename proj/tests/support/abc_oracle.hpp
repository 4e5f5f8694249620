#pragma once

// Hand-rolled reading of the plain ABC subset used by the golden fixtures:
// single notes and rests with integer or p/q lengths, quoted chord symbols,
// single bars and |: :| repeats. Independent of the library parser.

#include <boost/rational.hpp>
#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

using Q = boost::rational<std::int64_t>;

struct Bar {
    int notes = 0;  // sounding note starts
    Q length{0};    // in unit lengths
    bool open_repeat = false;
    bool close_repeat = false;
};

/// Bars of each voice keyed by the V: number, in written order.
inline std::map<int, std::vector<Bar>> read_voices(const std::string& abc) {
    std::map<int, std::vector<Bar>> out;
    std::istringstream in(abc);
    std::string line;
    int voice = 1;
    bool body = false;
    while (std::getline(in, line)) {
        if (line.size() >= 2 && std::isalpha(static_cast<unsigned char>(line[0])) && line[1] == ':') {
            if (line[0] == 'V') voice = std::stoi(line.substr(2));
            if (line[0] == 'K') body = true;
            continue;
        }
        if (!body || line.empty()) continue;
        auto& bars = out[voice];
        Bar cur;
        bool has = false;
        std::size_t i = 0;
        while (i < line.size()) {
            const char c = line[i];
            if (c == '"') {
                i = line.find('"', i + 1) + 1;
            } else if (c == '|' || c == ':') {
                std::string bar;
                while (i < line.size() && (line[i] == '|' || line[i] == ':')) bar += line[i++];
                if (bar.find(":|") != std::string::npos || bar == ":") cur.close_repeat = true;
                if (has) {
                    bars.push_back(cur);
                    cur = Bar{};
                    has = false;
                }
                if (bar.find("|:") != std::string::npos) cur.open_repeat = true;
            } else if (std::isalpha(static_cast<unsigned char>(c))) {
                const bool rest = c == 'z';
                ++i;
                while (i < line.size() && (line[i] == '\'' || line[i] == ',')) ++i;
                std::int64_t num = 1, den = 1;
                std::size_t start = i;
                while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
                if (i > start) num = std::stoll(line.substr(start, i - start));
                if (i < line.size() && line[i] == '/') {
                    ++i;
                    start = i;
                    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
                    den = i > start ? std::stoll(line.substr(start, i - start)) : 2;
                }
                cur.length += Q(num, den);
                if (!rest) ++cur.notes;
                has = true;
            } else {
                ++i;
            }
        }
        if (has) bars.push_back(cur);
    }
    return out;
}

/// Playback order with each |: ... :| section played twice.
inline std::vector<Bar> expand(const std::vector<Bar>& bars) {
    std::vector<Bar> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < bars.size(); ++i) {
        if (bars[i].open_repeat) start = i;
        out.push_back(bars[i]);
        if (bars[i].close_repeat) {
            for (std::size_t j = start; j <= i; ++j) out.push_back(bars[j]);
            start = i + 1;
        }
    }
    return out;
}

}  // namespace oracle
