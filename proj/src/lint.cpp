#include "ensemble/lint.hpp"

#include <algorithm>
#include <set>

namespace ensemble::abc {

RepairError::RepairError(int voice_id, std::size_t measure_index, const std::string& message)
    : std::runtime_error("voice " + std::to_string(voice_id) + ", measure " + std::to_string(measure_index) + ": " +
                         message),
      voice_id_(voice_id),
      measure_index_(measure_index) {}

bool is_well_formed_chord_symbol(std::string_view s) {
    if (s == "N.C." || s == "NC") return true;
    auto root = [&](std::size_t& i) {
        if (i >= s.size() || s[i] < 'A' || s[i] > 'G') return false;
        ++i;
        if (i < s.size() && (s[i] == '#' || s[i] == 'b')) ++i;
        return true;
    };
    std::size_t i = 0;
    if (!root(i)) return false;
    while (i < s.size() && s[i] != '/') {
        const char c = s[i];
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == 'M' || c == '+' || c == '#' ||
                        c == '-' || c == '(' || c == ')' || c == '^';
        if (!ok) {
            // allow UTF-8 degree / half-diminished / triangle signs
            if (static_cast<unsigned char>(c) >= 0x80) {
                ++i;
                continue;
            }
            return false;
        }
        ++i;
    }
    if (i < s.size()) {
        ++i;  // '/'
        if (!root(i)) return false;
        return i == s.size();
    }
    return true;
}

std::vector<ValidationIssue> validate(const Tune& tune) {
    std::vector<ValidationIssue> issues;
    const Rational meter = tune.header.meter.duration();
    const Rational unit = tune.header.unit_note_length;
    std::set<int> seen;
    for (const Voice& v : tune.voices) {
        if (!seen.insert(v.id).second)
            issues.push_back({v.id, std::nullopt, IssueKind::format_error,
                              "duplicate voice id " + std::to_string(v.id), std::nullopt, std::nullopt});
        if (!v.declared && tune.voices.size() > 1)
            issues.push_back({v.id, std::nullopt, IssueKind::format_error, "voice has no V: label", std::nullopt,
                              std::nullopt});
        if (v.midi_program && (*v.midi_program < 0 || *v.midi_program > 127))
            issues.push_back({v.id, std::nullopt, IssueKind::format_error,
                              "%%MIDI program " + std::to_string(*v.midi_program) + " outside 0-127", std::nullopt,
                              std::nullopt});
        for (std::size_t i = 0; i < v.measures.size(); ++i) {
            const Measure& m = v.measures[i];
            for (const auto& cs : chord_symbols(m))
                if (!is_well_formed_chord_symbol(cs.text))
                    issues.push_back({v.id, i, IssueKind::format_error, "malformed chord symbol \"" + cs.text + "\"",
                                      std::nullopt, std::nullopt});
            const Rational d = measure_duration(m, unit);
            if (d == meter) continue;
            if (i == 0 && d < meter) continue;  // pickup
            issues.push_back({v.id, i, IssueKind::duration_mismatch,
                              "measure lasts " + d.str() + " but M: requires " + meter.str(), meter, d});
        }
    }
    return issues;
}

bool has_duration_mismatch(const std::vector<ValidationIssue>& issues) {
    return std::any_of(issues.begin(), issues.end(),
                       [](const ValidationIssue& i) { return i.kind == IssueKind::duration_mismatch; });
}

std::vector<Rational> rest_decomposition(const Rational& deficit, const Rational& unit) {
    static const std::vector<Rational> candidates = [] {
        std::vector<Rational> c;
        for (int k = -1; k <= 6; ++k) {
            Rational plain = k < 0 ? Rational(2) : Rational(1, std::int64_t{1} << k);
            c.push_back(plain * Rational(3, 2));
            c.push_back(plain);
        }
        return c;
    }();
    std::vector<Rational> out;
    Rational remaining = deficit;
    for (const Rational& c : candidates) {
        while (c <= remaining) {
            out.push_back(c / unit);
            remaining -= c;
        }
    }
    if (remaining > Rational(0)) out.push_back(remaining / unit);
    return out;
}

namespace {

void pad_with_rests(Measure& m, const Rational& deficit, const Rational& unit) {
    bool first = true;
    for (const Rational& len : rest_decomposition(deficit, unit)) {
        Event r;
        r.kind = EventKind::rest;
        r.length = len;
        r.space_before = !m.events.empty();
        if (first) {
            // annotations that sat at the old end now mark the first rest
            r.annotations = std::move(m.trailing);
            m.trailing.clear();
            first = false;
        }
        m.events.push_back(std::move(r));
    }
}

bool divisible(const Event& e) {
    return e.kind == EventKind::note || e.kind == EventKind::rest || e.kind == EventKind::chord;
}

struct Crossing {
    std::size_t index;  // first event that ends past the bar
    Rational onset;
};

std::optional<Crossing> find_crossing(const Measure& m, const Rational& meter, const Rational& unit) {
    Rational onset;
    for (std::size_t k = 0; k < m.events.size(); ++k) {
        const Rational d = event_duration(m.events[k], unit);
        if (onset + d > meter) return Crossing{k, onset};
        onset += d;
    }
    return std::nullopt;
}

}  // namespace

RepairResult repair(const Tune& input) {
    RepairResult res{input, {}};
    Tune& t = res.tune;
    const TuneHeader& h = t.header;
    const Rational meter = h.meter.duration();
    const Rational unit = h.unit_note_length;

    // format fixes
    int max_id = 0;
    for (const Voice& v : t.voices) max_id = std::max(max_id, v.id);
    std::set<int> seen;
    for (Voice& v : t.voices) {
        if (!seen.insert(v.id).second) {
            const int old = v.id;
            v.id = ++max_id;
            seen.insert(v.id);
            res.actions.push_back({v.id, std::nullopt, RepairKind::renumber_voice,
                                   "duplicate voice id " + std::to_string(old) + " renumbered to " + std::to_string(v.id),
                                   {}, {}});
        }
        if (!v.declared && t.voices.size() > 1) {
            v.declared = true;
            res.actions.push_back({v.id, std::nullopt, RepairKind::declare_voice,
                                   "added V:" + std::to_string(v.id) + " label", {}, {}});
        }
        if (v.midi_program && (*v.midi_program < 0 || *v.midi_program > 127)) {
            const int old = *v.midi_program;
            v.midi_program = std::clamp(old, 0, 127);
            res.actions.push_back({v.id, std::nullopt, RepairKind::clamp_program,
                                   "%%MIDI program " + std::to_string(old) + " clamped to " +
                                       std::to_string(*v.midi_program),
                                   {}, {}});
        }
        for (std::size_t i = 0; i < v.measures.size(); ++i) {
            Measure& m = v.measures[i];
            const std::string before = serialize_measure(m, h);
            auto bad = [](const Annotation& a) {
                return a.kind == AnnotationKind::chord_symbol && !is_well_formed_chord_symbol(a.text);
            };
            std::size_t dropped = 0;
            for (Event& e : m.events) dropped += std::erase_if(e.annotations, bad);
            dropped += std::erase_if(m.trailing, bad);
            if (dropped > 0)
                res.actions.push_back({v.id, i, RepairKind::drop_chord_symbol,
                                       "removed " + std::to_string(dropped) + " malformed chord symbol(s)", before,
                                       serialize_measure(m, h)});
        }
    }

    // timing fixes
    for (Voice& v : t.voices) {
        for (std::size_t i = 0; i < v.measures.size(); ++i) {
            Measure& m = v.measures[i];
            const Rational d = measure_duration(m, unit);
            if (d == meter || (i == 0 && d < meter)) continue;
            const std::string before = serialize_measure(m, h);
            auto record = [&](RepairKind kind, std::string detail) {
                res.actions.push_back({v.id, i, kind, std::move(detail), before, serialize_measure(m, h)});
            };

            if (d < meter) {
                pad_with_rests(m, meter - d, unit);
                record(RepairKind::pad_rests, "appended rests for " + (meter - d).str());
                continue;
            }

            auto cross = find_crossing(m, meter, unit);
            // d > meter guarantees a crossing event exists
            if (cross->onset >= meter) {
                const auto removed = m.events.size() - cross->index;
                m.events.erase(m.events.begin() + static_cast<std::ptrdiff_t>(cross->index), m.events.end());
                record(RepairKind::delete_events, "removed " + std::to_string(removed) + " event(s) past the bar");
                continue;
            }

            const std::size_t k = cross->index;
            const std::size_t trailing_count = m.events.size() - k - 1;
            if (trailing_count > 0)
                m.events.erase(m.events.begin() + static_cast<std::ptrdiff_t>(k + 1), m.events.end());
            Event& e = m.events[k];
            const Rational room = meter - cross->onset;
            const Rational overflow = event_duration(e, unit) - room;

            if (!divisible(e)) {
                if (cross->onset.is_zero())
                    throw RepairError(v.id, i, "indivisible group longer than the meter at the start of the measure");
                m.events.erase(m.events.begin() + static_cast<std::ptrdiff_t>(k));
                pad_with_rests(m, room, unit);
                record(RepairKind::delete_events, "replaced a group crossing the bar with rests");
                continue;
            }

            const bool can_split = trailing_count == 0 && i + 1 < v.measures.size() &&
                                   measure_duration(v.measures[i + 1], unit) + overflow <= meter;
            if (can_split) {
                Event tail = e;
                tail.annotations.clear();
                tail.space_before = false;
                tail.length = overflow / unit;
                e.length = room / unit;
                e.slur_closes = 0;
                if (e.kind != EventKind::rest) e.tie = true;
                Measure& next = v.measures[i + 1];
                const std::string next_before = serialize_measure(next, h);
                if (!next.events.empty()) next.events.front().space_before = true;
                next.events.insert(next.events.begin(), std::move(tail));
                record(RepairKind::split_tie, "split the last event at the bar, carrying " + overflow.str() + " over");
                res.actions.push_back({v.id, i + 1, RepairKind::receive_tied,
                                       "received " + overflow.str() + " carried from the previous measure",
                                       next_before, serialize_measure(next, h)});
                continue;
            }

            e.length = room / unit;
            record(RepairKind::shorten_event, "shortened the last event by " + overflow.str() +
                                                  (trailing_count > 0 ? " and removed " + std::to_string(trailing_count) +
                                                                            " event(s) past the bar"
                                                                      : ""));
        }
    }
    return res;
}

std::string to_string(IssueKind k) {
    return k == IssueKind::duration_mismatch ? "duration_mismatch" : "format_error";
}

std::string to_string(RepairKind k) {
    switch (k) {
        case RepairKind::pad_rests: return "pad_rests";
        case RepairKind::shorten_event: return "shorten_event";
        case RepairKind::delete_events: return "delete_events";
        case RepairKind::split_tie: return "split_tie";
        case RepairKind::receive_tied: return "receive_tied";
        case RepairKind::declare_voice: return "declare_voice";
        case RepairKind::renumber_voice: return "renumber_voice";
        case RepairKind::clamp_program: return "clamp_program";
        case RepairKind::drop_chord_symbol: return "drop_chord_symbol";
    }
    return "unknown";
}

nlohmann::json to_json(const ValidationIssue& issue) {
    nlohmann::json j{{"voice_id", issue.voice_id},
                     {"measure_index", nullptr},
                     {"kind", to_string(issue.kind)},
                     {"detail", issue.detail}};
    if (issue.measure_index) j["measure_index"] = *issue.measure_index;
    if (issue.expected) j["expected"] = issue.expected->str();
    if (issue.actual) j["actual"] = issue.actual->str();
    return j;
}

nlohmann::json to_json(const RepairAction& a) {
    nlohmann::json j{{"voice_id", a.voice_id},
                     {"measure_index", nullptr},
                     {"kind", to_string(a.kind)},
                     {"detail", a.detail},
                     {"before", a.before},
                     {"after", a.after}};
    if (a.measure_index) j["measure_index"] = *a.measure_index;
    return j;
}

nlohmann::json to_json(const std::vector<ValidationIssue>& issues) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& i : issues) arr.push_back(to_json(i));
    return arr;
}

nlohmann::json to_json(const std::vector<RepairAction>& actions) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : actions) arr.push_back(to_json(a));
    return arr;
}

}  // namespace ensemble::abc
