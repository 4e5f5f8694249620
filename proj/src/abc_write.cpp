#include <cctype>

#include "ensemble/abc.hpp"

namespace ensemble::abc {

namespace {

std::string length_suffix(const Rational& len) {
    if (len == Rational(1)) return {};
    if (len.is_integer()) return std::to_string(len.num());
    if (len.num() == 1) return "/" + std::to_string(len.den());
    return len.fraction_str();
}

std::string pitch_text(const Pitch& p) {
    std::string s;
    switch (p.accidental) {
        case Accidental::none: break;
        case Accidental::natural: s += '='; break;
        case Accidental::sharp: s += '^'; break;
        case Accidental::flat: s += '_'; break;
        case Accidental::double_sharp: s += "^^"; break;
        case Accidental::double_flat: s += "__"; break;
    }
    if (p.octave >= 1) {
        s += static_cast<char>(std::tolower(static_cast<unsigned char>(p.letter)));
        s.append(static_cast<std::size_t>(p.octave - 1), '\'');
    } else {
        s += p.letter;
        s.append(static_cast<std::size_t>(-p.octave), ',');
    }
    return s;
}

std::string annotation_text(const Annotation& a) {
    switch (a.kind) {
        case AnnotationKind::chord_symbol:
        case AnnotationKind::text: return "\"" + a.text + "\"";
        case AnnotationKind::decoration: return a.text;
        case AnnotationKind::slur_open: return "(";
        case AnnotationKind::slur_close: return ")";
    }
    return {};
}

std::string bar_text(BarKind kind, bool close) {
    std::string s = close ? ":" : "";
    switch (kind) {
        case BarKind::none: return close ? ":|" : "";
        case BarKind::single: return s + "|";
        case BarKind::double_bar: return s + "||";
        case BarKind::final_bar: return s + "|]";
    }
    return s;
}

std::string event_sequence(const std::vector<Event>& events, const TuneHeader& h) {
    std::string s;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i > 0 && events[i].space_before) s += ' ';
        s += serialize_event(events[i], h);
    }
    return s;
}

}  // namespace

std::string serialize_event(const Event& e, const TuneHeader& h) {
    std::string s;
    for (const auto& a : e.annotations) s += annotation_text(a);
    switch (e.kind) {
        case EventKind::note:
            s += pitch_text(e.pitches.front()) + length_suffix(e.length);
            break;
        case EventKind::rest:
            s += "z" + length_suffix(e.length);
            break;
        case EventKind::chord:
            s += '[';
            for (const auto& p : e.pitches) s += pitch_text(p);
            s += ']' + length_suffix(e.length);
            break;
        case EventKind::tuplet: {
            s += "(" + std::to_string(e.tuplet_p);
            const bool default_q = e.tuplet_q == default_tuplet_q(e.tuplet_p, h.meter);
            if (!default_q || e.tuplet_r != e.tuplet_p) s += ":" + std::to_string(e.tuplet_q);
            if (e.tuplet_r != e.tuplet_p) s += ":" + std::to_string(e.tuplet_r);
            s += event_sequence(e.children, h);
            break;
        }
        case EventKind::grace:
            s += e.acciaccatura ? "{/" : "{";
            for (const auto& c : e.children) s += pitch_text(c.pitches.front()) + length_suffix(c.length);
            s += '}';
            break;
    }
    if (e.tie) s += '-';
    s.append(static_cast<std::size_t>(e.slur_closes), ')');
    return s;
}

std::string serialize_measure(const Measure& m, const TuneHeader& h) {
    std::string s;
    if (m.open_repeat) s += "|: ";
    s += event_sequence(m.events, h);
    if (!m.trailing.empty()) {
        if (!m.events.empty()) s += ' ';
        for (const auto& a : m.trailing) s += annotation_text(a);
    }
    std::string bar = bar_text(m.end_bar, m.close_repeat);
    if (!bar.empty()) s += " " + bar;
    return s;
}

std::string serialize_abc(const Tune& tune) {
    const TuneHeader& h = tune.header;
    std::string out;
    out += "X:" + std::to_string(h.reference_number) + "\n";
    out += "T:" + h.title + "\n";
    for (const auto& [field, value] : h.extra_fields) out += std::string(1, field) + ":" + value + "\n";
    out += "M:" + h.meter.str() + "\n";
    out += "L:" + h.unit_note_length.fraction_str() + "\n";
    if (h.tempo) out += "Q:" + h.tempo->beat_unit.fraction_str() + "=" + std::to_string(h.tempo->beats_per_minute) + "\n";
    out += "K:" + h.key.str() + "\n";
    for (const Voice& v : tune.voices) {
        if (v.declared) {
            out += "V:" + std::to_string(v.id);
            if (!v.name.empty()) out += " name=\"" + v.name + "\"";
            for (const auto& a : v.extra_attributes) out += " " + a;
            if (v.midi_program) out += " %%MIDI program " + std::to_string(*v.midi_program);
            out += "\n";
        } else if (v.midi_program) {
            out += "%%MIDI program " + std::to_string(*v.midi_program) + "\n";
        }
        bool line_open = false;
        for (std::size_t i = 0; i < v.measures.size(); ++i) {
            const Measure& m = v.measures[i];
            if (line_open) out += ' ';
            out += serialize_measure(m, h);
            line_open = true;
            if (m.line_break || i + 1 == v.measures.size()) {
                out += '\n';
                line_open = false;
            }
        }
    }
    return out;
}

Rational event_duration(const Event& e, const Rational& unit) {
    switch (e.kind) {
        case EventKind::note:
        case EventKind::rest:
        case EventKind::chord: return e.length * unit;
        case EventKind::grace: return Rational(0);
        case EventKind::tuplet: {
            Rational sum;
            for (const auto& c : e.children) sum += event_duration(c, unit);
            return sum * Rational(e.tuplet_q, e.tuplet_p);
        }
    }
    return Rational(0);
}

Rational measure_duration(const Measure& m, const Rational& unit) {
    Rational sum;
    for (const auto& e : m.events) sum += event_duration(e, unit);
    return sum;
}

std::vector<std::string> extract_abc_blocks(std::string_view message) {
    std::vector<std::string> blocks;
    std::size_t pos = 0;
    bool fenced = false;
    while (true) {
        auto open = message.find("```", pos);
        if (open == std::string_view::npos) break;
        fenced = true;
        // skip the info string ("```abc")
        auto body = message.find('\n', open + 3);
        if (body == std::string_view::npos) break;
        ++body;
        auto close = message.find("```", body);
        std::string_view content =
            close == std::string_view::npos ? message.substr(body) : message.substr(body, close - body);
        while (!content.empty() && (content.back() == '\n' || content.back() == '\r' || content.back() == ' '))
            content.remove_suffix(1);
        blocks.emplace_back(content);
        if (close == std::string_view::npos) break;
        pos = close + 3;
    }
    if (!fenced) {
        std::string_view t = message;
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.remove_prefix(1);
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
        if (t.starts_with("X:")) blocks.emplace_back(t);
    }
    return blocks;
}

}  // namespace ensemble::abc
