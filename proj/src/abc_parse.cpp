#include <algorithm>
#include <cctype>
#include <charconv>

#include "ensemble/abc.hpp"

namespace ensemble::abc {

ParseError::ParseError(int line, int column, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line),
      column_(column),
      message_(message) {}

int KeySpec::fifths() const {
    int base = 0;
    switch (tonic) {
        case 'F': base = -1; break;
        case 'C': base = 0; break;
        case 'G': base = 1; break;
        case 'D': base = 2; break;
        case 'A': base = 3; break;
        case 'E': base = 4; break;
        case 'B': base = 5; break;
        default: break;
    }
    base += 7 * accidental;
    if (mode == Mode::minor) base -= 3;
    return base;
}

int KeySpec::signature_offset(char letter) const {
    static constexpr std::string_view sharp_order = "FCGDAEB";
    static constexpr std::string_view flat_order = "BEADGCF";
    int f = fifths();
    if (f > 0) {
        auto idx = sharp_order.find(letter);
        return idx != std::string_view::npos && static_cast<int>(idx) < f ? 1 : 0;
    }
    if (f < 0) {
        auto idx = flat_order.find(letter);
        return idx != std::string_view::npos && static_cast<int>(idx) < -f ? -1 : 0;
    }
    return 0;
}

std::string KeySpec::str() const {
    std::string s(1, tonic);
    if (accidental > 0) s += '#';
    if (accidental < 0) s += 'b';
    if (mode == Mode::minor) s += 'm';
    return s;
}

int default_tuplet_q(int p, const Meter& meter) {
    switch (p) {
        case 2: return 3;
        case 3: return 2;
        case 4: return 3;
        case 6: return 2;
        case 8: return 3;
        default: return meter.is_compound() ? 3 : 2;
    }
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool is_note_letter(char c) { return (c >= 'A' && c <= 'G') || (c >= 'a' && c <= 'g'); }

bool is_field_line(std::string_view line) {
    if (line.size() < 2 || !std::isalpha(static_cast<unsigned char>(line[0])) || line[1] != ':') return false;
    // "B:|" is a note followed by a repeat bar, not a field
    auto rest = trim(line.substr(2));
    return rest.empty() || rest.front() != '|';
}

/// Cut a trailing % comment, ignoring % inside quotes and escaped \%.
std::string_view strip_comment(std::string_view s) {
    bool in_quote = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_quote = !in_quote;
        if (s[i] == '%' && !in_quote && (i == 0 || s[i - 1] != '\\')) return s.substr(0, i);
    }
    return s;
}

std::optional<int> to_int(std::string_view s) {
    s = trim(s);
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::optional<Rational> to_rational(std::string_view s) {
    try {
        return Rational::parse(trim(s));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

struct VoiceBuild {
    Measure cur;
    bool has_content = false;
    bool pending_open = false;
    bool pending_space = false;
    std::vector<Annotation> pending;
    int tuplet_remaining = 0;
    Event* last_event = nullptr;
};

class Parser {
public:
    explicit Parser(std::string_view source) {
        std::size_t start = 0;
        while (start <= source.size()) {
            auto nl = source.find('\n', start);
            std::string_view line =
                nl == std::string_view::npos ? source.substr(start) : source.substr(start, nl - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines_.emplace_back(line);
            if (nl == std::string_view::npos) break;
            start = nl + 1;
        }
    }

    Tune run() {
        std::size_t i = parse_header();
        for (; i < lines_.size(); ++i) parse_body_line(lines_[i], static_cast<int>(i) + 1);
        finish();
        return std::move(tune_);
    }

private:
    [[noreturn]] void fail(int line, int col, const std::string& msg) const { throw ParseError(line, col, msg); }

    // ---- header -------------------------------------------------------

    std::size_t parse_header() {
        bool seen_field = false;
        bool seen_meter = false;
        bool seen_unit = false;
        bool seen_title = false;
        for (std::size_t i = 0; i < lines_.size(); ++i) {
            const int ln = static_cast<int>(i) + 1;
            std::string_view raw = lines_[i];
            std::string_view t = trim(raw);
            if (t.empty()) continue;
            if (t.starts_with("%%")) {
                handle_directive(t, ln);
                continue;
            }
            if (t.starts_with("%")) continue;
            if (!is_field_line(t)) {
                if (!seen_field) fail(ln, 1, "expected ABC header field (X:, T:, M:, L:, K:)");
                fail(ln, 1, "music before the K: header line");
            }
            seen_field = true;
            const char field = t[0];
            if (field == 'V') {
                handle_voice_field(t, ln);
                continue;
            }
            std::string_view value = trim(strip_comment(t.substr(2)));
            switch (field) {
                case 'X': {
                    auto v = to_int(value);
                    if (!v || *v < 0) fail(ln, 3, "X: needs a non-negative integer");
                    tune_.header.reference_number = *v;
                    break;
                }
                case 'T':
                    if (!seen_title) {
                        tune_.header.title = std::string(value);
                        seen_title = true;
                    } else {
                        tune_.header.extra_fields.emplace_back('T', std::string(value));
                    }
                    break;
                case 'M':
                    tune_.header.meter = parse_meter(value, ln);
                    seen_meter = true;
                    break;
                case 'L': {
                    auto r = to_rational(value);
                    if (!r || *r <= Rational(0)) fail(ln, 3, "L: needs a positive fraction");
                    tune_.header.unit_note_length = *r;
                    seen_unit = true;
                    break;
                }
                case 'Q':
                    tune_.header.tempo = parse_tempo(value, ln, seen_unit);
                    break;
                case 'K':
                    tune_.header.key = parse_key(value, ln);
                    if (!seen_meter) fail(ln, 1, "missing M: header before K:");
                    if (!seen_unit) {
                        // standard default: 1/16 below 3/4, otherwise 1/8
                        tune_.header.unit_note_length =
                            tune_.header.meter.duration() < Rational(3, 4) ? Rational(1, 16) : Rational(1, 8);
                        if (tune_.header.tempo && tempo_uses_unit_) tune_.header.tempo->beat_unit = tune_.header.unit_note_length;
                    }
                    return i + 1;
                default:
                    tune_.header.extra_fields.emplace_back(field, std::string(value));
                    break;
            }
        }
        fail(static_cast<int>(lines_.size()), 1, seen_field ? "missing K: header line" : "empty ABC source");
    }

    Meter parse_meter(std::string_view v, int ln) {
        if (v == "C") return Meter{4, 4};
        if (v == "C|") return Meter{2, 2};
        auto slash = v.find('/');
        if (slash == std::string_view::npos) fail(ln, 3, "unsupported meter '" + std::string(v) + "'");
        auto n = to_int(v.substr(0, slash));
        auto d = to_int(v.substr(slash + 1));
        if (!n || !d || *n <= 0 || *d <= 0) fail(ln, 3, "unsupported meter '" + std::string(v) + "'");
        return Meter{*n, *d};
    }

    TempoSpec parse_tempo(std::string_view v, int ln, bool unit_known) {
        // drop quoted tempo text such as "Allegro"
        std::string cleaned;
        bool in_quote = false;
        for (char c : v) {
            if (c == '"') {
                in_quote = !in_quote;
                continue;
            }
            if (!in_quote) cleaned += c;
        }
        if (in_quote) fail(ln, 3, "unbalanced quote in Q:");
        std::string_view s = trim(cleaned);
        TempoSpec t;
        auto eq = s.find('=');
        if (eq == std::string_view::npos) {
            auto bpm = to_int(s);
            if (!bpm || *bpm <= 0) fail(ln, 3, "unsupported tempo '" + std::string(v) + "'");
            t.beat_unit = tune_.header.unit_note_length;
            t.beats_per_minute = *bpm;
            tempo_uses_unit_ = !unit_known;
            return t;
        }
        auto beat = to_rational(s.substr(0, eq));
        auto bpm = to_int(s.substr(eq + 1));
        if (!beat || *beat <= Rational(0) || !bpm || *bpm <= 0)
            fail(ln, 3, "unsupported tempo '" + std::string(v) + "'");
        t.beat_unit = *beat;
        t.beats_per_minute = *bpm;
        tempo_uses_unit_ = false;
        return t;
    }

    KeySpec parse_key(std::string_view v, int ln) {
        std::vector<std::string_view> words;
        std::size_t p = 0;
        while (p < v.size()) {
            while (p < v.size() && std::isspace(static_cast<unsigned char>(v[p]))) ++p;
            std::size_t q = p;
            while (q < v.size() && !std::isspace(static_cast<unsigned char>(v[q]))) ++q;
            if (q > p) words.push_back(v.substr(p, q - p));
            p = q;
        }
        if (words.empty()) fail(ln, 3, "empty K: field");
        std::string_view w = words[0];
        KeySpec k;
        char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        if (letter < 'A' || letter > 'G') fail(ln, 3, "unsupported key '" + std::string(v) + "'");
        k.tonic = letter;
        std::size_t i = 1;
        if (i < w.size() && (w[i] == '#' || w[i] == 'b')) {
            k.accidental = w[i] == '#' ? 1 : -1;
            ++i;
        }
        std::string mode(w.substr(i));
        if (mode.empty() && words.size() > 1 && words[1].find('=') == std::string_view::npos) mode = words[1];
        std::transform(mode.begin(), mode.end(), mode.begin(), [](unsigned char c) { return std::tolower(c); });
        if (mode.empty() || mode == "maj" || mode == "major" || mode == "ion" || mode == "ionian") {
            k.mode = Mode::major;
        } else if (mode == "m" || mode == "min" || mode == "minor" || mode == "aeo" || mode == "aeolian") {
            k.mode = Mode::minor;
        } else {
            fail(ln, 3, "modal or unsupported key '" + std::string(v) + "' (major and minor only)");
        }
        if (k.fifths() < -7 || k.fifths() > 7) fail(ln, 3, "key '" + std::string(v) + "' has more than 7 accidentals");
        return k;
    }

    // ---- voices -------------------------------------------------------

    std::size_t find_voice(int id) const {
        for (std::size_t i = tune_.voices.size(); i-- > 0;)
            if (tune_.voices[i].id == id) return i;
        return npos;
    }

    std::size_t add_voice(Voice v) {
        if (pending_program_ && !v.midi_program) v.midi_program = pending_program_;
        pending_program_.reset();
        tune_.voices.push_back(std::move(v));
        builds_.emplace_back();
        return tune_.voices.size() - 1;
    }

    static std::optional<int> parse_program(std::string_view directive) {
        // "%%MIDI program [channel] N"
        auto rest = trim(directive.substr(2));
        if (!rest.starts_with("MIDI")) return std::nullopt;
        rest = trim(rest.substr(4));
        if (!rest.starts_with("program")) return std::nullopt;
        rest = trim(strip_comment(rest.substr(7)));
        auto sp = rest.find_last_of(" \t");
        auto last = sp == std::string_view::npos ? rest : rest.substr(sp + 1);
        return to_int(last);
    }

    void handle_directive(std::string_view t, int ln) {
        if (!t.starts_with("%%MIDI")) return;
        auto rest = trim(t.substr(6));
        if (!rest.starts_with("program")) return;
        auto prog = parse_program(t);
        if (!prog) fail(ln, 1, "malformed %%MIDI program directive");
        if (current_ != npos)
            tune_.voices[current_].midi_program = *prog;
        else if (!tune_.voices.empty() && in_header_)
            tune_.voices.back().midi_program = *prog;
        else
            pending_program_ = *prog;
    }

    void handle_voice_field(std::string_view line, int ln) {
        std::string_view spec = line.substr(2);
        std::optional<int> program;
        // inline "%%MIDI program N" on the V: line
        {
            bool in_quote = false;
            for (std::size_t i = 0; i + 1 < spec.size(); ++i) {
                if (spec[i] == '"') in_quote = !in_quote;
                if (!in_quote && spec[i] == '%' && spec[i + 1] == '%') {
                    program = parse_program(spec.substr(i));
                    if (!program) fail(ln, static_cast<int>(i) + 3, "malformed %%MIDI program on V: line");
                    spec = spec.substr(0, i);
                    break;
                }
            }
        }
        spec = trim(strip_comment(spec));
        std::size_t p = 0;
        while (p < spec.size() && !std::isspace(static_cast<unsigned char>(spec[p]))) ++p;
        auto id = to_int(spec.substr(0, p));
        if (!id || *id <= 0) fail(ln, 3, "voice id must be a positive integer, got '" + std::string(spec.substr(0, p)) + "'");

        std::string name;
        std::vector<std::string> extras;
        while (p < spec.size()) {
            while (p < spec.size() && std::isspace(static_cast<unsigned char>(spec[p]))) ++p;
            if (p >= spec.size()) break;
            std::size_t q = p;
            bool in_quote = false;
            while (q < spec.size() && (in_quote || !std::isspace(static_cast<unsigned char>(spec[q])))) {
                if (spec[q] == '"') in_quote = !in_quote;
                ++q;
            }
            if (in_quote) fail(ln, static_cast<int>(p) + 3, "unbalanced quote in V: line");
            std::string_view attr = spec.substr(p, q - p);
            if (attr.starts_with("name=") || attr.starts_with("nm=")) {
                auto val = attr.substr(attr.find('=') + 1);
                if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
                if (val.find('"') != std::string_view::npos) fail(ln, static_cast<int>(p) + 3, "malformed voice name");
                name = std::string(val);
            } else {
                extras.emplace_back(attr);
            }
            p = q;
        }

        std::size_t idx = find_voice(*id);
        const bool conflicting = idx != npos && !name.empty() && !tune_.voices[idx].name.empty() &&
                                 tune_.voices[idx].name != name && tune_.voices[idx].declared;
        if (idx == npos || conflicting) {
            Voice v;
            v.id = *id;
            v.name = name;
            v.extra_attributes = std::move(extras);
            v.midi_program = program;
            idx = add_voice(std::move(v));
        } else {
            Voice& v = tune_.voices[idx];
            v.declared = true;
            if (!name.empty()) v.name = name;
            if (!extras.empty()) v.extra_attributes = std::move(extras);
            if (program) v.midi_program = program;
        }
        if (!in_header_) current_ = idx;
    }

    std::size_t ensure_voice() {
        if (current_ != npos) return current_;
        if (!tune_.voices.empty()) {
            current_ = 0;
            return current_;
        }
        Voice v;
        v.id = 1;
        v.declared = false;
        current_ = add_voice(std::move(v));
        return current_;
    }

    // ---- body ---------------------------------------------------------

    void parse_body_line(std::string_view raw, int ln) {
        in_header_ = false;
        std::string_view t = trim(raw);
        if (t.empty()) return;
        if (t.starts_with("%%")) {
            handle_directive(t, ln);
            return;
        }
        if (t.starts_with("%")) return;
        if (is_field_line(t)) {
            switch (t[0]) {
                case 'V': handle_voice_field(t, ln); return;
                case 'M': fail(ln, 1, "mid-tune meter change (M:) is not supported");
                case 'L': fail(ln, 1, "mid-tune unit length change (L:) is not supported");
                case 'K': fail(ln, 1, "mid-tune key change (K:) is not supported");
                case 'Q': fail(ln, 1, "mid-tune tempo change (Q:) is not supported");
                case 'X': fail(ln, 1, "more than one tune in the source");
                default: return;  // lyrics, parts, notes and the like carry no timing
            }
        }
        std::string_view music = strip_comment(raw);
        parse_music(music, ln);
        if (current_ != npos) {
            auto& vb = builds_[current_];
            auto& measures = tune_.voices[current_].measures;
            if (!vb.has_content && !measures.empty()) measures.back().line_break = true;
        }
    }

    void parse_music(std::string_view s, int ln) {
        std::size_t i = 0;
        auto col = [&](std::size_t at) { return static_cast<int>(at) + 1; };
        while (i < s.size()) {
            const char c = s[i];
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (current_ != npos) builds_[current_].pending_space = true;
                ++i;
                continue;
            }
            if (c == '`' || c == 'y' || c == '\\') {
                ++i;
                continue;
            }
            if (c == '[' && i + 2 < s.size() && std::isalpha(static_cast<unsigned char>(s[i + 1])) && s[i + 2] == ':') {
                i = parse_inline_field(s, i, ln);
                continue;
            }
            if (c == '|' || c == ':' || (c == '[' && i + 1 < s.size() && s[i + 1] == '|')) {
                i = parse_bar(s, i, ln);
                continue;
            }
            ensure_voice();
            VoiceBuild& vb = builds_[current_];
            if (c == '"') {
                auto end = s.find('"', i + 1);
                if (end == std::string_view::npos) fail(ln, col(i), "unbalanced quote");
                std::string text(s.substr(i + 1, end - i - 1));
                bool positioned = !text.empty() && std::string_view("^_<>@").find(text[0]) != std::string_view::npos;
                add_annotation({positioned ? AnnotationKind::text : AnnotationKind::chord_symbol, std::move(text)});
                i = end + 1;
                continue;
            }
            if (c == '!' || c == '+') {
                auto end = s.find(c, i + 1);
                if (end == std::string_view::npos) fail(ln, col(i), std::string("unterminated decoration ") + c);
                add_annotation({AnnotationKind::decoration, std::string(s.substr(i, end - i + 1))});
                i = end + 1;
                continue;
            }
            if (std::string_view(".~HLMOPSTuv").find(c) != std::string_view::npos) {
                add_annotation({AnnotationKind::decoration, std::string(1, c)});
                ++i;
                continue;
            }
            if (c == '(') {
                if (i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
                    i = parse_tuplet(s, i, ln);
                } else {
                    add_annotation({AnnotationKind::slur_open, "("});
                    ++i;
                }
                continue;
            }
            if (c == ')') {
                if (vb.last_event)
                    vb.last_event->slur_closes++;
                else
                    add_annotation({AnnotationKind::slur_close, ")"});
                ++i;
                continue;
            }
            if (c == '{') {
                i = parse_grace(s, i, ln);
                continue;
            }
            if (c == '[') {
                i = parse_chord(s, i, ln);
                continue;
            }
            if (c == 'z') {
                Event e;
                e.kind = EventKind::rest;
                i = parse_length(s, i + 1, ln, e.length);
                add_event(std::move(e));
                continue;
            }
            if (is_note_letter(c) || c == '^' || c == '_' || c == '=') {
                Event e;
                e.kind = EventKind::note;
                Pitch p;
                i = parse_pitch(s, i, ln, p);
                e.pitches.push_back(p);
                i = parse_length(s, i, ln, e.length);
                if (i < s.size() && s[i] == '-') {
                    e.tie = true;
                    ++i;
                }
                add_event(std::move(e));
                continue;
            }
            if (c == '>' || c == '<') fail(ln, col(i), "broken rhythm (> <) is not supported");
            if (c == 'x' || c == 'Z' || c == 'X') fail(ln, col(i), std::string("unsupported rest '") + c + "'");
            if (c == '-') fail(ln, col(i), "tie without a preceding note");
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '/') fail(ln, col(i), "length without a note");
            fail(ln, col(i), std::string("unsupported character '") + c + "'");
        }
    }

    std::size_t parse_inline_field(std::string_view s, std::size_t i, int ln) {
        auto end = s.find(']', i);
        if (end == std::string_view::npos) fail(ln, static_cast<int>(i) + 1, "unterminated inline field");
        std::string_view field = s.substr(i + 1, end - i - 1);
        switch (field[0]) {
            case 'V': {
                handle_voice_field(field, ln);
                break;
            }
            case 'M': fail(ln, static_cast<int>(i) + 1, "mid-tune meter change (M:) is not supported");
            case 'L': fail(ln, static_cast<int>(i) + 1, "mid-tune unit length change (L:) is not supported");
            case 'K': fail(ln, static_cast<int>(i) + 1, "mid-tune key change (K:) is not supported");
            case 'Q': fail(ln, static_cast<int>(i) + 1, "mid-tune tempo change (Q:) is not supported");
            default: break;
        }
        return end + 1;
    }

    std::size_t parse_bar(std::string_view s, std::size_t i, int ln) {
        const int start_col = static_cast<int>(i) + 1;
        if (s[i] == '[') fail(ln, start_col, "thick-thin bar [| is not supported");
        std::size_t j = i;
        while (j < s.size() && (s[j] == '|' || s[j] == ':' || s[j] == ']')) ++j;
        std::string_view tok = s.substr(i, j - i);
        std::size_t lead = 0;
        while (lead < tok.size() && tok[lead] == ':') ++lead;
        std::size_t trail = 0;
        while (trail < tok.size() - lead && tok[tok.size() - 1 - trail] == ':') ++trail;
        std::string_view mid = tok.substr(lead, tok.size() - lead - trail);
        const bool close = lead > 0;
        const bool open = trail > 0;
        BarKind kind;
        if (mid == "|")
            kind = BarKind::single;
        else if (mid == "||")
            kind = BarKind::double_bar;
        else if (mid == "|]")
            kind = BarKind::final_bar;
        else if (mid.empty() && close && open)
            kind = BarKind::single;  // "::"
        else
            fail(ln, start_col, "unsupported bar line '" + std::string(tok) + "'");
        if (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) ||
                             (s[j] == '[' && j + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[j + 1])))))
            fail(ln, static_cast<int>(j) + 1, "volta brackets are not supported");
        ensure_voice();
        finish_measure(kind, close, open, ln, start_col);
        return j;
    }

    void finish_measure(BarKind kind, bool close, bool open, int ln, int col) {
        VoiceBuild& vb = builds_[current_];
        auto& measures = tune_.voices[current_].measures;
        if (vb.tuplet_remaining > 0) fail(ln, col, "tuplet crosses a bar line");
        if (vb.has_content) {
            vb.cur.trailing = std::move(vb.pending);
            vb.cur.end_bar = kind;
            vb.cur.close_repeat = close;
            vb.cur.open_repeat = vb.pending_open;
            measures.push_back(std::move(vb.cur));
            vb.cur = Measure{};
            vb.pending.clear();
            vb.pending_open = false;
            vb.has_content = false;
        } else if (!measures.empty()) {
            Measure& prev = measures.back();
            if (close) prev.close_repeat = true;
            if (kind != BarKind::single && prev.end_bar == BarKind::single) prev.end_bar = kind;
        }
        if (open) vb.pending_open = true;
        vb.pending_space = false;
        vb.last_event = nullptr;
    }

    std::size_t parse_pitch(std::string_view s, std::size_t i, int ln, Pitch& p) {
        const int col = static_cast<int>(i) + 1;
        if (s.substr(i).starts_with("^^")) {
            p.accidental = Accidental::double_sharp;
            i += 2;
        } else if (s.substr(i).starts_with("__")) {
            p.accidental = Accidental::double_flat;
            i += 2;
        } else if (s[i] == '^') {
            p.accidental = Accidental::sharp;
            ++i;
        } else if (s[i] == '_') {
            p.accidental = Accidental::flat;
            ++i;
        } else if (s[i] == '=') {
            p.accidental = Accidental::natural;
            ++i;
        }
        if (i >= s.size() || !is_note_letter(s[i])) fail(ln, col, "accidental without a note letter");
        const char letter = s[i++];
        p.letter = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
        p.octave = std::islower(static_cast<unsigned char>(letter)) ? 1 : 0;
        while (i < s.size() && (s[i] == '\'' || s[i] == ',')) {
            p.octave += s[i] == '\'' ? 1 : -1;
            ++i;
        }
        return i;
    }

    std::size_t parse_length(std::string_view s, std::size_t i, int ln, Rational& out) {
        const int col = static_cast<int>(i) + 1;
        auto read_int = [&](std::int64_t& v) {
            std::size_t start = i;
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (i == start) return false;
            if (i - start > 6) fail(ln, col, "note length out of range");
            v = std::stoll(std::string(s.substr(start, i - start)));
            return true;
        };
        std::int64_t num = 1;
        std::int64_t den = 1;
        read_int(num);
        while (i < s.size() && s[i] == '/') {
            ++i;
            std::int64_t d = 2;
            read_int(d);
            if (d == 0) fail(ln, col, "zero length denominator");
            den *= d;
            if (den > 1'000'000) fail(ln, col, "note length out of range");
        }
        if (num == 0) fail(ln, col, "zero note length");
        out = Rational(num, den);
        return i;
    }

    std::size_t parse_chord(std::string_view s, std::size_t i, int ln) {
        const int col = static_cast<int>(i) + 1;
        Event e;
        e.kind = EventKind::chord;
        ++i;
        std::optional<Rational> first_len;
        while (true) {
            if (i >= s.size()) fail(ln, col, "unbalanced [ chord");
            if (s[i] == ']') {
                ++i;
                break;
            }
            if (!(is_note_letter(s[i]) || s[i] == '^' || s[i] == '_' || s[i] == '='))
                fail(ln, static_cast<int>(i) + 1, std::string("unexpected '") + s[i] + "' inside chord");
            Pitch p;
            i = parse_pitch(s, i, ln, p);
            Rational len;
            i = parse_length(s, i, ln, len);
            if (!first_len) first_len = len;
            if (i < s.size() && s[i] == '-') {
                e.tie = true;
                ++i;
            }
            e.pitches.push_back(p);
        }
        if (e.pitches.empty()) fail(ln, col, "empty chord");
        Rational outer;
        i = parse_length(s, i, ln, outer);
        e.length = *first_len * outer;
        if (i < s.size() && s[i] == '-') {
            e.tie = true;
            ++i;
        }
        add_event(std::move(e));
        return i;
    }

    std::size_t parse_grace(std::string_view s, std::size_t i, int ln) {
        const int col = static_cast<int>(i) + 1;
        Event g;
        g.kind = EventKind::grace;
        ++i;
        if (i < s.size() && s[i] == '/') {
            g.acciaccatura = true;
            ++i;
        }
        while (true) {
            if (i >= s.size()) fail(ln, col, "unbalanced { grace group");
            if (s[i] == '}') {
                ++i;
                break;
            }
            if (std::isspace(static_cast<unsigned char>(s[i]))) {
                ++i;
                continue;
            }
            if (!(is_note_letter(s[i]) || s[i] == '^' || s[i] == '_' || s[i] == '='))
                fail(ln, static_cast<int>(i) + 1, std::string("unexpected '") + s[i] + "' inside grace group");
            Event n;
            n.kind = EventKind::note;
            Pitch p;
            i = parse_pitch(s, i, ln, p);
            n.pitches.push_back(p);
            i = parse_length(s, i, ln, n.length);
            g.children.push_back(std::move(n));
        }
        if (g.children.empty()) fail(ln, col, "empty grace group");
        add_event(std::move(g));
        return i;
    }

    std::size_t parse_tuplet(std::string_view s, std::size_t i, int ln) {
        const int col = static_cast<int>(i) + 1;
        VoiceBuild& vb = builds_[current_];
        if (vb.tuplet_remaining > 0) fail(ln, col, "nested tuplets are not supported");
        ++i;
        auto read = [&]() -> std::optional<int> {
            std::size_t start = i;
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (i == start) return std::nullopt;
            return std::stoi(std::string(s.substr(start, std::min<std::size_t>(i - start, 3))));
        };
        int p = *read();
        std::optional<int> q;
        std::optional<int> r;
        if (i < s.size() && s[i] == ':') {
            ++i;
            q = read();
            if (i < s.size() && s[i] == ':') {
                ++i;
                r = read();
            }
        }
        if (p < 2 || p > 9) fail(ln, col, "tuplet size must be between 2 and 9");
        Event t;
        t.kind = EventKind::tuplet;
        t.tuplet_p = p;
        t.tuplet_q = q.value_or(default_tuplet_q(p, tune_.header.meter));
        t.tuplet_r = r.value_or(p);
        if (t.tuplet_q <= 0 || t.tuplet_r <= 0) fail(ln, col, "malformed tuplet");
        add_event(std::move(t));
        vb.tuplet_remaining = builds_[current_].cur.events.back().tuplet_r;
        return i;
    }

    void add_annotation(Annotation a) {
        VoiceBuild& vb = builds_[ensure_voice()];
        vb.pending.push_back(std::move(a));
        vb.has_content = true;
    }

    void add_event(Event e) {
        VoiceBuild& vb = builds_[ensure_voice()];
        e.annotations = std::move(vb.pending);
        vb.pending.clear();
        const bool is_tuplet_start = e.kind == EventKind::tuplet;
        if (vb.tuplet_remaining > 0) {
            Event& group = vb.cur.events.back();
            e.space_before = !group.children.empty() && vb.pending_space;
            vb.pending_space = false;
            const bool counts = e.kind != EventKind::grace;
            group.children.push_back(std::move(e));
            vb.last_event = &group.children.back();
            if (counts) vb.tuplet_remaining--;
        } else {
            e.space_before = !vb.cur.events.empty() && vb.pending_space;
            vb.pending_space = false;
            vb.cur.events.push_back(std::move(e));
            vb.last_event = is_tuplet_start ? nullptr : &vb.cur.events.back();
        }
        vb.has_content = true;
    }

    void finish() {
        for (std::size_t v = 0; v < builds_.size(); ++v) {
            VoiceBuild& vb = builds_[v];
            if (vb.tuplet_remaining > 0)
                fail(static_cast<int>(lines_.size()), 1, "tuplet is missing notes at the end of the tune");
            if (vb.has_content) {
                vb.cur.trailing = std::move(vb.pending);
                vb.cur.end_bar = BarKind::none;
                vb.cur.open_repeat = vb.pending_open;
                tune_.voices[v].measures.push_back(std::move(vb.cur));
            }
            if (!tune_.voices[v].measures.empty()) tune_.voices[v].measures.back().line_break = true;
        }
        bool any_music = std::any_of(tune_.voices.begin(), tune_.voices.end(),
                                     [](const Voice& v) { return !v.measures.empty(); });
        if (!any_music) fail(static_cast<int>(lines_.size()), 1, "tune has no music");
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::vector<std::string> lines_;
    Tune tune_;
    std::vector<VoiceBuild> builds_;
    std::size_t current_ = npos;
    std::optional<int> pending_program_;
    bool in_header_ = true;
    bool tempo_uses_unit_ = false;
};

}  // namespace

Tune parse_abc(std::string_view source) {
    Parser p(source);
    return p.run();
}

std::vector<ChordSymbolRef> chord_symbols(const Measure& m) {
    std::vector<ChordSymbolRef> out;
    for (std::size_t i = 0; i < m.events.size(); ++i)
        for (const auto& a : m.events[i].annotations)
            if (a.kind == AnnotationKind::chord_symbol) out.push_back({i, a.text});
    for (const auto& a : m.trailing)
        if (a.kind == AnnotationKind::chord_symbol) out.push_back({m.events.size(), a.text});
    return out;
}

}  // namespace ensemble::abc
