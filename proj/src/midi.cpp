#include "ensemble/midi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sys/wait.h>

#include "ensemble/lint.hpp"

namespace ensemble::midi {

using abc::Event;
using abc::EventKind;
using abc::Measure;

std::vector<Measure> expand_repeats(const abc::Voice& voice) {
    std::vector<Measure> out;
    std::size_t start = 0;
    bool open = false;
    for (std::size_t i = 0; i < voice.measures.size(); ++i) {
        const Measure& m = voice.measures[i];
        if (m.open_repeat) {
            if (open)
                throw StructureError("voice " + std::to_string(voice.id) + ": |: at measure " + std::to_string(i) +
                                     " while a repeat is already open");
            open = true;
            start = i;
        }
        out.push_back(m);
        if (m.close_repeat) {
            for (std::size_t j = start; j <= i; ++j) out.push_back(voice.measures[j]);
            start = i + 1;
            open = false;
        }
    }
    if (open) throw StructureError("voice " + std::to_string(voice.id) + ": |: without a matching :|");
    return out;
}

int microseconds_per_quarter(const std::optional<abc::TempoSpec>& tempo) {
    if (!tempo) return 500000;
    // quarters per minute = bpm * beat_unit / (1/4)
    const Rational qpm = Rational(tempo->beats_per_minute) * tempo->beat_unit * Rational(4);
    const Rational us = Rational(60'000'000) / qpm;
    return static_cast<int>(std::llround(us.to_double()));
}

int midi_key(const abc::Pitch& p, const abc::KeySpec& key,
             const std::vector<std::pair<std::pair<char, int>, int>>& measure_accidentals) {
    static constexpr int base[] = {9, 11, 0, 2, 4, 5, 7};  // A..G
    int k = 60 + base[p.letter - 'A'] + 12 * p.octave;
    int offset = key.signature_offset(p.letter);
    switch (p.accidental) {
        case abc::Accidental::none:
            for (auto it = measure_accidentals.rbegin(); it != measure_accidentals.rend(); ++it)
                if (it->first == std::pair{p.letter, p.octave}) {
                    offset = it->second;
                    break;
                }
            break;
        case abc::Accidental::natural: offset = 0; break;
        case abc::Accidental::sharp: offset = 1; break;
        case abc::Accidental::flat: offset = -1; break;
        case abc::Accidental::double_sharp: offset = 2; break;
        case abc::Accidental::double_flat: offset = -2; break;
    }
    return k + offset;
}

int channel_for_voice(std::size_t voice_index) {
    const int ch = voice_index < 9 ? static_cast<int>(voice_index) : static_cast<int>(voice_index) + 1;
    if (ch > 15) throw RenderError("more than 15 voices cannot be assigned MIDI channels");
    return ch;
}

namespace {

int accidental_offset(abc::Accidental a) {
    switch (a) {
        case abc::Accidental::sharp: return 1;
        case abc::Accidental::flat: return -1;
        case abc::Accidental::double_sharp: return 2;
        case abc::Accidental::double_flat: return -2;
        default: return 0;
    }
}

class VoiceRenderer {
public:
    VoiceRenderer(const abc::Tune& tune, const RenderConfig& cfg, int channel, Track& track)
        : tune_(tune), cfg_(cfg), channel_(channel), track_(track) {}

    std::int64_t render(const std::vector<Measure>& measures) {
        for (const Measure& m : measures) {
            accidentals_.clear();
            for (const Event& e : m.events) emit(e, Rational(1));
            for (const auto& a : m.trailing)
                if (a.kind == abc::AnnotationKind::chord_symbol) text(a.text);
        }
        release_all();
        return ticks(now_);
    }

private:
    std::int64_t ticks(const Rational& whole_notes) const {
        const Rational t = whole_notes * Rational(4 * cfg_.ticks_per_quarter);
        if (!t.is_integer())
            throw RenderError("duration " + whole_notes.str() + " is not representable at " +
                              std::to_string(cfg_.ticks_per_quarter) + " ticks per quarter");
        return t.num();
    }

    void text(const std::string& s) {
        MidiEvent ev;
        ev.tick = ticks(now_);
        ev.kind = MidiEventKind::text;
        ev.text = s;
        track_.events.push_back(std::move(ev));
    }

    void note(MidiEventKind kind, int key, std::int64_t tick) {
        MidiEvent ev;
        ev.tick = tick;
        ev.kind = kind;
        ev.channel = channel_;
        ev.key = key;
        ev.velocity = kind == MidiEventKind::note_on ? cfg_.default_velocity : 0;
        track_.events.push_back(ev);
    }

    void release_all() {
        for (int k : held_) note(MidiEventKind::note_off, k, ticks(now_));
        held_.clear();
    }

    void emit(const Event& e, const Rational& scale) {
        for (const auto& a : e.annotations)
            if (a.kind == abc::AnnotationKind::chord_symbol) text(a.text);
        const Rational unit = tune_.header.unit_note_length;
        switch (e.kind) {
            case EventKind::grace:
                for (const Event& g : e.children) record_accidental(g.pitches.front());
                return;
            case EventKind::tuplet:
                for (const Event& c : e.children) emit(c, scale * Rational(e.tuplet_q, e.tuplet_p));
                return;
            case EventKind::rest: {
                release_all();
                now_ += e.length * unit * scale;
                ticks(now_);
                return;
            }
            case EventKind::note:
            case EventKind::chord: break;
        }
        std::set<int> keys;
        for (const auto& p : e.pitches) {
            const int k = midi_key(p, tune_.header.key, accidentals_);
            record_accidental(p);
            if (k < 0 || k > 127) throw RenderError("pitch outside the MIDI key range");
            keys.insert(k);
        }
        const std::int64_t start = ticks(now_);
        for (auto it = held_.begin(); it != held_.end();) {
            if (!keys.contains(*it)) {
                note(MidiEventKind::note_off, *it, start);
                it = held_.erase(it);
            } else {
                ++it;
            }
        }
        for (int k : keys)
            if (!held_.contains(k)) note(MidiEventKind::note_on, k, start);
        now_ += e.length * unit * scale;
        const std::int64_t end = ticks(now_);
        if (e.tie) {
            held_ = keys;
        } else {
            for (int k : keys) note(MidiEventKind::note_off, k, end);
            held_.clear();
        }
    }

    void record_accidental(const abc::Pitch& p) {
        if (p.accidental != abc::Accidental::none)
            accidentals_.push_back({{p.letter, p.octave}, accidental_offset(p.accidental)});
    }

    const abc::Tune& tune_;
    const RenderConfig& cfg_;
    int channel_;
    Track& track_;
    Rational now_;
    std::set<int> held_;
    std::vector<std::pair<std::pair<char, int>, int>> accidentals_;
};

MidiEvent meta(MidiEventKind kind, std::int64_t tick) {
    MidiEvent e;
    e.kind = kind;
    e.tick = tick;
    return e;
}

void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t buf[5];
    int n = 0;
    buf[n++] = v & 0x7F;
    while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
    while (n > 0) out.push_back(buf[--n]);
}

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_meta(std::vector<std::uint8_t>& out, std::uint8_t type, const std::vector<std::uint8_t>& data) {
    out.push_back(0xFF);
    out.push_back(type);
    put_vlq(out, static_cast<std::uint32_t>(data.size()));
    out.insert(out.end(), data.begin(), data.end());
}

}  // namespace

Song build_song(const abc::Tune& tune, const RenderConfig& cfg) {
    if (cfg.ticks_per_quarter <= 0 || cfg.ticks_per_quarter % 96 != 0 || cfg.ticks_per_quarter > 0x7FFF)
        throw RenderError("ticks_per_quarter must be a positive multiple of 96");
    if (cfg.default_velocity < 1 || cfg.default_velocity > 127) throw RenderError("velocity must be within 1-127");
    for (const auto& i : abc::validate(tune))
        if (i.kind == abc::IssueKind::duration_mismatch) throw RenderError("tune is not valid: " + i.detail);
    for (const auto& v : tune.voices)
        if (v.midi_program && (*v.midi_program < 0 || *v.midi_program > 127))
            throw RenderError("voice " + std::to_string(v.id) + " has a MIDI program outside 0-127");

    const auto& h = tune.header;
    int pow2 = 0;
    while ((1 << pow2) < h.meter.denominator) ++pow2;
    if ((1 << pow2) != h.meter.denominator) throw RenderError("meter denominator must be a power of two");

    Song song;
    song.ticks_per_quarter = cfg.ticks_per_quarter;
    song.tracks.resize(tune.voices.size() + 1);

    std::int64_t longest = 0;
    for (std::size_t v = 0; v < tune.voices.size(); ++v) {
        const abc::Voice& voice = tune.voices[v];
        Track& tr = song.tracks[v + 1];
        const int ch = channel_for_voice(v);
        if (!voice.name.empty()) {
            auto e = meta(MidiEventKind::track_name, 0);
            e.text = voice.name;
            tr.events.push_back(e);
        }
        MidiEvent pc;
        pc.kind = MidiEventKind::program_change;
        pc.channel = ch;
        pc.program = voice.midi_program.value_or(0);
        tr.events.push_back(pc);
        VoiceRenderer r(tune, cfg, ch, tr);
        const std::int64_t end = r.render(expand_repeats(voice));
        std::stable_sort(tr.events.begin(), tr.events.end(),
                         [](const MidiEvent& a, const MidiEvent& b) { return a.tick < b.tick; });
        tr.events.push_back(meta(MidiEventKind::end_of_track, end));
        longest = std::max(longest, end);
    }

    Track& conductor = song.tracks[0];
    auto name = meta(MidiEventKind::track_name, 0);
    name.text = h.title;
    conductor.events.push_back(name);
    auto ts = meta(MidiEventKind::time_signature, 0);
    ts.numerator = h.meter.numerator;
    ts.denominator_power = pow2;
    conductor.events.push_back(ts);
    auto ks = meta(MidiEventKind::key_signature, 0);
    ks.sharps_flats = h.key.fifths();
    ks.minor = h.key.mode == abc::Mode::minor;
    conductor.events.push_back(ks);
    auto tempo = meta(MidiEventKind::tempo, 0);
    tempo.microseconds_per_quarter = microseconds_per_quarter(h.tempo);
    conductor.events.push_back(tempo);
    conductor.events.push_back(meta(MidiEventKind::end_of_track, longest));
    return song;
}

std::vector<std::uint8_t> encode_smf(const Song& song) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    put_be(out, 6, 4);
    put_be(out, 1, 2);
    put_be(out, static_cast<std::uint32_t>(song.tracks.size()), 2);
    put_be(out, static_cast<std::uint32_t>(song.ticks_per_quarter), 2);

    for (const Track& tr : song.tracks) {
        std::vector<std::uint8_t> body;
        std::int64_t last = 0;
        for (const MidiEvent& e : tr.events) {
            put_vlq(body, static_cast<std::uint32_t>(e.tick - last));
            last = e.tick;
            const auto ch = static_cast<std::uint8_t>(e.channel & 0x0F);
            switch (e.kind) {
                case MidiEventKind::note_on:
                    body.insert(body.end(), {static_cast<std::uint8_t>(0x90 | ch), static_cast<std::uint8_t>(e.key),
                                             static_cast<std::uint8_t>(e.velocity)});
                    break;
                case MidiEventKind::note_off:
                    body.insert(body.end(),
                                {static_cast<std::uint8_t>(0x80 | ch), static_cast<std::uint8_t>(e.key), 0});
                    break;
                case MidiEventKind::program_change:
                    body.insert(body.end(), {static_cast<std::uint8_t>(0xC0 | ch), static_cast<std::uint8_t>(e.program)});
                    break;
                case MidiEventKind::tempo: {
                    const auto us = static_cast<std::uint32_t>(e.microseconds_per_quarter);
                    put_meta(body, 0x51, {static_cast<std::uint8_t>(us >> 16), static_cast<std::uint8_t>(us >> 8),
                                          static_cast<std::uint8_t>(us)});
                    break;
                }
                case MidiEventKind::time_signature:
                    put_meta(body, 0x58, {static_cast<std::uint8_t>(e.numerator),
                                          static_cast<std::uint8_t>(e.denominator_power), 24, 8});
                    break;
                case MidiEventKind::key_signature:
                    put_meta(body, 0x59, {static_cast<std::uint8_t>(static_cast<std::int8_t>(e.sharps_flats)),
                                          static_cast<std::uint8_t>(e.minor ? 1 : 0)});
                    break;
                case MidiEventKind::text:
                case MidiEventKind::track_name:
                    put_meta(body, e.kind == MidiEventKind::text ? 0x01 : 0x03,
                             std::vector<std::uint8_t>(e.text.begin(), e.text.end()));
                    break;
                case MidiEventKind::end_of_track: put_meta(body, 0x2F, {}); break;
            }
        }
        out.insert(out.end(), {'M', 'T', 'r', 'k'});
        put_be(out, static_cast<std::uint32_t>(body.size()), 4);
        out.insert(out.end(), body.begin(), body.end());
    }
    return out;
}

std::vector<std::uint8_t> render_midi(const abc::Tune& tune, const RenderConfig& config) {
    try {
        return encode_smf(build_song(tune, config));
    } catch (const StructureError& e) {
        throw RenderError(e.what());
    }
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::optional<std::string> synth_command_from_env() {
    const char* v = std::getenv("COCOMPOSER_SYNTH_CMD");
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'')
            q += "'\\''";
        else
            q += c;
    }
    return q + "'";
}

void synthesize_wav(const std::string& command, const std::filesystem::path& midi_path,
                    const std::filesystem::path& wav_path) {
    const std::string cmd = command + " " + shell_quote(midi_path.string()) + " " + shell_quote(wav_path.string());
    const int status = std::system(cmd.c_str());
    if (status == -1) throw SynthError("could not start synthesizer: " + command);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw SynthError("synthesizer exited with status " + std::to_string(WEXITSTATUS(status)) + ": " + command);
    if (!std::filesystem::exists(wav_path)) throw SynthError("synthesizer produced no file at " + wav_path.string());
}

}  // namespace ensemble::midi
