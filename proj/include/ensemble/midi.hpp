#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ensemble/abc.hpp"

namespace ensemble::midi {

struct RenderConfig {
    int ticks_per_quarter = 480;  // must be a multiple of 96
    int default_velocity = 90;
};

enum class MidiEventKind {
    note_on,
    note_off,
    program_change,
    tempo,
    time_signature,
    key_signature,
    text,
    track_name,
    end_of_track,
};

struct MidiEvent {
    std::int64_t tick = 0;
    MidiEventKind kind = MidiEventKind::text;
    int channel = 0;
    int key = 0;       // note events
    int velocity = 0;  // note_on
    int program = 0;   // program_change
    int microseconds_per_quarter = 0;  // tempo
    int numerator = 0;                 // time_signature
    int denominator_power = 0;
    int sharps_flats = 0;  // key_signature
    bool minor = false;
    std::string text;  // text / track_name
};

struct Track {
    std::vector<MidiEvent> events;  // ticks non-decreasing
};

/// Event-level model of a format-1 file: track 0 is the conductor track.
struct Song {
    int ticks_per_quarter = 480;
    std::vector<Track> tracks;
};

class RenderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StructureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SynthError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Playback order with every |: ... :| span played twice.
std::vector<abc::Measure> expand_repeats(const abc::Voice& voice);

/// 60e6 / quarter notes per minute; 500000 when the tune has no Q: field.
int microseconds_per_quarter(const std::optional<abc::TempoSpec>& tempo);

/// MIDI key for a pitch. `measure_accidentals` maps letter+octave to the
/// semitone offset set earlier in the same measure.
int midi_key(const abc::Pitch& pitch, const abc::KeySpec& key,
             const std::vector<std::pair<std::pair<char, int>, int>>& measure_accidentals);

/// Channel for the n-th voice, skipping the GM percussion channel 9.
int channel_for_voice(std::size_t voice_index);

Song build_song(const abc::Tune& tune, const RenderConfig& config = {});
std::vector<std::uint8_t> encode_smf(const Song& song);
std::vector<std::uint8_t> render_midi(const abc::Tune& tune, const RenderConfig& config = {});

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Value of COCOMPOSER_SYNTH_CMD when set and non-empty.
std::optional<std::string> synth_command_from_env();

/// Runs `<command> <midi> <wav>` through the shell and checks the exit status
/// and that the WAV was produced.
void synthesize_wav(const std::string& command, const std::filesystem::path& midi_path,
                    const std::filesystem::path& wav_path);

std::string shell_quote(const std::string& s);

}  // namespace ensemble::midi
