#pragma once

// Minimal Standard MIDI File reader for tests. Written against the file
// format, not the writer, and strict about chunk lengths.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smf {

struct Event {
    std::uint64_t tick = 0;
    std::uint8_t status = 0;  // 0xFF for meta
    std::uint8_t meta_type = 0;
    std::vector<std::uint8_t> data;
};

struct Track {
    std::uint32_t declared_length = 0;
    std::vector<Event> events;
};

struct File {
    std::uint16_t format = 0;
    std::uint16_t ntracks = 0;
    std::uint16_t division = 0;
    std::vector<Track> tracks;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

    File read() {
        File f;
        expect_tag("MThd");
        if (be(4) != 6) throw std::runtime_error("MThd length is not 6");
        f.format = static_cast<std::uint16_t>(be(2));
        f.ntracks = static_cast<std::uint16_t>(be(2));
        f.division = static_cast<std::uint16_t>(be(2));
        for (int t = 0; t < f.ntracks; ++t) f.tracks.push_back(read_track());
        if (pos_ != b_.size()) throw std::runtime_error("trailing bytes after the last track");
        return f;
    }

private:
    std::uint8_t byte() {
        if (pos_ >= b_.size()) throw std::runtime_error("unexpected end of file");
        return b_[pos_++];
    }

    std::uint32_t be(int n) {
        std::uint32_t v = 0;
        for (int i = 0; i < n; ++i) v = (v << 8) | byte();
        return v;
    }

    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t c = byte();
            v = (v << 7) | (c & 0x7F);
            if ((c & 0x80) == 0) return v;
        }
        throw std::runtime_error("variable-length quantity longer than 4 bytes");
    }

    void expect_tag(const char* tag) {
        for (int i = 0; i < 4; ++i)
            if (byte() != static_cast<std::uint8_t>(tag[i])) throw std::runtime_error(std::string("expected ") + tag);
    }

    Track read_track() {
        Track t;
        expect_tag("MTrk");
        t.declared_length = be(4);
        const std::size_t end = pos_ + t.declared_length;
        if (end > b_.size()) throw std::runtime_error("track length runs past the end of file");
        std::uint64_t tick = 0;
        std::uint8_t running = 0;
        bool ended = false;
        while (pos_ < end) {
            if (ended) throw std::runtime_error("events after end of track");
            Event e;
            tick += vlq();
            e.tick = tick;
            std::uint8_t status = byte();
            if (status < 0x80) {
                if (running == 0) throw std::runtime_error("running status without a previous status");
                --pos_;
                status = running;
            }
            e.status = status;
            if (status == 0xFF) {
                e.meta_type = byte();
                const auto len = vlq();
                for (std::uint32_t i = 0; i < len; ++i) e.data.push_back(byte());
                if (e.meta_type == 0x2F) ended = true;
            } else if (status == 0xF0 || status == 0xF7) {
                const auto len = vlq();
                for (std::uint32_t i = 0; i < len; ++i) e.data.push_back(byte());
            } else {
                running = status;
                const int hi = status & 0xF0;
                const int n = (hi == 0xC0 || hi == 0xD0) ? 1 : 2;
                for (int i = 0; i < n; ++i) e.data.push_back(byte());
            }
            t.events.push_back(std::move(e));
        }
        if (pos_ != end) throw std::runtime_error("track events overrun the declared length");
        if (!ended) throw std::runtime_error("track has no end-of-track meta event");
        return t;
    }

    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

inline File parse(std::span<const std::uint8_t> bytes) { return Reader(bytes).read(); }

inline bool is_note_on(const Event& e) { return (e.status & 0xF0) == 0x90 && e.data.size() == 2 && e.data[1] > 0; }

inline bool is_note_off(const Event& e) {
    return (e.status & 0xF0) == 0x80 || ((e.status & 0xF0) == 0x90 && e.data.size() == 2 && e.data[1] == 0);
}

}  // namespace smf
