#pragma once

// Append-only JSON Lines event log. Line 1 is {"format_version":1}; every
// following line is one event. An append returns only after the line has
// been handed to the kernel and fdatasync()ed.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "floodsense/errors.hpp"
#include "floodsense/events.hpp"
#include "floodsense/ledger.hpp"

namespace floodsense {

inline std::string log_header_line() { return json{{"format_version", kLogFormatVersion}}.dump(); }

inline std::string encode_event_line(const Event& e) { return to_json(e).dump(); }

/// Parses a complete log. An empty stream is an empty log; otherwise line 1
/// must be the header. Reports the first bad line (1-based) via CorruptLogError.
inline std::vector<Event> read_log(std::istream& in) {
    std::vector<Event> events;
    std::string line;
    std::size_t lineno = 0;
    std::uint64_t last_seq = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Every acknowledged append ends in '\n'; anything after the last one
        // is a torn write.
        if (in.eof()) throw CorruptLogError(lineno, "truncated final line");
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw CorruptLogError(lineno, "malformed JSON");
        }
        if (lineno == 1) {
            if (!j.is_object() || !j.contains("format_version") || j.at("format_version") != kLogFormatVersion) {
                throw CorruptLogError(lineno, "missing or unsupported format_version header");
            }
            continue;
        }
        Event e;
        try {
            e = event_from_json(j);
        } catch (const Error& err) {
            throw CorruptLogError(lineno, err.what());
        }
        if (e.seq <= last_seq) throw CorruptLogError(lineno, "sequence numbers must strictly increase");
        last_seq = e.seq;
        events.push_back(std::move(e));
    }
    return events;
}

inline std::vector<Event> read_log_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::StorageFailure, "cannot open " + path.string());
    return read_log(in);
}

inline void write_log(std::ostream& out, const std::vector<Event>& events) {
    out << log_header_line() << '\n';
    for (const auto& e : events) out << encode_event_line(e) << '\n';
}

/// Rebuilds state from events. Line numbers in errors assume the events came
/// from a log file (header on line 1).
inline Ledger replay(const std::vector<Event>& events) {
    Ledger ledger;
    for (std::size_t i = 0; i < events.size(); ++i) {
        try {
            ledger.apply(events[i]);
        } catch (const Error& err) {
            throw CorruptLogError(i + 2, err.what());
        }
    }
    return ledger;
}

inline Ledger replay_file(const std::filesystem::path& path) { return replay(read_log_file(path)); }

/// Compacts a log so that none of the user's answers survive: each of their
/// ReportSubmitted events becomes a ReportTombstone (same seq and ts) and a
/// UserPurged marker is appended. Replaying the result equals replaying the
/// original and then purging the user.
inline std::vector<Event> purge_rewrite(const std::vector<Event>& log, const std::string& user_id, Timestamp ts) {
    bool known = false;
    std::vector<Event> out;
    out.reserve(log.size() + 1);
    for (const auto& e : log) {
        if (const auto* reg = std::get_if<UserRegistered>(&e.body); reg && reg->profile.user_id == user_id) {
            known = true;
        }
        if (const auto* sub = std::get_if<ReportSubmitted>(&e.body); sub && sub->report.user_id == user_id) {
            out.push_back(Event{e.seq, e.ts,
                                ReportTombstone{sub->report.report_id, user_id, sub->region, sub->period}});
            continue;
        }
        out.push_back(e);
    }
    if (!known) throw Error(ErrorCode::UnknownUser, user_id);
    const std::uint64_t next = out.empty() ? 1 : out.back().seq + 1;
    out.push_back(Event{next, ts, UserPurged{user_id}});
    return out;
}

namespace detail {

class UniqueFd {
public:
    UniqueFd() = default;
    explicit UniqueFd(int fd) : fd_(fd) {}
    UniqueFd(const UniqueFd&) = delete;
    UniqueFd& operator=(const UniqueFd&) = delete;
    UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    UniqueFd& operator=(UniqueFd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~UniqueFd() { reset(); }

    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }

    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

inline void write_all(int fd, const std::string& data) {
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::StorageFailure, std::string("write failed: ") + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

}  // namespace detail

/// Single-appender event store. Not internally synchronised; the owner
/// serialises access.
class EventStore {
public:
    /// Opens (or creates) the log and replays it. Throws CorruptLogError if the
    /// existing content does not replay cleanly.
    explicit EventStore(std::filesystem::path path) : path_(std::move(path)) {
        std::vector<Event> existing;
        const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
        if (!fresh) existing = read_log_file(path_);
        ledger_ = replay(existing);
        fd_ = detail::UniqueFd(::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644));
        if (!fd_) {
            throw Error(ErrorCode::StorageFailure, "cannot open " + path_.string() + ": " + std::strerror(errno));
        }
        if (fresh) sync_write(log_header_line() + "\n");
    }

    const Ledger& ledger() const noexcept { return ledger_; }
    const std::filesystem::path& path() const noexcept { return path_; }

    /// Validates against the current state, writes durably, then applies.
    std::uint64_t append(EventBody body, Timestamp ts) {
        ledger_.check(body);
        Event e{ledger_.last_seq() + 1, ts, std::move(body)};
        sync_write(encode_event_line(e) + "\n");
        ledger_.apply(e);
        return e.seq;
    }

private:
    void sync_write(const std::string& data) {
        detail::write_all(fd_.get(), data);
        if (::fdatasync(fd_.get()) != 0) {
            throw Error(ErrorCode::StorageFailure, std::string("fdatasync failed: ") + std::strerror(errno));
        }
    }

    std::filesystem::path path_;
    Ledger ledger_;
    detail::UniqueFd fd_;
};

}  // namespace floodsense
