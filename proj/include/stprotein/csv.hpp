#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stprotein/errors.hpp"

namespace stprotein {
namespace csv {

/// Parse CSV text (RFC 4180: quoted fields, "" escapes, CRLF or LF endings).
/// A trailing newline does not produce an empty record.
inline std::vector<std::vector<std::string>> parse(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    enum class State { FieldStart, Unquoted, Quoted, QuoteInQuoted };
    State state = State::FieldStart;
    bool any = false; // current record has content (fields or separators)

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_record = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        any = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        switch (state) {
        case State::FieldStart:
            if (c == '"') { state = State::Quoted; any = true; }
            else if (c == ',') { end_field(); any = true; }
            else if (c == '\n') { if (any || !field.empty() || !row.empty()) end_record(); }
            else if (c == '\r') { /* consumed with the following \n */ }
            else { field.push_back(c); state = State::Unquoted; any = true; }
            break;
        case State::Unquoted:
            if (c == ',') { end_field(); state = State::FieldStart; }
            else if (c == '\n') { end_record(); state = State::FieldStart; }
            else if (c == '\r') { /* swallow before \n */ }
            else if (c == '"') { throw ParseError("csv: bare quote inside unquoted field"); }
            else { field.push_back(c); }
            break;
        case State::Quoted:
            if (c == '"') { state = State::QuoteInQuoted; }
            else { field.push_back(c); }
            break;
        case State::QuoteInQuoted:
            if (c == '"') { field.push_back('"'); state = State::Quoted; }
            else if (c == ',') { end_field(); state = State::FieldStart; }
            else if (c == '\n') { end_record(); state = State::FieldStart; }
            else if (c == '\r') { /* swallow before \n */ }
            else { throw ParseError("csv: garbage after closing quote"); }
            break;
        }
    }
    if (state == State::Quoted) throw ParseError("csv: unterminated quoted field");
    if (any || !field.empty() || !row.empty()) end_record();
    return rows;
}

/// Quote a field for output when it contains a delimiter, quote, or newline.
inline std::string escape(std::string_view field) {
    const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs) return std::string(field);
    std::string out;
    out.reserve(field.size() + 2);
    out.push_back('"');
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline std::string join_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(fields[i]);
    }
    out.push_back('\n');
    return out;
}

/// Shortest round-trip decimal form of a double (plus a sign-free zero).
inline std::string format_double(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
    if (s.empty()) throw ParseError("empty numeric field in " + context);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("bad numeric field '" + s + "' in " + context);
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path);
    return ss.str();
}

/// Write via temp file + rename so readers never observe a partial file.
inline void write_file_atomic(const std::string& path, std::string_view content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("rename failed for " + path);
}

} // namespace csv
} // namespace stprotein
