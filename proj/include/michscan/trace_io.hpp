#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "michscan/error.hpp"
#include "michscan/trace.hpp"

namespace michscan {

enum class TraceFormat { binary, csv };

namespace detail {

inline constexpr char kTraceMagic[4] = {'M', 'C', 'H', '1'};
inline constexpr std::uint16_t kTraceFormatVersion = 1;

inline void put_u16(std::ostream& os, std::uint16_t v) {
    const char bytes[2] = {char(v & 0xff), char(v >> 8)};
    os.write(bytes, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const char bytes[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                           char((v >> 24) & 0xff)};
    os.write(bytes, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        os.put(char((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is)
        throw FormatError("unexpected end of trace file");
    return std::uint16_t(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is)
        throw FormatError("unexpected end of trace file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = is.get();
        if (c == EOF)
            throw FormatError("unexpected end of trace file");
        v |= std::uint64_t(std::uint8_t(c)) << (8 * i);
    }
    return v;
}

inline nlohmann::json markers_to_json(const std::vector<Marker>& markers) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Marker& m : markers)
        arr.push_back({{"label", m.label}, {"start", m.start}, {"end", m.end}});
    return arr;
}

inline std::vector<Marker> markers_from_json(const nlohmann::json& arr) {
    std::vector<Marker> out;
    for (const auto& j : arr)
        out.push_back(Marker{j.at("label").get<std::string>(), j.at("start").get<std::size_t>(),
                             j.at("end").get<std::size_t>()});
    return out;
}

inline nlohmann::json set_metadata_json(const TraceSet& set) {
    // Markers are stored once for the whole set; mixed marker layouts have
    // no representation in the file format.
    const auto& ref = set.traces.front().markers;
    for (const Trace& t : set.traces)
        if (t.markers != ref)
            throw InvalidArgument("store_traces requires identical markers across the set");
    nlohmann::json meta;
    meta["markers"] = markers_to_json(ref);
    nlohmann::json per_trace = nlohmann::json::array();
    for (const Trace& t : set.traces) {
        nlohmann::json kv = nlohmann::json::object();
        for (const auto& [k, v] : t.meta)
            kv[k] = v;
        per_trace.push_back(std::move(kv));
    }
    meta["trace_meta"] = std::move(per_trace);
    return meta;
}

inline void apply_set_metadata(TraceSet& set, const nlohmann::json& meta) {
    const auto markers = meta.contains("markers") ? markers_from_json(meta.at("markers"))
                                                  : std::vector<Marker>{};
    for (Trace& t : set.traces)
        t.markers = markers;
    if (meta.contains("trace_meta")) {
        const auto& per_trace = meta.at("trace_meta");
        if (per_trace.size() != set.traces.size())
            throw FormatError("trace_meta entry count does not match trace count");
        for (std::size_t i = 0; i < set.traces.size(); ++i)
            for (const auto& [k, v] : per_trace[i].items())
                set.traces[i].meta[k] = v.get<std::string>();
    }
}

inline std::filesystem::path csv_sidecar_path(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p.replace_extension(".meta.json");
    return p;
}

} // namespace detail

/// Writes a trace set in the binary format ("MCH1", f32 samples) or as CSV
/// rows with a JSON sidecar. Binary storage is bit-exact for f32 samples.
inline void store_traces(const std::filesystem::path& path, const TraceSet& set, TraceFormat format) {
    validate(set);
    const nlohmann::json meta = detail::set_metadata_json(set);

    if (format == TraceFormat::binary) {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw FormatError("cannot open '" + path.string() + "' for writing");
        os.write(detail::kTraceMagic, 4);
        detail::put_u16(os, detail::kTraceFormatVersion);
        detail::put_u32(os, std::uint32_t(set.size()));
        detail::put_u32(os, std::uint32_t(set.common_length()));
        detail::put_u64(os, std::bit_cast<std::uint64_t>(set.sample_rate_hz()));
        const std::string meta_text = meta.dump();
        detail::put_u32(os, std::uint32_t(meta_text.size()));
        os.write(meta_text.data(), std::streamsize(meta_text.size()));
        for (const Trace& t : set.traces)
            for (double v : t.samples)
                detail::put_u32(os, std::bit_cast<std::uint32_t>(float(v)));
        if (!os)
            throw FormatError("write failure on '" + path.string() + "'");
        return;
    }

    std::ofstream os(path);
    if (!os)
        throw FormatError("cannot open '" + path.string() + "' for writing");
    char buf[64];
    for (const Trace& t : set.traces) {
        for (std::size_t i = 0; i < t.samples.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.9g", t.samples[i]);
            if (i)
                os << ',';
            os << buf;
        }
        os << '\n';
    }
    nlohmann::json sidecar = meta;
    sidecar["sample_rate_hz"] = set.sample_rate_hz();
    std::ofstream ms(detail::csv_sidecar_path(path));
    ms << sidecar.dump(2) << '\n';
}

inline TraceSet load_traces(const std::filesystem::path& path, TraceFormat format) {
    TraceSet set;

    if (format == TraceFormat::binary) {
        std::ifstream is(path, std::ios::binary);
        if (!is)
            throw FormatError("cannot open '" + path.string() + "'");
        char magic[4];
        is.read(magic, 4);
        if (!is || std::string_view(magic, 4) != std::string_view(detail::kTraceMagic, 4))
            throw FormatError("bad magic in '" + path.string() + "': expected \"MCH1\"");
        const std::uint16_t version = detail::get_u16(is);
        if (version != detail::kTraceFormatVersion)
            throw FormatError("unsupported trace file version " + std::to_string(version));
        const std::uint32_t trace_count = detail::get_u32(is);
        const std::uint32_t sample_count = detail::get_u32(is);
        const double rate = std::bit_cast<double>(detail::get_u64(is));
        const std::uint32_t meta_len = detail::get_u32(is);
        std::string meta_text(meta_len, '\0');
        is.read(meta_text.data(), meta_len);
        if (!is)
            throw FormatError("truncated metadata in '" + path.string() + "'");
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(meta_text);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad metadata JSON: ") + e.what());
        }

        set.traces.resize(trace_count);
        for (Trace& t : set.traces) {
            t.sample_rate_hz = rate;
            t.samples.resize(sample_count);
            for (double& v : t.samples)
                v = double(std::bit_cast<float>(detail::get_u32(is)));
        }
        detail::apply_set_metadata(set, meta);
        validate(set);
        return set;
    }

    std::ifstream is(path);
    if (!is)
        throw FormatError("cannot open '" + path.string() + "'");
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        Trace t;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw FormatError("bad CSV sample '" + cell + "'");
            }
            if (pos != cell.size())
                throw FormatError("bad CSV sample '" + cell + "'");
            t.samples.push_back(v);
        }
        set.traces.push_back(std::move(t));
    }
    if (set.traces.empty())
        throw FormatError("CSV file '" + path.string() + "' holds no traces");
    const std::size_t len = set.traces.front().samples.size();
    for (const Trace& t : set.traces)
        if (t.samples.size() != len)
            throw FormatError("CSV rows have inconsistent sample counts");

    const auto sidecar_path = detail::csv_sidecar_path(path);
    std::ifstream ms(sidecar_path);
    if (!ms)
        throw FormatError("missing CSV sidecar '" + sidecar_path.string() + "'");
    nlohmann::json sidecar;
    try {
        ms >> sidecar;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad sidecar JSON: ") + e.what());
    }
    const double rate = sidecar.at("sample_rate_hz").get<double>();
    for (Trace& t : set.traces)
        t.sample_rate_hz = rate;
    detail::apply_set_metadata(set, sidecar);
    validate(set);
    return set;
}

} // namespace michscan
