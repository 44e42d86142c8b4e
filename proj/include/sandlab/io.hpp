#pragma once

// File formats: CSV survival curves, JSON-lines records, JSON manifests and
// checksummed checkpoints. Every file carries a schema tag.

#include <boost/crc.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sandlab/error.hpp"
#include "sandlab/tail.hpp"

namespace sandlab {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kTailSchema = "sandlab.tail.v1";
inline constexpr const char* kCheckpointSchema = "sandlab.checkpoint.v1";
inline constexpr const char* kManifestSchema = "sandlab.manifest.v1";
inline constexpr const char* kResultSchema = "sandlab.result.v1";
inline constexpr const char* kRecordSchema = "sandlab.record.v1";

/// Default output directory: $SANDLAB_OUTPUT_DIR, else the working directory.
inline std::filesystem::path default_output_dir() {
    const char* env = std::getenv("SANDLAB_OUTPUT_DIR");
    return env && *env ? std::filesystem::path(env) : std::filesystem::current_path();
}

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
    if (!out) throw ConfigError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ------------------------------------------------------------------- CSV

inline std::string tail_csv(const TailEstimate& t) {
    std::ostringstream out;
    out << "# schema=" << kTailSchema << " observable=" << t.observable << " d=" << t.dim << " L=" << t.half_side
        << " seed=" << t.seed << " nested=" << (t.nested ? 1 : 0) << "\n";
    out << "threshold,survivors,replicas,se\n";
    for (std::size_t i = 0; i < t.thresholds.size(); ++i)
        out << format_double(t.thresholds[i]) << ',' << t.survivors[i] << ',' << t.replicas << ','
            << format_double(t.standard_error(i)) << '\n';
    return out.str();
}

inline TailEstimate parse_tail_csv(const std::string& text) {
    TailEstimate t;
    std::istringstream in(text);
    std::string line;
    bool header = false;
    bool have_replicas = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string kv;
            while (meta >> kv) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
                try {
                    if (k == "schema") require(v == kTailSchema, "unsupported tail schema '" + v + "'");
                    else if (k == "observable") t.observable = v;
                    else if (k == "d") t.dim = std::stoi(v);
                    else if (k == "L") t.half_side = std::stoi(v);
                    else if (k == "seed") t.seed = std::stoull(v);
                    else if (k == "nested") t.nested = v != "0";
                } catch (const std::logic_error& e) {
                    if (dynamic_cast<const ConfigError*>(&e)) throw;
                    throw ConfigError("bad tail metadata '" + kv + "'");
                }
            }
            continue;
        }
        if (!header) {
            require(line == "threshold,survivors,replicas,se", "tail CSV: unexpected header '" + line + "'");
            header = true;
            continue;
        }
        std::istringstream row(line);
        std::string a, b, c;
        require(std::getline(row, a, ',') && std::getline(row, b, ',') && std::getline(row, c, ','),
                "tail CSV: malformed row '" + line + "'");
        try {
            t.thresholds.push_back(std::stod(a));
            t.survivors.push_back(std::stoull(b));
            const std::uint64_t n = std::stoull(c);
            require(!have_replicas || n == t.replicas, "tail CSV: replica count changes between rows");
            t.replicas = n;
            have_replicas = true;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::logic_error&) {
            throw ConfigError("tail CSV: malformed row '" + line + "'");
        }
    }
    require(header, "tail CSV: missing header");
    return t;
}

// ----------------------------------------------------------------- JSON

inline std::string json_lines(const std::vector<nlohmann::json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

/// The first `keep` lines of a JSON-lines file (for resumed runs).
inline std::vector<std::string> read_lines(const std::filesystem::path& path, std::size_t keep) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("resume: cannot read records " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (out.size() < keep && std::getline(in, line)) out.push_back(line);
    if (out.size() < keep) throw CheckpointError("resume: records file is shorter than the checkpoint");
    return out;
}

inline std::uint32_t crc32(const std::string& s) {
    boost::crc_32_type crc;
    crc.process_bytes(s.data(), s.size());
    return crc.checksum();
}

// ------------------------------------------------------------ checkpoint

struct Checkpoint {
    nlohmann::json fingerprint;  ///< config fields that determine the streams
    std::uint64_t replicas_done = 0;
    nlohmann::json tally;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    nlohmann::json body = {{"fingerprint", c.fingerprint}, {"replicas_done", c.replicas_done}, {"tally", c.tally}};
    nlohmann::json j = {{"schema", kCheckpointSchema},
                        {"version", kVersion},
                        {"body", body},
                        {"crc32", crc32(body.dump())}};
    // Write then rename, so an interrupted save leaves the old checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    write_text(tmp, j.dump() + "\n");
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception&) {
        throw CheckpointError("checkpoint is not valid JSON (corrupt?)");
    }
    try {
        if (j.at("schema") != kCheckpointSchema) throw CheckpointError("checkpoint schema mismatch");
        if (j.at("version") != kVersion) throw CheckpointError("checkpoint written by version " + j.at("version").get<std::string>());
        const nlohmann::json& body = j.at("body");
        if (crc32(body.dump()) != j.at("crc32").get<std::uint32_t>()) throw CheckpointError("checkpoint checksum failure");
        return {body.at("fingerprint"), body.at("replicas_done").get<std::uint64_t>(), body.at("tally")};
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

}  // namespace sandlab
