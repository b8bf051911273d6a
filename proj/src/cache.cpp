#include "mscpt/cache.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mscpt {

namespace {

void check_id(const std::string& id) {
    if (id.empty()) throw std::invalid_argument("cache: empty entry id");
    for (char c : id) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '_' || c == '.' || c == '-';
        if (!ok) throw std::invalid_argument("cache: entry id '" + id + "' has invalid characters");
    }
}

void check_row_id(const std::string& rid) {
    if (rid.empty()) throw std::invalid_argument("cache: empty row id");
    for (char c : rid) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            throw std::invalid_argument("cache: row id '" + rid + "' contains whitespace");
        }
    }
}

void append_f32_le(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float parse_f32_le(const char* p) {
    uint32_t bits = (static_cast<uint32_t>(static_cast<unsigned char>(p[0]))) |
                    (static_cast<uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
                    (static_cast<uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
                    (static_cast<uint32_t>(static_cast<unsigned char>(p[3])) << 24);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

void atomic_write_bytes(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("write: cannot open '" + tmp + "' for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("write: short write to '" + tmp + "'");
    }
    fs::rename(tmp, path);
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& content) {
    atomic_write_bytes(path, content);
}

void write_f32_payload(const std::string& path, const std::vector<const Mat*>& blocks) {
    std::string bytes;
    size_t total = 0;
    for (const Mat* m : blocks) total += m->a.size();
    bytes.reserve(total * 4);
    for (const Mat* m : blocks) {
        for (double v : m->a) append_f32_le(bytes, static_cast<float>(v));
    }
    atomic_write_bytes(path, bytes);
}

std::vector<float> read_f32_payload(const std::string& path, size_t expected_floats) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cache: cannot open payload '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected_floats * 4) {
        throw std::runtime_error("cache: payload '" + path + "' holds " +
                                 std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(expected_floats * 4) +
                                 " (partial or corrupted write)");
    }
    std::vector<float> out(expected_floats);
    for (size_t i = 0; i < expected_floats; ++i) out[i] = parse_f32_le(bytes.data() + i * 4);
    return out;
}

void write_embedding_cache(const std::vector<CacheEntry>& entries, const std::string& dir) {
    fs::create_directories(dir);
    std::set<std::string> seen;
    std::ostringstream manifest;
    manifest << "embedding-cache v1\n";
    manifest << "dtype float32-le\n";
    manifest << "entries " << entries.size() << "\n";
    for (const CacheEntry& e : entries) {
        check_id(e.id);
        if (!seen.insert(e.id).second) {
            throw std::invalid_argument("cache: duplicate entry id '" + e.id + "'");
        }
        if (static_cast<int>(e.row_ids.size()) != e.values.rows) {
            throw std::invalid_argument("cache: entry '" + e.id + "' has " +
                                        std::to_string(e.row_ids.size()) + " row ids for " +
                                        std::to_string(e.values.rows) + " rows");
        }
        for (const std::string& rid : e.row_ids) check_row_id(rid);
        const std::string file = e.id + ".f32";
        write_f32_payload((fs::path(dir) / file).string(), {&e.values});
        manifest << "\nentry " << e.id << "\n";
        manifest << "tag " << e.tag << "\n";
        manifest << "shape " << e.values.rows << " " << e.values.cols << "\n";
        manifest << "file " << file << "\n";
        manifest << "rows";
        for (const std::string& rid : e.row_ids) manifest << " " << rid;
        manifest << "\nend\n";
    }
    atomic_write_bytes((fs::path(dir) / "manifest.txt").string(), manifest.str());
}

std::vector<CacheEntry> load_cached_embeddings(const std::string& dir) {
    const std::string mpath = (fs::path(dir) / "manifest.txt").string();
    std::ifstream f(mpath);
    if (!f) throw std::runtime_error("cache: cannot open manifest '" + mpath + "'");
    std::string line;
    auto next_line = [&](const char* what) {
        if (!std::getline(f, line)) {
            throw std::runtime_error(std::string("cache: manifest truncated, expected ") + what);
        }
        return line;
    };
    if (next_line("header") != "embedding-cache v1") {
        throw std::runtime_error("cache: unsupported manifest header '" + line + "'");
    }
    if (next_line("dtype") != "dtype float32-le") {
        throw std::runtime_error("cache: unsupported dtype line '" + line + "'");
    }
    std::istringstream count_line(next_line("entry count"));
    std::string word;
    size_t n = 0;
    if (!(count_line >> word >> n) || word != "entries") {
        throw std::runtime_error("cache: bad entry count line '" + line + "'");
    }

    std::vector<CacheEntry> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        while (std::getline(f, line) && line.empty()) {
        }
        std::istringstream head(line);
        CacheEntry e;
        if (!(head >> word >> e.id) || word != "entry") {
            throw std::runtime_error("cache: expected 'entry <id>', got '" + line + "'");
        }
        std::string tag_line = next_line("tag");
        if (tag_line.rfind("tag ", 0) != 0 && tag_line != "tag") {
            throw std::runtime_error("cache: expected tag line, got '" + tag_line + "'");
        }
        e.tag = tag_line.size() > 4 ? tag_line.substr(4) : "";
        int rows = 0, cols = 0;
        {
            std::istringstream s(next_line("shape"));
            if (!(s >> word >> rows >> cols) || word != "shape" || rows < 0 || cols < 0) {
                throw std::runtime_error("cache: bad shape line '" + line + "'");
            }
        }
        std::string file;
        {
            std::istringstream s(next_line("file"));
            if (!(s >> word >> file) || word != "file") {
                throw std::runtime_error("cache: bad file line '" + line + "'");
            }
        }
        {
            std::istringstream s(next_line("row ids"));
            if (!(s >> word) || word != "rows") {
                throw std::runtime_error("cache: bad rows line '" + line + "'");
            }
            std::string rid;
            while (s >> rid) e.row_ids.push_back(rid);
        }
        if (next_line("end") != "end") {
            throw std::runtime_error("cache: entry '" + e.id + "' missing end marker");
        }
        if (static_cast<int>(e.row_ids.size()) != rows) {
            throw std::runtime_error("cache: entry '" + e.id + "' lists " +
                                     std::to_string(e.row_ids.size()) + " row ids for " +
                                     std::to_string(rows) + " rows");
        }
        std::vector<float> vals = read_f32_payload((fs::path(dir) / file).string(),
                                                   static_cast<size_t>(rows) * cols);
        e.values = Mat(rows, cols);
        for (size_t j = 0; j < vals.size(); ++j) e.values.a[j] = static_cast<double>(vals[j]);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace mscpt
