// Binary matrix container: little-endian float32 payloads plus a
// human-readable manifest listing every entry and row id.
#pragma once

#include <string>
#include <vector>

#include "mscpt/mat.hpp"

namespace mscpt {

struct CacheEntry {
    std::string id;   // payload file stem; [A-Za-z0-9_.-] only
    std::string tag;  // free-form single-line label
    Mat values;       // stored at float32 precision
    std::vector<std::string> row_ids;  // one per row, no whitespace
};

// Writes <dir>/manifest.txt plus one <id>.f32 payload per entry. All files go
// through a temp-file-plus-rename so readers never observe partial writes.
void write_embedding_cache(const std::vector<CacheEntry>& entries, const std::string& dir);

// Loads every entry named by the manifest. A payload whose byte length does
// not match rows*cols*4 is rejected as a partial write.
std::vector<CacheEntry> load_cached_embeddings(const std::string& dir);

// float32 row-major little-endian payload helpers shared with the dataset
// store.
void write_f32_payload(const std::string& path, const std::vector<const Mat*>& blocks);
std::vector<float> read_f32_payload(const std::string& path, size_t expected_floats);
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace mscpt
