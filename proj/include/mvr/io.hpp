#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvr/common.hpp"

namespace mvr::io {

// Thin RAII wrappers over stdio with checked whole-buffer transfers.
// All multi-byte values on disk are little-endian (host order, asserted
// in common.hpp).

class FileWriter {
public:
    explicit FileWriter(const std::filesystem::path& path);
    ~FileWriter();
    FileWriter(const FileWriter&) = delete;
    FileWriter& operator=(const FileWriter&) = delete;

    void write_bytes(const void* data, std::size_t n);
    void write_u8(std::uint8_t v) { write_bytes(&v, 1); }
    void write_u32(std::uint32_t v) { write_bytes(&v, 4); }
    void write_u64(std::uint64_t v) { write_bytes(&v, 8); }
    void write_f32(float v) { write_bytes(&v, 4); }

    template <typename T>
    void write_span(std::span<const T> s) {
        write_bytes(s.data(), s.size_bytes());
    }

    void close();

private:
    std::FILE* f_ = nullptr;
    std::string path_;
};

class FileReader {
public:
    explicit FileReader(const std::filesystem::path& path);
    ~FileReader();
    FileReader(const FileReader&) = delete;
    FileReader& operator=(const FileReader&) = delete;

    void read_bytes(void* out, std::size_t n);
    std::uint8_t read_u8();
    std::uint32_t read_u32();
    std::uint64_t read_u64();
    float read_f32();

    template <typename T>
    void read_span(std::span<T> s) {
        read_bytes(s.data(), s.size_bytes());
    }

    std::uint64_t size() const { return size_; }
    bool at_eof();

private:
    std::FILE* f_ = nullptr;
    std::uint64_t size_ = 0;
    std::string path_;
};

// 8-byte magic check/emit. Throws FormatError on mismatch.
void write_magic(FileWriter& w, const char magic[8]);
void check_magic(FileReader& r, const char magic[8], const std::string& what);

// Raw typed array files (no header), e.g. token_ids / doc_offsets sidecars.
template <typename T>
std::vector<T> read_raw_array(const std::filesystem::path& path) {
    FileReader r(path);
    if (r.size() % sizeof(T) != 0) {
        throw SizeMismatchError("raw array file " + path.string() +
                                " is not a multiple of the element size");
    }
    std::vector<T> out(r.size() / sizeof(T));
    r.read_span(std::span<T>(out));
    return out;
}

template <typename T>
void write_raw_array(const std::filesystem::path& path, std::span<const T> data) {
    FileWriter w(path);
    w.write_span(data);
    w.close();
}

// "key: value" UTF-8 metadata sidecars. Blank lines and '#' comments ignored.
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);
void write_kv_file(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& kv);

std::string require_key(const std::map<std::string, std::string>& kv,
                        const std::string& key, const std::string& what);
std::uint64_t require_u64(const std::map<std::string, std::string>& kv,
                          const std::string& key, const std::string& what);

// FNV-1a 64-bit over a whole file; used to cross-reference index components.
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

}  // namespace mvr::io
