#include "mvr/io.hpp"

#include <cstring>
#include <fstream>

namespace mvr::io {

FileWriter::FileWriter(const std::filesystem::path& path) : path_(path.string()) {
    f_ = std::fopen(path_.c_str(), "wb");
    if (!f_) throw DataError("cannot open " + path_ + " for writing");
}

FileWriter::~FileWriter() {
    if (f_) std::fclose(f_);
}

void FileWriter::write_bytes(const void* data, std::size_t n) {
    if (n == 0) return;
    if (std::fwrite(data, 1, n, f_) != n) {
        throw DataError("short write to " + path_);
    }
}

void FileWriter::close() {
    if (f_) {
        if (std::fclose(f_) != 0) throw DataError("close failed for " + path_);
        f_ = nullptr;
    }
}

FileReader::FileReader(const std::filesystem::path& path) : path_(path.string()) {
    std::error_code ec;
    auto sz = std::filesystem::file_size(path, ec);
    if (ec) throw DataError("cannot stat " + path_);
    size_ = sz;
    f_ = std::fopen(path_.c_str(), "rb");
    if (!f_) throw DataError("cannot open " + path_ + " for reading");
}

FileReader::~FileReader() {
    if (f_) std::fclose(f_);
}

void FileReader::read_bytes(void* out, std::size_t n) {
    if (n == 0) return;
    if (std::fread(out, 1, n, f_) != n) {
        throw SizeMismatchError("short read from " + path_);
    }
}

std::uint8_t FileReader::read_u8() {
    std::uint8_t v;
    read_bytes(&v, 1);
    return v;
}

std::uint32_t FileReader::read_u32() {
    std::uint32_t v;
    read_bytes(&v, 4);
    return v;
}

std::uint64_t FileReader::read_u64() {
    std::uint64_t v;
    read_bytes(&v, 8);
    return v;
}

float FileReader::read_f32() {
    float v;
    read_bytes(&v, 4);
    return v;
}

bool FileReader::at_eof() {
    int c = std::fgetc(f_);
    if (c == EOF) return true;
    std::ungetc(c, f_);
    return false;
}

void write_magic(FileWriter& w, const char magic[8]) {
    w.write_bytes(magic, 8);
}

void check_magic(FileReader& r, const char magic[8], const std::string& what) {
    char buf[8];
    try {
        r.read_bytes(buf, 8);
    } catch (const SizeMismatchError&) {
        throw FormatError(what + ": file too short for header");
    }
    if (std::memcmp(buf, magic, 8) != 0) {
        throw FormatError(what + ": bad magic/version header");
    }
}

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw FormatError("metadata line without ':' in " + path.string() + ": " + line);
        }
        std::string key = line.substr(0, colon);
        std::string val = line.substr(colon + 1);
        while (!val.empty() && val.front() == ' ') val.erase(val.begin());
        while (!key.empty() && key.back() == ' ') key.pop_back();
        kv[key] = val;
    }
    return kv;
}

void write_kv_file(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    for (const auto& [k, v] : kv) out << k << ": " << v << "\n";
    if (!out) throw DataError("write failed for " + path.string());
}

std::string require_key(const std::map<std::string, std::string>& kv,
                        const std::string& key, const std::string& what) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(what + ": missing metadata key '" + key + "'");
    return it->second;
}

std::uint64_t require_u64(const std::map<std::string, std::string>& kv,
                          const std::string& key, const std::string& what) {
    const std::string s = require_key(kv, key, what);
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(what + ": metadata key '" + key + "' is not an unsigned integer: " + s);
    }
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
    FileReader r(path);
    std::uint64_t h = 1469598103934665603ull;
    std::vector<unsigned char> buf(1 << 16);
    std::uint64_t left = r.size();
    while (left > 0) {
        std::size_t chunk = static_cast<std::size_t>(std::min<std::uint64_t>(left, buf.size()));
        r.read_bytes(buf.data(), chunk);
        for (std::size_t i = 0; i < chunk; ++i) {
            h ^= buf[i];
            h *= 1099511628211ull;
        }
        left -= chunk;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace mvr::io
