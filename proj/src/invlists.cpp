#include "mvr/invlists.hpp"

#include <algorithm>

#include "mvr/io.hpp"

namespace mvr {

namespace {

constexpr char kListsMagic[8] = {'M', 'V', 'R', 'I', 'V', 'L', '0', '1'};

void put_varint(std::vector<std::uint8_t>& out, std::uint32_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<std::uint8_t>(v) | 0x80);
        v >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_varint(const std::uint8_t* blob, std::uint64_t size, std::uint64_t& pos,
                         const std::string& what) {
    std::uint32_t v = 0;
    for (std::uint32_t shift = 0; shift < 35; shift += 7) {
        if (pos >= size) throw DataError(what + ": truncated varint");
        const std::uint8_t b = blob[pos++];
        v |= std::uint32_t(b & 0x7f) << shift;
        if ((b & 0x80) == 0) {
            if (shift == 28 && (b >> 4) != 0) {
                throw DataError(what + ": varint overflows 32 bits");
            }
            return v;
        }
    }
    throw DataError(what + ": varint too long");
}

}  // namespace

InvertedLists build_inverted_lists(const Assignment& assignment,
                                   const TokenVectorCorpus& corpus,
                                   std::uint64_t num_centroids) {
    if (assignment.size() != corpus.num_vectors()) {
        throw SizeMismatchError("build_inverted_lists: assignment covers " +
                                std::to_string(assignment.size()) + " of " +
                                std::to_string(corpus.num_vectors()) + " vectors");
    }
    InvertedLists lists;
    lists.offsets.assign(num_centroids + 1, 0);

    std::vector<CentroidId> scratch;
    const std::uint64_t docs = corpus.num_docs();
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<std::uint64_t> cursor;
        if (pass == 1) {
            for (std::uint64_t c = 0; c < num_centroids; ++c) {
                lists.offsets[c + 1] += lists.offsets[c];
            }
            lists.docs.resize(lists.offsets[num_centroids]);
            cursor.assign(lists.offsets.begin(), lists.offsets.end() - 1);
        }
        for (std::uint64_t d = 0; d < docs; ++d) {
            scratch.clear();
            for (std::uint64_t i = corpus.doc_offsets[d]; i < corpus.doc_offsets[d + 1];
                 ++i) {
                const CentroidId c = assignment.centroid_ids[i];
                if (c >= num_centroids) {
                    throw DataError("build_inverted_lists: centroid id " +
                                    std::to_string(c) + " out of range");
                }
                scratch.push_back(c);
            }
            std::sort(scratch.begin(), scratch.end());
            scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
            for (CentroidId c : scratch) {
                if (pass == 0) {
                    lists.offsets[c + 1]++;
                } else {
                    lists.docs[cursor[c]++] = static_cast<DocId>(d);
                }
            }
        }
    }
    return lists;
}

void save_inverted_lists(const InvertedLists& lists, const std::filesystem::path& path) {
    std::vector<std::uint8_t> blob;
    blob.reserve(lists.docs.size());
    std::vector<std::uint64_t> byte_offsets(lists.num_centroids() + 1, 0);
    for (std::uint64_t c = 0; c < lists.num_centroids(); ++c) {
        byte_offsets[c] = blob.size();
        DocId prev = 0;
        const DocId* list = lists.list_of(c);
        for (std::uint64_t i = 0; i < lists.count(c); ++i) {
            put_varint(blob, i == 0 ? list[0] : list[i] - prev);
            prev = list[i];
        }
    }
    byte_offsets[lists.num_centroids()] = blob.size();

    io::FileWriter w(path);
    io::write_magic(w, kListsMagic);
    w.write_u64(lists.num_centroids());
    w.write_u64(lists.docs.size());
    w.write_u64(blob.size());
    w.write_span(std::span<const std::uint64_t>(lists.offsets));
    w.write_span(std::span<const std::uint64_t>(byte_offsets));
    w.write_span(std::span<const std::uint8_t>(blob));
    w.close();
}

InvertedLists load_inverted_lists(const std::filesystem::path& path) {
    const std::string what = "inverted lists file " + path.string();
    io::FileReader r(path);
    io::check_magic(r, kListsMagic, what);
    const std::uint64_t centroids = r.read_u64();
    const std::uint64_t postings = r.read_u64();
    const std::uint64_t blob_size = r.read_u64();
    const std::uint64_t expect = 8 + 24 + (centroids + 1) * 16 + blob_size;
    if (r.size() != expect) {
        throw SizeMismatchError(what + ": expected " + std::to_string(expect) +
                                " bytes, found " + std::to_string(r.size()));
    }
    InvertedLists lists;
    lists.offsets.resize(centroids + 1);
    r.read_span(std::span<std::uint64_t>(lists.offsets));
    std::vector<std::uint64_t> byte_offsets(centroids + 1);
    r.read_span(std::span<std::uint64_t>(byte_offsets));
    std::vector<std::uint8_t> blob(blob_size);
    r.read_span(std::span<std::uint8_t>(blob));

    if (lists.offsets.front() != 0 || lists.offsets.back() != postings) {
        throw DataError(what + ": posting offsets do not span the posting count");
    }
    lists.docs.resize(postings);
    for (std::uint64_t c = 0; c < centroids; ++c) {
        if (lists.offsets[c + 1] < lists.offsets[c]) {
            throw OffsetOrderError(what + ": decreasing posting offsets");
        }
        std::uint64_t pos = byte_offsets[c];
        DocId prev = 0;
        for (std::uint64_t i = lists.offsets[c]; i < lists.offsets[c + 1]; ++i) {
            const std::uint32_t delta = get_varint(blob.data(), blob.size(), pos, what);
            const DocId doc = i == lists.offsets[c] ? delta : prev + delta;
            if (i != lists.offsets[c] && delta == 0) {
                throw DataError(what + ": duplicate document id in a posting list");
            }
            lists.docs[i] = doc;
            prev = doc;
        }
        if (pos != byte_offsets[c + 1]) {
            throw DataError(what + ": posting list byte range mismatch");
        }
    }
    return lists;
}

}  // namespace mvr
