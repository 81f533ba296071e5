#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mvr {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and read/written raw");

using TokenId = std::uint32_t;
using DocId = std::uint32_t;
using CentroidId = std::uint32_t;

// Error hierarchy. The CLI maps these onto exit codes:
//   UsageError -> 1, DataError -> 2, InternalError -> 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class InternalError : public Error {
public:
    using Error::Error;
};

// Malformed magic/version header in a binary artifact.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

// Payload length disagrees with the metadata.
class SizeMismatchError : public DataError {
public:
    using DataError::DataError;
};

// doc_offsets not monotone / out of range / empty document.
class OffsetOrderError : public DataError {
public:
    using DataError::DataError;
};

// Centroid budget smaller than the number of distinct tokens.
class InfeasibleBudgetError : public UsageError {
public:
    using UsageError::UsageError;
};

// Corpus references a token the codebook does not cover.
class VocabMismatchError : public DataError {
public:
    using DataError::DataError;
};

// Compressed document record fails its internal consistency checks.
class CorruptRecordError : public DataError {
public:
    using DataError::DataError;
};

// Index component content hash does not match the manifest.
class HashMismatchError : public DataError {
public:
    using DataError::DataError;
};

// Speedup bound is undefined when every token weight is zero.
class ZeroWeightError : public UsageError {
public:
    using UsageError::UsageError;
};

}  // namespace mvr
