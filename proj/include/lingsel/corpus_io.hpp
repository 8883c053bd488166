#pragma once

// Utterance collections and their two on-disk forms:
//
//  * JSONL manifest, one object per line:
//      {"id": "...", "duration_sec": 12.3, "embedding": [ ... ]}
//  * LEMB binary embeddings, paired with a manifest whose rows carry only
//    "id" and "duration_sec":
//      "LEMB" | u8 version=1 | u32 dim (LE) | u64 count (LE) | count*dim f32 (LE)
//
// Loaders validate every record and never repair input. Computation is f64
// throughout; files may store f32.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "lingsel/error.hpp"
#include "lingsel/numcore.hpp"

namespace lingsel {

struct UtteranceRecord {
  std::string id;
  double duration_sec = 0.0;
  std::vector<double> embedding;

  friend bool operator==(const UtteranceRecord&, const UtteranceRecord&) = default;
};

/// Ordered utterances sharing one embedding dimension. dim is 0 only for an
/// empty corpus.
struct Corpus {
  std::size_t dim = 0;
  std::vector<UtteranceRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

using DurationMap = std::unordered_map<std::string, double>;

namespace detail {

inline std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

inline void check_duration(double duration, std::size_t line) {
  if (!std::isfinite(duration) || duration < 0.0) {
    throw DataError(at_line(line) + "duration_sec must be finite and non-negative");
  }
}

/// Parses one manifest row. With want_embedding=false the row must not
/// carry an embedding (it comes from a binary blob instead).
inline UtteranceRecord parse_manifest_row(const std::string& text, std::size_t line,
                                          bool want_embedding) {
  nlohmann::json row;
  try {
    row = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(at_line(line) + "malformed JSON (" + e.what() + ")");
  }
  if (!row.is_object()) throw DataError(at_line(line) + "record is not a JSON object");

  UtteranceRecord rec;
  const auto id = row.find("id");
  if (id == row.end() || !id->is_string() || id->get_ref<const std::string&>().empty()) {
    throw DataError(at_line(line) + "missing or empty string field 'id'");
  }
  rec.id = id->get<std::string>();

  const auto dur = row.find("duration_sec");
  if (dur == row.end() || !dur->is_number()) {
    throw DataError(at_line(line) + "missing numeric field 'duration_sec'");
  }
  rec.duration_sec = dur->get<double>();
  check_duration(rec.duration_sec, line);

  const auto emb = row.find("embedding");
  if (!want_embedding) {
    if (emb != row.end()) {
      throw DataError(at_line(line) + "embedding given inline although a binary blob is used");
    }
    return rec;
  }
  if (emb == row.end() || !emb->is_array() || emb->empty()) {
    throw DataError(at_line(line) + "missing or empty array field 'embedding'");
  }
  rec.embedding.reserve(emb->size());
  for (const auto& v : *emb) {
    if (!v.is_number()) throw DataError(at_line(line) + "embedding holds a non-number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw DataError(at_line(line) + "embedding holds a non-finite value");
    rec.embedding.push_back(x);
  }
  return rec;
}

inline std::vector<std::pair<std::size_t, std::string>> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    lines.emplace_back(number, std::move(text));
  }
  return lines;
}

inline void add_record(Corpus& corpus, std::unordered_set<std::string>& seen,
                       UtteranceRecord rec, std::size_t line) {
  if (corpus.records.empty()) {
    corpus.dim = rec.embedding.size();
  } else if (rec.embedding.size() != corpus.dim) {
    throw DataError(at_line(line) + "dimension mismatch: expected " + std::to_string(corpus.dim) +
                    ", got " + std::to_string(rec.embedding.size()));
  }
  if (!seen.insert(rec.id).second) {
    throw DataError(at_line(line) + "duplicate id \"" + rec.id + "\"");
  }
  corpus.records.push_back(std::move(rec));
}

template <typename T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(const unsigned char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

}  // namespace detail

/// Checks every record and corpus invariant; throws DataError naming the
/// first offending record (1-based).
inline void validate(const Corpus& corpus) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    const std::string where = "record " + std::to_string(i + 1) + ": ";
    if (r.id.empty()) throw DataError(where + "empty id");
    if (!std::isfinite(r.duration_sec) || r.duration_sec < 0.0) {
      throw DataError(where + "duration_sec must be finite and non-negative");
    }
    if (r.embedding.size() != corpus.dim || corpus.dim == 0) {
      throw DataError(where + "embedding length " + std::to_string(r.embedding.size()) +
                      " does not match corpus dim " + std::to_string(corpus.dim));
    }
    for (double x : r.embedding) {
      if (!std::isfinite(x)) throw DataError(where + "embedding holds a non-finite value");
    }
    if (!seen.insert(r.id).second) throw DataError(where + "duplicate id \"" + r.id + "\"");
  }
}

inline Corpus load_manifest(const std::string& path) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  for (auto& [line, text] : detail::read_lines(path)) {
    detail::add_record(corpus, seen, detail::parse_manifest_row(text, line, true), line);
  }
  return corpus;
}

inline constexpr char kBlobMagic[4] = {'L', 'E', 'M', 'B'};
inline constexpr std::uint8_t kBlobVersion = 1;
inline constexpr std::size_t kBlobHeaderBytes = 4 + 1 + 4 + 8;

inline Corpus load_binary_embeddings(const std::string& manifest_path,
                                     const std::string& blob_path) {
  const auto lines = detail::read_lines(manifest_path);

  std::ifstream in(blob_path, std::ios::binary);
  if (!in) throw DataError("cannot open " + blob_path);
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (blob.size() < kBlobHeaderBytes || std::memcmp(blob.data(), kBlobMagic, 4) != 0) {
    throw DataError(blob_path + ": bad magic, not a LEMB file");
  }
  if (blob[4] != kBlobVersion) {
    throw DataError(blob_path + ": unsupported LEMB version " + std::to_string(blob[4]));
  }
  const auto dim = detail::read_le<std::uint32_t>(blob.data() + 5);
  const auto count = detail::read_le<std::uint64_t>(blob.data() + 9);
  if (count != lines.size()) {
    throw DataError(blob_path + ": header declares " + std::to_string(count) +
                    " records but the manifest has " + std::to_string(lines.size()));
  }
  if (count > 0 && dim == 0) throw DataError(blob_path + ": header declares dim 0");
  const std::size_t payload = blob.size() - kBlobHeaderBytes;
  const std::size_t expected = static_cast<std::size_t>(count) * dim * sizeof(float);
  if (payload < expected) {
    throw DataError(blob_path + ": truncated payload (" + std::to_string(payload) + " of " +
                    std::to_string(expected) + " bytes)");
  }
  if (payload > expected) throw DataError(blob_path + ": trailing bytes after payload");

  Corpus corpus;
  std::unordered_set<std::string> seen;
  const unsigned char* p = blob.data() + kBlobHeaderBytes;
  for (const auto& [line, text] : lines) {
    auto rec = detail::parse_manifest_row(text, line, false);
    rec.embedding.resize(dim);
    for (std::uint32_t j = 0; j < dim; ++j, p += sizeof(float)) {
      const double x = detail::read_le<float>(p);
      if (!std::isfinite(x)) {
        throw DataError(detail::at_line(line) + "blob embedding holds a non-finite value");
      }
      rec.embedding[j] = x;
    }
    detail::add_record(corpus, seen, std::move(rec), line);
  }
  if (corpus.empty()) corpus.dim = dim;
  return corpus;
}

struct IdDuration {
  std::string id;
  double duration_sec = 0.0;
};

/// Ids and durations of a manifest in file order; embeddings, if present,
/// are not parsed. Used where only the budget arithmetic matters.
inline std::vector<IdDuration> load_durations(const std::string& path) {
  std::vector<IdDuration> out;
  std::unordered_set<std::string> seen;
  for (const auto& [line, text] : detail::read_lines(path)) {
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(detail::at_line(line) + "malformed JSON (" + e.what() + ")");
    }
    if (!row.is_object()) throw DataError(detail::at_line(line) + "record is not a JSON object");
    const auto id = row.find("id");
    const auto dur = row.find("duration_sec");
    if (id == row.end() || !id->is_string() || id->get_ref<const std::string&>().empty()) {
      throw DataError(detail::at_line(line) + "missing or empty string field 'id'");
    }
    if (dur == row.end() || !dur->is_number()) {
      throw DataError(detail::at_line(line) + "missing numeric field 'duration_sec'");
    }
    IdDuration rec{id->get<std::string>(), dur->get<double>()};
    detail::check_duration(rec.duration_sec, line);
    if (!seen.insert(rec.id).second) {
      throw DataError(detail::at_line(line) + "duplicate id \"" + rec.id + "\"");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

/// One JSONL line per record, keys in the order id, duration_sec, embedding.
/// Doubles are printed in shortest round-trip form.
inline void write_manifest(const Corpus& corpus, const std::string& path,
                           bool with_embeddings = true) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : corpus.records) {
    nlohmann::ordered_json row;
    row["id"] = r.id;
    row["duration_sec"] = r.duration_sec;
    if (with_embeddings) row["embedding"] = r.embedding;
    out << row.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

/// Manifest without embeddings plus a LEMB blob. Embeddings are rounded to
/// f32 on the way out.
inline void write_binary_embeddings(const Corpus& corpus, const std::string& manifest_path,
                                    const std::string& blob_path) {
  write_manifest(corpus, manifest_path, false);
  std::ofstream out(blob_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + blob_path);
  out.write(kBlobMagic, 4);
  detail::write_le<std::uint8_t>(out, kBlobVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(corpus.dim));
  detail::write_le<std::uint64_t>(out, corpus.records.size());
  for (const auto& r : corpus.records) {
    for (double x : r.embedding) detail::write_le<float>(out, static_cast<float>(x));
  }
  if (!out) throw DataError("write failed: " + blob_path);
}

inline double total_duration(std::span<const UtteranceRecord> records) {
  double total = 0.0;
  for (const auto& r : records) total += r.duration_sec;
  return total;
}

inline Matrix embedding_matrix(const Corpus& corpus) {
  Matrix m(corpus.size(), corpus.dim);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::copy(corpus.records[i].embedding.begin(), corpus.records[i].embedding.end(),
              m.row(i).begin());
  }
  return m;
}

inline DurationMap duration_map(const Corpus& corpus) {
  DurationMap out;
  out.reserve(corpus.size());
  for (const auto& r : corpus.records) out.emplace(r.id, r.duration_sec);
  return out;
}

/// Scales each embedding to unit Euclidean norm (opt-in; zero vectors are
/// left unchanged).
inline void normalize_embeddings(Corpus& corpus) {
  for (auto& r : corpus.records) {
    double norm = 0.0;
    for (double x : r.embedding) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (double& x : r.embedding) x /= norm;
  }
}

}  // namespace lingsel
