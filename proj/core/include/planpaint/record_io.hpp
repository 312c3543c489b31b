#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "planpaint/error.hpp"

namespace planpaint {

// One named array inside a record. Exactly one of f32/i32 is populated,
// selected by dtype ("f32" or "i32"). Shapes are row-major.
struct ArrayData {
  std::string name;
  std::string dtype;
  std::vector<int64_t> shape;
  std::vector<float> f32;
  std::vector<int32_t> i32;

  static ArrayData make_f32(std::string name, std::vector<int64_t> shape,
                            std::vector<float> values);
  static ArrayData make_i32(std::string name, std::vector<int64_t> shape,
                            std::vector<int32_t> values);
  int64_t numel() const;
};

// A record is an ordered set of named arrays; it is the unit of checksumming.
// Datasets store one record per episode, checkpoints one record per tensor.
struct Record {
  std::vector<ArrayData> arrays;

  const ArrayData& get(const std::string& name) const;
  const ArrayData* find(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) != nullptr; }
};

// Binary container: a flat sequence of records, each laid out as
//   [4-byte magic "PPR1"][u32 header bytes][JSON header][payload][u32 crc32]
// where the JSON header names every array (name, dtype, shape) in payload
// order, the payload is the arrays' raw little-endian row-major bytes, and
// the trailing crc32 covers header+payload.
class RecordWriter {
 public:
  explicit RecordWriter(const std::string& path);
  ~RecordWriter();
  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  void write(const Record& record);
  void close();

 private:
  std::string path_;
  std::FILE* file_ = nullptr;
};

class RecordReader {
 public:
  explicit RecordReader(const std::string& path);
  ~RecordReader();
  RecordReader(const RecordReader&) = delete;
  RecordReader& operator=(const RecordReader&) = delete;

  // Returns the next record, or nullopt at a clean end of file. Throws Error
  // on magic/checksum mismatch or truncation.
  std::optional<Record> next();

 private:
  std::string path_;
  std::FILE* file_ = nullptr;
};

void write_records(const std::string& path, const std::vector<Record>& records);
std::vector<Record> read_records(const std::string& path);

// Small JSON-file helpers used for manifest.json files (implemented over the
// vendored nlohmann/json; kept out of this header so the dependency stays
// private to the library).
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace planpaint
