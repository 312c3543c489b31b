#include "planpaint/record_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "record container assumes a little-endian host");

namespace planpaint {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'P', 'P', 'R', '1'};

uint32_t crc_of(const std::string& header, const std::vector<char>& payload) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(header.data()),
              static_cast<uInt>(header.size()));
  if (!payload.empty())
    crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()),
                static_cast<uInt>(payload.size()));
  return static_cast<uint32_t>(crc);
}

void append_bytes(std::vector<char>& out, const void* src, size_t n) {
  const size_t at = out.size();
  out.resize(at + n);
  std::memcpy(out.data() + at, src, n);
}

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    PP_CHECK_MSG(d >= 0, "negative array dimension");
    n *= d;
  }
  return n;
}

}  // namespace

ArrayData ArrayData::make_f32(std::string name, std::vector<int64_t> shape,
                              std::vector<float> values) {
  ArrayData a;
  a.name = std::move(name);
  a.dtype = "f32";
  a.shape = std::move(shape);
  a.f32 = std::move(values);
  PP_CHECK_MSG(shape_numel(a.shape) == static_cast<int64_t>(a.f32.size()),
               "array '" + a.name + "': shape does not match value count");
  return a;
}

ArrayData ArrayData::make_i32(std::string name, std::vector<int64_t> shape,
                              std::vector<int32_t> values) {
  ArrayData a;
  a.name = std::move(name);
  a.dtype = "i32";
  a.shape = std::move(shape);
  a.i32 = std::move(values);
  PP_CHECK_MSG(shape_numel(a.shape) == static_cast<int64_t>(a.i32.size()),
               "array '" + a.name + "': shape does not match value count");
  return a;
}

int64_t ArrayData::numel() const { return shape_numel(shape); }

const ArrayData* Record::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const ArrayData& Record::get(const std::string& name) const {
  const ArrayData* a = find(name);
  if (!a) throw Error("record is missing array '" + name + "'");
  return *a;
}

RecordWriter::RecordWriter(const std::string& path) : path_(path) {
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_) throw Error("cannot open '" + path + "' for writing");
}

RecordWriter::~RecordWriter() {
  if (file_) std::fclose(file_);
}

void RecordWriter::close() {
  if (!file_) return;
  const int rc = std::fclose(file_);
  file_ = nullptr;
  if (rc != 0) throw Error("error closing '" + path_ + "'");
}

void RecordWriter::write(const Record& record) {
  PP_CHECK_MSG(file_ != nullptr, "write on closed RecordWriter");
  json header_arrays = json::array();
  std::vector<char> payload;
  for (const auto& a : record.arrays) {
    PP_CHECK_MSG(a.dtype == "f32" || a.dtype == "i32",
                 "array '" + a.name + "': unsupported dtype '" + a.dtype + "'");
    const int64_t n = a.numel();
    if (a.dtype == "f32") {
      PP_CHECK_MSG(n == static_cast<int64_t>(a.f32.size()),
                   "array '" + a.name + "': shape/value mismatch");
      append_bytes(payload, a.f32.data(), a.f32.size() * sizeof(float));
    } else {
      PP_CHECK_MSG(n == static_cast<int64_t>(a.i32.size()),
                   "array '" + a.name + "': shape/value mismatch");
      append_bytes(payload, a.i32.data(), a.i32.size() * sizeof(int32_t));
    }
    header_arrays.push_back(
        {{"name", a.name}, {"dtype", a.dtype}, {"shape", a.shape}});
  }
  const std::string header = json{{"arrays", header_arrays}}.dump();
  const uint32_t header_len = static_cast<uint32_t>(header.size());
  const uint32_t crc = crc_of(header, payload);

  auto put = [&](const void* src, size_t n) {
    if (std::fwrite(src, 1, n, file_) != n)
      throw Error("short write to '" + path_ + "'");
  };
  put(kMagic, sizeof(kMagic));
  put(&header_len, sizeof(header_len));
  put(header.data(), header.size());
  if (!payload.empty()) put(payload.data(), payload.size());
  put(&crc, sizeof(crc));
}

RecordReader::RecordReader(const std::string& path) : path_(path) {
  file_ = std::fopen(path.c_str(), "rb");
  if (!file_) throw Error("cannot open '" + path + "' for reading");
}

RecordReader::~RecordReader() {
  if (file_) std::fclose(file_);
}

std::optional<Record> RecordReader::next() {
  PP_CHECK_MSG(file_ != nullptr, "next on closed RecordReader");
  char magic[4];
  const size_t got = std::fread(magic, 1, sizeof(magic), file_);
  if (got == 0 && std::feof(file_)) return std::nullopt;
  if (got != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw Error("corrupted record in '" + path_ + "': bad magic");

  auto take = [&](void* dst, size_t n, const char* what) {
    if (std::fread(dst, 1, n, file_) != n)
      throw Error("corrupted record in '" + path_ + "': truncated " +
                  std::string(what));
  };
  uint32_t header_len = 0;
  take(&header_len, sizeof(header_len), "header length");
  std::string header(header_len, '\0');
  take(header.data(), header_len, "header");

  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw Error("corrupted record in '" + path_ + "': bad header JSON (" +
                e.what() + ")");
  }

  Record record;
  size_t payload_bytes = 0;
  for (const auto& ja : h.at("arrays")) {
    ArrayData a;
    a.name = ja.at("name").get<std::string>();
    a.dtype = ja.at("dtype").get<std::string>();
    a.shape = ja.at("shape").get<std::vector<int64_t>>();
    if (a.dtype != "f32" && a.dtype != "i32")
      throw Error("corrupted record in '" + path_ + "': array '" + a.name +
                  "' has unsupported dtype '" + a.dtype + "'");
    payload_bytes += static_cast<size_t>(a.numel()) * 4;
    record.arrays.push_back(std::move(a));
  }

  std::vector<char> payload(payload_bytes);
  if (payload_bytes > 0) take(payload.data(), payload_bytes, "payload");
  uint32_t stored_crc = 0;
  take(&stored_crc, sizeof(stored_crc), "checksum");
  if (stored_crc != crc_of(header, payload))
    throw Error("corrupted record in '" + path_ + "': checksum mismatch");

  size_t at = 0;
  for (auto& a : record.arrays) {
    const size_t n = static_cast<size_t>(a.numel());
    if (a.dtype == "f32") {
      a.f32.resize(n);
      std::memcpy(a.f32.data(), payload.data() + at, n * sizeof(float));
    } else {
      a.i32.resize(n);
      std::memcpy(a.i32.data(), payload.data() + at, n * sizeof(int32_t));
    }
    at += n * 4;
  }
  return record;
}

void write_records(const std::string& path,
                   const std::vector<Record>& records) {
  RecordWriter writer(path);
  for (const auto& r : records) writer.write(r);
  writer.close();
}

std::vector<Record> read_records(const std::string& path) {
  RecordReader reader(path);
  std::vector<Record> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error("short write to '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for reading");
  std::string out((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  return out;
}

}  // namespace planpaint
