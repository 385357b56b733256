#include "gacd/serialize.hpp"

#include <cstdio>
#include <filesystem>

namespace gacd {

BinaryWriter::BinaryWriter(const std::string& path) : path_(path), tmp_path_(path + ".tmp") {
    std::filesystem::path p(path_);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open for writing: " + tmp_path_);
}

BinaryWriter::~BinaryWriter() {
    if (!committed_) {
        out_.close();
        std::error_code ec;
        std::filesystem::remove(tmp_path_, ec);
    }
}

void BinaryWriter::raw(const void* data, size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void BinaryWriter::u32(uint32_t v) { raw(&v, sizeof v); }
void BinaryWriter::u64(uint64_t v) { raw(&v, sizeof v); }
void BinaryWriter::i64(int64_t v) { raw(&v, sizeof v); }
void BinaryWriter::f64(Scalar v) { raw(&v, sizeof v); }

void BinaryWriter::str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
}

void BinaryWriter::mat(const Matrix& m) {
    u64(static_cast<uint64_t>(m.rows()));
    u64(static_cast<uint64_t>(m.cols()));
    raw(m.data(), sizeof(Scalar) * static_cast<size_t>(m.size()));
}

void BinaryWriter::ivec(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) {
        int64_t w = x;
        raw(&w, sizeof w);
    }
}

void BinaryWriter::commit() {
    out_.flush();
    out_.close();
    if (!out_.good() && out_.fail()) throw std::runtime_error("write failed: " + tmp_path_);
    std::filesystem::rename(tmp_path_, path_);
    committed_ = true;
}

BinaryReader::BinaryReader(const std::string& path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_) throw std::runtime_error("cannot open for reading: " + path);
}

void BinaryReader::raw(void* data, size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) throw std::runtime_error("truncated file: " + path_);
}

uint32_t BinaryReader::u32() {
    uint32_t v;
    raw(&v, sizeof v);
    return v;
}
uint64_t BinaryReader::u64() {
    uint64_t v;
    raw(&v, sizeof v);
    return v;
}
int64_t BinaryReader::i64() {
    int64_t v;
    raw(&v, sizeof v);
    return v;
}
Scalar BinaryReader::f64() {
    Scalar v;
    raw(&v, sizeof v);
    return v;
}

std::string BinaryReader::str() {
    uint64_t n = u64();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
}

Matrix BinaryReader::mat() {
    uint64_t r = u64();
    uint64_t c = u64();
    Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    raw(m.data(), sizeof(Scalar) * static_cast<size_t>(m.size()));
    return m;
}

std::vector<int> BinaryReader::ivec() {
    uint64_t n = u64();
    std::vector<int> v(n);
    for (uint64_t i = 0; i < n; ++i) v[i] = static_cast<int>(i64());
    return v;
}

}  // namespace gacd
