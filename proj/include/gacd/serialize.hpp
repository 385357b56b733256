#ifndef GACD_SERIALIZE_HPP
#define GACD_SERIALIZE_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gacd/common.hpp"

namespace gacd {

// Little-endian binary writer. Writes to <path>.tmp and renames on close so
// readers never observe a partial file.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path);
    ~BinaryWriter();

    BinaryWriter(const BinaryWriter&) = delete;
    BinaryWriter& operator=(const BinaryWriter&) = delete;

    void u32(uint32_t v);
    void u64(uint64_t v);
    void i64(int64_t v);
    void f64(Scalar v);
    void str(const std::string& s);
    void mat(const Matrix& m);
    void ivec(const std::vector<int>& v);

    // Flush, close and atomically move into place.
    void commit();

private:
    void raw(const void* data, size_t n);
    std::string path_;
    std::string tmp_path_;
    std::ofstream out_;
    bool committed_ = false;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path);

    uint32_t u32();
    uint64_t u64();
    int64_t i64();
    Scalar f64();
    std::string str();
    Matrix mat();
    std::vector<int> ivec();

private:
    void raw(void* data, size_t n);
    std::string path_;
    std::ifstream in_;
};

}  // namespace gacd

#endif  // GACD_SERIALIZE_HPP
