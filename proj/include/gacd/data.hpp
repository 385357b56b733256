#ifndef GACD_DATA_HPP
#define GACD_DATA_HPP

#include <string>
#include <vector>

#include "gacd/common.hpp"

namespace gacd {

struct DatasetSplit {
    Matrix x;  // pixels in [0,1], one column per sample
    std::vector<int> y;
    uint64_t checksum = 0;
    int size() const { return static_cast<int>(x.cols()); }
};

struct Dataset {
    std::string id;
    ImageShape shape;
    int num_classes = 0;
    DatasetSplit train;
    DatasetSplit test;
};

// Loads a dataset by name from its canonical published binary layout:
//   cifar10  – data_batch_{1..5}.bin / test_batch.bin under `path`
//   cifar100 – train.bin / test.bin under `path`
//   stl10    – train_X.bin/train_y.bin/test_X.bin/test_y.bin under `path`
//   fixture, fixture_shift – built-in synthetic 2-class sets, no files
// The GACD_DATA_ROOT environment variable, when set, prefixes relative
// paths. Throws with the supported-name list on an unknown name.
Dataset ingest_dataset(const std::string& name, const std::string& path);

// Bilinear resampling of a flattened image batch (used when a transfer set's
// resolution differs from the backbone's native input).
Matrix resize_bilinear(const Matrix& images, ImageShape from, ImageShape to);

uint64_t split_checksum(const Matrix& x, const std::vector<int>& y);

}  // namespace gacd

#endif  // GACD_DATA_HPP
