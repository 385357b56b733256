#include "gacd/data.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace gacd {

namespace {

namespace fs = std::filesystem;

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing dataset file: " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<size_t>(in.tellg());
    in.seekg(0);
    std::vector<unsigned char> buf(size);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
    if (static_cast<size_t>(in.gcount()) != size)
        throw std::runtime_error("short read on dataset file: " + path.string());
    return buf;
}

fs::path resolve_root(const std::string& path) {
    fs::path p(path);
    if (const char* root = std::getenv("GACD_DATA_ROOT"); root && *root && p.is_relative())
        return fs::path(root) / p;
    return p;
}

// CIFAR record: 1 label byte (cifar100: coarse+fine) then 3072 pixel bytes,
// three 1024-byte planes.
void append_cifar_records(const std::vector<unsigned char>& buf, int label_bytes,
                          std::vector<std::vector<unsigned char>>& images, std::vector<int>& labels,
                          const std::string& origin) {
    const size_t record = static_cast<size_t>(label_bytes) + 3072;
    if (buf.empty() || buf.size() % record != 0)
        throw std::runtime_error("corrupt archive (size " + std::to_string(buf.size()) +
                                 " not a multiple of " + std::to_string(record) + "): " + origin);
    const size_t n = buf.size() / record;
    for (size_t i = 0; i < n; ++i) {
        const unsigned char* rec = buf.data() + i * record;
        labels.push_back(rec[label_bytes - 1]);  // fine label for cifar100
        images.emplace_back(rec + label_bytes, rec + record);
    }
}

DatasetSplit to_split(const std::vector<std::vector<unsigned char>>& images,
                      const std::vector<int>& labels, int dim) {
    DatasetSplit split;
    split.x.resize(dim, static_cast<Eigen::Index>(images.size()));
    for (size_t j = 0; j < images.size(); ++j)
        for (int i = 0; i < dim; ++i)
            split.x(i, static_cast<Eigen::Index>(j)) = images[j][static_cast<size_t>(i)] / 255.0;
    split.y = labels;
    split.checksum = split_checksum(split.x, split.y);
    return split;
}

Dataset load_cifar10(const fs::path& dir) {
    Dataset ds;
    ds.id = "cifar10";
    ds.shape = {3, 32, 32};
    ds.num_classes = 10;
    std::vector<std::vector<unsigned char>> images;
    std::vector<int> labels;
    for (int b = 1; b <= 5; ++b) {
        const fs::path f = dir / ("data_batch_" + std::to_string(b) + ".bin");
        append_cifar_records(read_file(f), 1, images, labels, f.string());
    }
    ds.train = to_split(images, labels, ds.shape.size());
    images.clear();
    labels.clear();
    const fs::path tf = dir / "test_batch.bin";
    append_cifar_records(read_file(tf), 1, images, labels, tf.string());
    ds.test = to_split(images, labels, ds.shape.size());
    return ds;
}

Dataset load_cifar100(const fs::path& dir) {
    Dataset ds;
    ds.id = "cifar100";
    ds.shape = {3, 32, 32};
    ds.num_classes = 100;
    std::vector<std::vector<unsigned char>> images;
    std::vector<int> labels;
    const fs::path trf = dir / "train.bin";
    append_cifar_records(read_file(trf), 2, images, labels, trf.string());
    ds.train = to_split(images, labels, ds.shape.size());
    images.clear();
    labels.clear();
    const fs::path tef = dir / "test.bin";
    append_cifar_records(read_file(tef), 2, images, labels, tef.string());
    ds.test = to_split(images, labels, ds.shape.size());
    return ds;
}

// STL-10 stores each image as three 96×96 planes in column-major order;
// labels run 1..10 in a separate file.
DatasetSplit load_stl10_split(const fs::path& xfile, const fs::path& yfile) {
    const std::vector<unsigned char> xs = read_file(xfile);
    const std::vector<unsigned char> ys = read_file(yfile);
    const size_t img_bytes = 3u * 96u * 96u;
    if (xs.empty() || xs.size() % img_bytes != 0)
        throw std::runtime_error("corrupt archive (bad image payload): " + xfile.string());
    const size_t n = xs.size() / img_bytes;
    if (ys.size() != n) throw std::runtime_error("label count mismatch: " + yfile.string());

    DatasetSplit split;
    split.x.resize(static_cast<Eigen::Index>(img_bytes), static_cast<Eigen::Index>(n));
    for (size_t s = 0; s < n; ++s) {
        const unsigned char* img = xs.data() + s * img_bytes;
        for (int c = 0; c < 3; ++c)
            for (int col = 0; col < 96; ++col)
                for (int row = 0; row < 96; ++row) {
                    const int src = c * 96 * 96 + col * 96 + row;  // column-major plane
                    const int dst = (c * 96 + row) * 96 + col;
                    split.x(dst, static_cast<Eigen::Index>(s)) = img[src] / 255.0;
                }
        const int label = ys[s];
        if (label < 1 || label > 10)
            throw std::runtime_error("label out of range in " + yfile.string());
        split.y.push_back(label - 1);
    }
    split.checksum = split_checksum(split.x, split.y);
    return split;
}

Dataset load_stl10(const fs::path& dir) {
    Dataset ds;
    ds.id = "stl10";
    ds.shape = {3, 96, 96};
    ds.num_classes = 10;
    ds.train = load_stl10_split(dir / "train_X.bin", dir / "train_y.bin");
    ds.test = load_stl10_split(dir / "test_X.bin", dir / "test_y.bin");
    return ds;
}

// Synthetic 2-class sets with a robust/fragile feature split:
//   - robust signal: class-oriented grating, amplitude well above the 8/255
//     attack budget once pooled;
//   - fragile shortcut: class-signed checkerboard at amplitude below the
//     budget, perfectly predictive on clean data but erasable by any
//     in-budget adversary.
// Random distractor gratings and pixel noise keep margins honest. The
// shifted variant keeps the class orientations but moves the grating
// frequency and distractor statistics, acting as a nearby transfer
// distribution. Generation is keyed by fixed constants so checksums are
// stable across machines and runs.
constexpr int kFixtureTrainPerClass = 256;
constexpr int kFixtureTestPerClass = 64;
constexpr Scalar kFixtureSignal = 0.16;
constexpr Scalar kFixtureShortcut = 0.018;  // < 8/255
constexpr Scalar kFixtureDistractor = 0.05;
constexpr int kFixtureDistractors = 3;
constexpr Scalar kFixtureNoise = 0.05;


Scalar grating(Scalar ux, Scalar uy, Scalar freq, Scalar phase, int px, int py) {
    const Scalar coord = ux * px + uy * py;
    return std::sin(2.0 * M_PI * freq * coord / 32.0 + phase);
}

DatasetSplit make_fixture_split(bool shifted, int per_class, uint64_t stream) {
    const ImageShape shape{3, 32, 32};
    const int n = 2 * per_class;
    DatasetSplit split;
    split.x.resize(shape.size(), n);
    split.y.resize(static_cast<size_t>(n));
    auto rng = subrng(0x66697874757265ull, {stream, shifted ? 1ull : 0ull});
    std::normal_distribution<Scalar> noise(0.0, kFixtureNoise);
    std::uniform_real_distribution<Scalar> uphase(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<Scalar> ufreq(1.5, 6.0);
    std::uniform_real_distribution<Scalar> uangle(0.0, M_PI);

    const Scalar signal_freq = shifted ? 4.2 : 3.0;
    for (int s = 0; s < n; ++s) {
        const int cls = s % 2;
        split.y[static_cast<size_t>(s)] = cls;
        // class signal: horizontal vs vertical grating
        const Scalar ux = (cls == 0) ? 1.0 : 0.0;
        const Scalar uy = (cls == 0) ? 0.0 : 1.0;
        const Scalar sig_phase = uphase(rng);

        struct Distractor {
            Scalar ux, uy, freq, phase;
        };
        Distractor distractors[kFixtureDistractors];
        for (auto& d : distractors) {
            const Scalar a = uangle(rng);
            d = {std::cos(a), std::sin(a), shifted ? ufreq(rng) + 1.0 : ufreq(rng), uphase(rng)};
        }

        const Scalar shortcut_sign = (cls == 0) ? 1.0 : -1.0;
        for (int c = 0; c < 3; ++c)
            for (int py = 0; py < 32; ++py)
                for (int px = 0; px < 32; ++px) {
                    Scalar v = 0.5 + kFixtureSignal * grating(ux, uy, signal_freq, sig_phase, px, py);
                    v += kFixtureShortcut * shortcut_sign * (((px + py) % 2 == 0) ? 1.0 : -1.0);
                    for (const auto& d : distractors)
                        v += kFixtureDistractor * grating(d.ux, d.uy, d.freq, d.phase, px, py);
                    v += noise(rng);
                    split.x((c * 32 + py) * 32 + px, s) = std::min(1.0, std::max(0.0, v));
                }
    }
    split.checksum = split_checksum(split.x, split.y);
    return split;
}

Dataset make_fixture(bool shifted) {
    Dataset ds;
    ds.id = shifted ? "fixture_shift" : "fixture";
    ds.shape = {3, 32, 32};
    ds.num_classes = 2;
    ds.train = make_fixture_split(shifted, kFixtureTrainPerClass, 0);
    ds.test = make_fixture_split(shifted, kFixtureTestPerClass, 1);
    return ds;
}

}  // namespace

uint64_t split_checksum(const Matrix& x, const std::vector<int>& y) {
    uint64_t h = fnv1a64(x.data(), sizeof(Scalar) * static_cast<size_t>(x.size()));
    return fnv1a64(y.data(), sizeof(int) * y.size(), h);
}

Dataset ingest_dataset(const std::string& name, const std::string& path) {
    if (name == "fixture") return make_fixture(false);
    if (name == "fixture_shift") return make_fixture(true);
    const fs::path dir = resolve_root(path);
    if (name == "cifar10") return load_cifar10(dir);
    if (name == "cifar100") return load_cifar100(dir);
    if (name == "stl10") return load_stl10(dir);
    throw std::invalid_argument("unknown dataset '" + name +
                                "' (supported: cifar10, cifar100, stl10, fixture, fixture_shift)");
}

Matrix resize_bilinear(const Matrix& images, ImageShape from, ImageShape to) {
    if (from.size() != images.rows()) throw std::invalid_argument("image shape mismatch");
    if (from.channels != to.channels) throw std::invalid_argument("channel count mismatch");
    if (from.height == to.height && from.width == to.width) return images;

    Matrix out(to.size(), images.cols());
    const Scalar sy = static_cast<Scalar>(from.height) / to.height;
    const Scalar sx = static_cast<Scalar>(from.width) / to.width;
    for (Eigen::Index s = 0; s < images.cols(); ++s) {
        for (int c = 0; c < to.channels; ++c)
            for (int oy = 0; oy < to.height; ++oy)
                for (int ox = 0; ox < to.width; ++ox) {
                    const Scalar fy = (oy + 0.5) * sy - 0.5;
                    const Scalar fx = (ox + 0.5) * sx - 0.5;
                    const int y0 = std::max(0, std::min(from.height - 1, static_cast<int>(std::floor(fy))));
                    const int x0 = std::max(0, std::min(from.width - 1, static_cast<int>(std::floor(fx))));
                    const int y1 = std::min(from.height - 1, y0 + 1);
                    const int x1 = std::min(from.width - 1, x0 + 1);
                    const Scalar wy = std::min(1.0, std::max(0.0, fy - y0));
                    const Scalar wx = std::min(1.0, std::max(0.0, fx - x0));
                    auto px = [&](int yy, int xx) {
                        return images((c * from.height + yy) * from.width + xx, s);
                    };
                    const Scalar top = px(y0, x0) * (1 - wx) + px(y0, x1) * wx;
                    const Scalar bot = px(y1, x0) * (1 - wx) + px(y1, x1) * wx;
                    out((c * to.height + oy) * to.width + ox, s) = top * (1 - wy) + bot * wy;
                }
    }
    return out;
}

}  // namespace gacd
