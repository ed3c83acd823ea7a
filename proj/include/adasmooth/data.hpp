// Dataset container, synthetic dataset generation and IDX (MNIST-layout)
// ingestion. All generation is deterministic given the seed.
#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "adasmooth/core.hpp"

namespace adasmooth {

/// Labeled dataset. `lo`/`hi` describe the valid input domain per
/// dimension; synthetic data records its empirical bounding box (attacks
/// pad it by their radius), image data is pinned to [0, 1].
struct Dataset {
    RealMatrix inputs;            // n x d
    std::vector<int> labels;      // n, values in [0, c)
    int num_classes = 0;
    RealVector lo, hi;            // valid input domain box
    bool pad_domain_by_eps = true;

    std::size_t size() const { return inputs.rows; }
    std::size_t dim() const { return inputs.cols; }

    void validate() const {
        require(inputs.rows >= 1, "dataset: empty");
        require(labels.size() == inputs.rows, "dataset: label count mismatch");
        require(num_classes >= 2, "dataset: need at least two classes");
        for (int y : labels)
            require(y >= 0 && y < num_classes, "dataset: label out of range");
    }

    void compute_domain_box() {
        lo.assign(dim(), std::numeric_limits<double>::infinity());
        hi.assign(dim(), -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = 0; j < dim(); ++j) {
                lo[j] = std::min(lo[j], inputs(i, j));
                hi[j] = std::max(hi[j], inputs(i, j));
            }
    }
};

enum class SyntheticKind { TwoMoons, GaussianBlobs, ConcentricCircles };

inline SyntheticKind synthetic_kind_from_name(const std::string& s) {
    if (s == "two-moons") return SyntheticKind::TwoMoons;
    if (s == "gaussian-blobs") return SyntheticKind::GaussianBlobs;
    if (s == "concentric-circles") return SyntheticKind::ConcentricCircles;
    throw ConfigError("unknown synthetic dataset kind: " + s);
}

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::TwoMoons;
    std::size_t n_per_class = 500;
    double noise = 0.1;
    std::uint64_t seed = 0;
    int num_classes = 2;  // blobs support c > 2; moons/circles are binary

    void validate() const {
        require(n_per_class >= 1, "synthetic spec: n per class must be >= 1");
        require(noise >= 0.0, "synthetic spec: noise must be >= 0");
        require(num_classes >= 2, "synthetic spec: need at least two classes");
        if (kind != SyntheticKind::GaussianBlobs)
            require(num_classes == 2, "synthetic spec: only blobs support c > 2");
    }
};

/// Deterministic synthetic data. Class points are laid out on a fixed
/// noiseless skeleton, then jittered with seeded Gaussian noise.
inline Dataset generate(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng = make_rng(derive_seed(spec.seed, "synthetic"));
    Dataset ds;
    ds.num_classes = spec.num_classes;
    std::size_t n = spec.n_per_class * static_cast<std::size_t>(spec.num_classes);
    ds.inputs = RealMatrix(n, 2);
    ds.labels.resize(n);

    auto place = [&](std::size_t row, double x0, double x1, int label) {
        ds.inputs(row, 0) = x0 + gaussian(rng) * spec.noise;
        ds.inputs(row, 1) = x1 + gaussian(rng) * spec.noise;
        ds.labels[row] = label;
    };

    std::size_t row = 0;
    switch (spec.kind) {
        case SyntheticKind::TwoMoons: {
            // Interlocking half circles: upper arc and a shifted lower arc.
            for (std::size_t i = 0; i < spec.n_per_class; ++i) {
                double t = M_PI * static_cast<double>(i) /
                           static_cast<double>(std::max<std::size_t>(1, spec.n_per_class - 1));
                place(row++, std::cos(t), std::sin(t), 0);
            }
            for (std::size_t i = 0; i < spec.n_per_class; ++i) {
                double t = M_PI * static_cast<double>(i) /
                           static_cast<double>(std::max<std::size_t>(1, spec.n_per_class - 1));
                place(row++, 1.0 - std::cos(t), 0.5 - std::sin(t), 1);
            }
            break;
        }
        case SyntheticKind::GaussianBlobs: {
            // Class centers equally spaced on the unit circle; for c=2 the
            // centers are (-1, 0) and (1, 0).
            for (int cls = 0; cls < spec.num_classes; ++cls) {
                double ang = M_PI + 2.0 * M_PI * cls / spec.num_classes;
                double cx = std::cos(ang), cy = std::sin(ang);
                if (std::abs(cx) < 1e-15) cx = 0.0;
                if (std::abs(cy) < 1e-15) cy = 0.0;
                for (std::size_t i = 0; i < spec.n_per_class; ++i) place(row++, cx, cy, cls);
            }
            break;
        }
        case SyntheticKind::ConcentricCircles: {
            const double radius[2] = {1.0, 0.55};
            for (int cls = 0; cls < 2; ++cls)
                for (std::size_t i = 0; i < spec.n_per_class; ++i) {
                    double t = 2.0 * M_PI * static_cast<double>(i) /
                               static_cast<double>(spec.n_per_class);
                    place(row++, radius[cls] * std::cos(t), radius[cls] * std::sin(t), cls);
                }
            break;
        }
    }
    ds.compute_domain_box();
    ds.pad_domain_by_eps = true;
    ds.validate();
    return ds;
}

/// Seeded-shuffle split; first fraction goes to train.
inline std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double train_frac,
                                                   std::uint64_t seed) {
    require(train_frac > 0.0 && train_frac < 1.0, "split: fraction must be in (0,1)");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(derive_seed(seed, "split"));
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);

    std::size_t n_train = static_cast<std::size_t>(train_frac * static_cast<double>(ds.size()));
    n_train = std::max<std::size_t>(1, std::min(ds.size() - 1, n_train));
    auto take = [&](std::size_t from, std::size_t count) {
        Dataset out;
        out.num_classes = ds.num_classes;
        out.inputs = RealMatrix(count, ds.dim());
        out.labels.resize(count);
        out.lo = ds.lo;
        out.hi = ds.hi;
        out.pad_domain_by_eps = ds.pad_domain_by_eps;
        for (std::size_t i = 0; i < count; ++i) {
            out.inputs.set_row(i, ds.inputs.row(idx[from + i]));
            out.labels[i] = ds.labels[idx[from + i]];
        }
        return out;
    };
    return {take(0, n_train), take(n_train, ds.size() - n_train)};
}

// ---- IDX ingestion -------------------------------------------------------

namespace detail {
inline std::uint32_t read_be32(std::istream& is, const std::string& what) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4)) throw FormatError(what + ": truncated file");
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}
}  // namespace detail

/// Load an IDX image/label pair (canonical MNIST layout, big-endian).
/// Pixels are rescaled to [0, 1]; at most `limit` examples are taken.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::size_t limit) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw FormatError("cannot open: " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw FormatError("cannot open: " + labels_path);

    if (detail::read_be32(imgs, "idx images") != 0x00000803u)
        throw FormatError("idx images: bad magic");
    std::size_t n_img = detail::read_be32(imgs, "idx images");
    std::size_t rows = detail::read_be32(imgs, "idx images");
    std::size_t cols = detail::read_be32(imgs, "idx images");

    if (detail::read_be32(labs, "idx labels") != 0x00000801u)
        throw FormatError("idx labels: bad magic");
    std::size_t n_lab = detail::read_be32(labs, "idx labels");
    if (n_img != n_lab) throw FormatError("idx: image/label count mismatch");

    std::size_t n = std::min(limit, n_img);
    std::size_t d = rows * cols;
    Dataset ds;
    ds.num_classes = 10;
    ds.inputs = RealMatrix(n, d);
    ds.labels.resize(n);
    std::vector<unsigned char> px(d);
    for (std::size_t i = 0; i < n; ++i) {
        if (!imgs.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(d)))
            throw FormatError("idx images: truncated pixel data");
        for (std::size_t j = 0; j < d; ++j) ds.inputs(i, j) = px[j] / 255.0;
        char lab = 0;
        if (!labs.read(&lab, 1)) throw FormatError("idx labels: truncated label data");
        ds.labels[i] = static_cast<unsigned char>(lab);
    }
    ds.lo.assign(d, 0.0);
    ds.hi.assign(d, 1.0);
    ds.pad_domain_by_eps = false;  // image domain is exactly [0,1]^d
    if (n > 0) ds.validate();
    return ds;
}

/// Debug CSV export: label,x0,x1,...
inline void export_csv(const Dataset& ds, std::ostream& os) {
    os << "# adasmooth csv v1 dataset\n";
    os << "label";
    for (std::size_t j = 0; j < ds.dim(); ++j) os << ",x" << j;
    os << "\n";
    os.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        os << ds.labels[i];
        for (std::size_t j = 0; j < ds.dim(); ++j) os << "," << ds.inputs(i, j);
        os << "\n";
    }
}

}  // namespace adasmooth
