#include "maxrr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "maxrr/error.hpp"
#include "maxrr/hash.hpp"
#include "maxrr/rng.hpp"

namespace maxrr {

std::string to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

IdSet::IdSet(std::vector<int64_t> raw) : ids(std::move(raw)) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
}

bool IdSet::contains(int64_t id) const {
    return std::binary_search(ids.begin(), ids.end(), id);
}

IdSet IdSet::set_union(const IdSet& other) const {
    IdSet out;
    out.ids.reserve(ids.size() + other.ids.size());
    std::set_union(ids.begin(), ids.end(), other.ids.begin(), other.ids.end(),
                   std::back_inserter(out.ids));
    return out;
}

IdSet IdSet::set_difference(const IdSet& other) const {
    IdSet out;
    std::set_difference(ids.begin(), ids.end(), other.ids.begin(), other.ids.end(),
                        std::back_inserter(out.ids));
    return out;
}

IdSet IdSet::set_intersection(const IdSet& other) const {
    IdSet out;
    std::set_intersection(ids.begin(), ids.end(), other.ids.begin(), other.ids.end(),
                          std::back_inserter(out.ids));
    return out;
}

bool IdSet::is_subset_of(const IdSet& other) const {
    return std::includes(other.ids.begin(), other.ids.end(), ids.begin(), ids.end());
}

bool IdSet::intersects(const IdSet& other) const {
    auto a = ids.begin();
    auto b = other.ids.begin();
    while (a != ids.end() && b != other.ids.end()) {
        if (*a < *b) {
            ++a;
        } else if (*b < *a) {
            ++b;
        } else {
            return true;
        }
    }
    return false;
}

IdSet sample_ids(const IdSet& pool, size_t n, uint64_t seed) {
    if (n > pool.size()) {
        throw InvalidParam("sample_ids: requested " + std::to_string(n) + " from pool of " +
                           std::to_string(pool.size()));
    }
    std::vector<int64_t> shuffled = pool.ids;
    Rng rng(seed);
    rng.shuffle(shuffled);
    shuffled.resize(n);
    return IdSet(std::move(shuffled));
}

size_t LabeledDataset::index_of(int64_t id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) {
        throw UnknownId("sample id " + std::to_string(id) + " not in dataset");
    }
    return static_cast<size_t>(it - ids.begin());
}

void LabeledDataset::validate() const {
    if (features.rows != labels.size() || features.rows != ids.size()) {
        throw InvalidParam("dataset row/label/id counts disagree");
    }
    for (size_t i = 1; i < ids.size(); ++i) {
        if (ids[i] <= ids[i - 1]) throw InvalidParam("dataset ids not strictly ascending");
    }
    for (int lab : labels) {
        if (lab < 0 || lab >= num_classes) throw InvalidParam("label out of range");
    }
    for (double v : features.data) {
        if (!std::isfinite(v)) throw InvalidParam("non-finite feature value");
    }
}

uint64_t LabeledDataset::content_hash() const {
    Fnv1a h;
    h.update_pod<uint64_t>(features.rows);
    h.update_pod<uint64_t>(features.cols);
    h.update_vec(features.data);
    h.update_vec(labels);
    h.update_vec(ids);
    h.update_pod<int>(num_classes);
    return h.digest();
}

namespace {

uint32_t read_be_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) {
        throw TruncatedFile(path + ": truncated header");
    }
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) |
           uint32_t(b[3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw TruncatedFile(images_path + ": cannot open");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw TruncatedFile(labels_path + ": cannot open");

    const uint32_t img_magic = read_be_u32(img, images_path);
    if (img_magic != 0x00000803u) {
        throw MagicMismatch(images_path + ": expected magic 0x00000803");
    }
    const uint32_t n_images = read_be_u32(img, images_path);
    const uint32_t n_rows = read_be_u32(img, images_path);
    const uint32_t n_cols = read_be_u32(img, images_path);

    const uint32_t lab_magic = read_be_u32(lab, labels_path);
    if (lab_magic != 0x00000801u) {
        throw MagicMismatch(labels_path + ": expected magic 0x00000801");
    }
    const uint32_t n_labels = read_be_u32(lab, labels_path);
    if (n_images != n_labels) {
        throw CountMismatch(images_path + " has " + std::to_string(n_images) + " items but " +
                            labels_path + " has " + std::to_string(n_labels));
    }

    const size_t pixels = size_t(n_rows) * n_cols;
    std::vector<unsigned char> img_bytes(size_t(n_images) * pixels);
    if (!img_bytes.empty() &&
        !img.read(reinterpret_cast<char*>(img_bytes.data()),
                  static_cast<std::streamsize>(img_bytes.size()))) {
        throw TruncatedFile(images_path + ": fewer pixel bytes than header declares");
    }
    std::vector<unsigned char> lab_bytes(n_labels);
    if (!lab_bytes.empty() &&
        !lab.read(reinterpret_cast<char*>(lab_bytes.data()),
                  static_cast<std::streamsize>(lab_bytes.size()))) {
        throw TruncatedFile(labels_path + ": fewer label bytes than header declares");
    }

    LabeledDataset ds;
    ds.features = Matrix(n_images, pixels);
    for (size_t i = 0; i < img_bytes.size(); ++i) {
        ds.features.data[i] = double(img_bytes[i]) / 255.0;
    }
    ds.labels.resize(n_labels);
    int max_label = -1;
    for (size_t i = 0; i < lab_bytes.size(); ++i) {
        ds.labels[i] = int(lab_bytes[i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.ids.resize(n_images);
    for (size_t i = 0; i < ds.ids.size(); ++i) ds.ids[i] = int64_t(i);
    ds.num_classes = max_label + 1;
    return ds;
}

LabeledDataset synth_blobs(int num_classes, int per_class, int d, double separation,
                           uint64_t seed) {
    if (num_classes < 2 || per_class < 1 || d < 1 || !(separation > 0.0)) {
        throw InvalidParam("synth_blobs: need num_classes >= 2, per_class >= 1, d >= 1, "
                           "separation > 0");
    }

    // Class means: vertices of a regular polygon in the first two dimensions,
    // radius chosen so adjacent means are `separation` apart. d == 1 falls
    // back to equally spaced points on the line.
    std::vector<std::vector<double>> means(num_classes, std::vector<double>(d, 0.0));
    if (d == 1) {
        for (int c = 0; c < num_classes; ++c) means[c][0] = separation * c;
    } else {
        const double pi = 3.14159265358979323846;
        const double radius = separation / (2.0 * std::sin(pi / num_classes));
        for (int c = 0; c < num_classes; ++c) {
            const double angle = 2.0 * pi * c / num_classes;
            means[c][0] = radius * std::cos(angle);
            means[c][1] = radius * std::sin(angle);
        }
    }

    const size_t m = size_t(num_classes) * per_class;
    LabeledDataset ds;
    ds.features = Matrix(m, d);
    ds.labels.resize(m);
    ds.ids.resize(m);
    ds.num_classes = num_classes;

    Rng rng(seed);
    size_t row = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++row) {
            auto out = ds.features.row(row);
            for (int j = 0; j < d; ++j) out[j] = means[c][j] + rng.normal();
            ds.labels[row] = c;
            ds.ids[row] = int64_t(row);
        }
    }
    return ds;
}

LabeledDataset subset(const LabeledDataset& ds, const IdSet& keep) {
    if (!keep.is_subset_of(ds.id_set())) {
        for (int64_t id : keep.ids) {
            if (!std::binary_search(ds.ids.begin(), ds.ids.end(), id)) {
                throw UnknownId("subset: id " + std::to_string(id) + " not in dataset");
            }
        }
    }
    LabeledDataset out;
    out.features = Matrix(keep.size(), ds.dim());
    out.labels.resize(keep.size());
    out.ids = keep.ids;
    out.num_classes = ds.num_classes;
    for (size_t i = 0; i < keep.size(); ++i) {
        const size_t src = ds.index_of(keep.ids[i]);
        auto src_row = ds.features.row(src);
        std::copy(src_row.begin(), src_row.end(), out.features.row(i).begin());
        out.labels[i] = ds.labels[src];
    }
    return out;
}

SplitResult split(const LabeledDataset& ds, const SplitSpec& spec) {
    IdSet train_ids;
    IdSet test_ids;
    if (spec.train_ids.has_value()) {
        train_ids = *spec.train_ids;
        test_ids = spec.test_ids.has_value() ? *spec.test_ids
                                             : ds.id_set().set_difference(train_ids);
    } else {
        if (spec.train_fraction < 0.0 || spec.train_fraction > 1.0) {
            throw InvalidParam("split: train_fraction outside [0,1]");
        }
        const size_t n_train =
            static_cast<size_t>(std::llround(spec.train_fraction * double(ds.size())));
        train_ids = sample_ids(ds.id_set(), n_train, spec.seed);
        test_ids = ds.id_set().set_difference(train_ids);
    }
    if (train_ids.intersects(test_ids)) {
        throw InvalidParam("split: train and test ids overlap");
    }
    return SplitResult{subset(ds, train_ids), subset(ds, test_ids)};
}

namespace {

size_t parse_count(const std::string& s, const std::string& line) {
    try {
        long long v = std::stoll(s);
        if (v < 0) throw std::out_of_range("negative");
        return static_cast<size_t>(v);
    } catch (const std::exception&) {
        throw InvalidParam("forget spec: bad count in '" + line + "'");
    }
}

}  // namespace

ForgetSpec parse_forget_spec(const std::string& text) {
    ForgetSpec spec;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        // strip whitespace and comments
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        ForgetDirective d;
        if (line.rfind("top-k:", 0) == 0) {
            d.kind = ForgetDirective::Kind::TopK;
            d.k = parse_count(line.substr(6), line);
        } else if (line.rfind("non-top-k:", 0) == 0) {
            d.kind = ForgetDirective::Kind::NonTopK;
            d.k = parse_count(line.substr(10), line);
        } else if (line.rfind("random:", 0) == 0) {
            d.kind = ForgetDirective::Kind::Random;
            std::string rest = line.substr(7);
            const auto c1 = rest.find(':');
            if (c1 == std::string::npos) throw InvalidParam("forget spec: '" + line + "'");
            d.n = parse_count(rest.substr(0, c1), line);
            rest = rest.substr(c1 + 1);
            const auto c2 = rest.find(':');
            if (c2 == std::string::npos) throw InvalidParam("forget spec: '" + line + "'");
            d.seed = static_cast<uint64_t>(parse_count(rest.substr(0, c2), line));
            const std::string pool = rest.substr(c2 + 1);
            if (pool == "all") {
                d.pool = ForgetDirective::Pool::All;
            } else if (pool.rfind("top-k:", 0) == 0) {
                d.pool = ForgetDirective::Pool::TopK;
                d.k = parse_count(pool.substr(6), line);
            } else if (pool.rfind("non-top-k:", 0) == 0) {
                d.pool = ForgetDirective::Pool::NonTopK;
                d.k = parse_count(pool.substr(10), line);
            } else {
                throw InvalidParam("forget spec: unknown pool in '" + line + "'");
            }
        } else {
            d.kind = ForgetDirective::Kind::Id;
            try {
                d.id = std::stoll(line);
            } catch (const std::exception&) {
                throw InvalidParam("forget spec: unrecognized line '" + line + "'");
            }
        }
        spec.directives.push_back(d);
    }
    return spec;
}

ForgetSpec load_forget_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TruncatedFile(path + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_forget_spec(ss.str());
}

}  // namespace maxrr
