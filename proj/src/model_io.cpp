#include "maxrr/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "maxrr/error.hpp"
#include "maxrr/hash.hpp"

namespace maxrr {

namespace {

constexpr char kMagic[8] = {'M', 'X', 'R', 'R', 'M', 'D', 'L', '1'};
constexpr uint32_t kVersion = 1;

class ByteWriter {
public:
    void u8(uint8_t v) { out_.push_back(v); }

    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(uint8_t(v >> (8 * i)));
    }

    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(uint8_t(v >> (8 * i)));
    }

    void i64(int64_t v) { u64(uint64_t(v)); }

    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }

    void str(const std::string& s) {
        u64(s.size());
        out_.insert(out_.end(), s.begin(), s.end());
    }

    void f64_vec(const std::vector<double>& v) {
        u64(v.size());
        if constexpr (std::endian::native == std::endian::little) {
            const auto* p = reinterpret_cast<const uint8_t*>(v.data());
            out_.insert(out_.end(), p, p + v.size() * 8);
        } else {
            for (double x : v) f64(x);
        }
    }

    void i64_vec(const std::vector<int64_t>& v) {
        u64(v.size());
        for (int64_t x : v) i64(x);
    }

    void i8_vec(const std::vector<int8_t>& v) {
        u64(v.size());
        for (int8_t x : v) u8(uint8_t(x));
    }

    std::vector<uint8_t> take() { return std::move(out_); }
    const std::vector<uint8_t>& bytes() const { return out_; }

private:
    std::vector<uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<uint8_t>& bytes) : data_(bytes) {}

    uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(data_[pos_++]) << (8 * i);
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(data_[pos_++]) << (8 * i);
        return v;
    }

    int64_t i64() { return int64_t(u64()); }

    double f64() {
        const uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string str() {
        const size_t n = checked_count(u64(), 1);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::vector<double> f64_vec() {
        const size_t n = checked_count(u64(), 8);
        std::vector<double> v(n);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(v.data(), data_.data() + pos_, n * 8);
            pos_ += n * 8;
        } else {
            for (size_t i = 0; i < n; ++i) v[i] = f64();
        }
        return v;
    }

    std::vector<int64_t> i64_vec() {
        const size_t n = checked_count(u64(), 8);
        std::vector<int64_t> v(n);
        for (size_t i = 0; i < n; ++i) v[i] = i64();
        return v;
    }

    std::vector<int8_t> i8_vec() {
        const size_t n = checked_count(u64(), 1);
        std::vector<int8_t> v(n);
        for (size_t i = 0; i < n; ++i) v[i] = int8_t(u8());
        return v;
    }

    size_t pos() const { return pos_; }

private:
    void need(size_t n) const {
        if (pos_ + n > data_.size()) throw BadModelFile("model container truncated");
    }

    size_t checked_count(uint64_t n, size_t elem) {
        if (n > (data_.size() - pos_) / elem) {
            throw BadModelFile("model container: count exceeds remaining bytes");
        }
        need(size_t(n) * elem);
        return size_t(n);
    }

    const std::vector<uint8_t>& data_;
    size_t pos_ = 0;
};

void write_idset(ByteWriter& w, const IdSet& s) { w.i64_vec(s.ids); }

IdSet read_idset(ByteReader& r) {
    IdSet s;
    s.ids = r.i64_vec();
    for (size_t i = 1; i < s.ids.size(); ++i) {
        if (s.ids[i] <= s.ids[i - 1]) throw BadModelFile("id set not ascending");
    }
    return s;
}

void write_arch(ByteWriter& w, const ArchSpec& a) {
    w.str(a.name);
    w.u32(uint32_t(a.input.h));
    w.u32(uint32_t(a.input.w));
    w.u32(uint32_t(a.input.c));
    w.u64(a.layers.size());
    for (const LayerDesc& ld : a.layers) {
        w.u8(uint8_t(ld.kind));
        w.u32(uint32_t(ld.units));
        w.u32(uint32_t(ld.filters));
        w.u32(uint32_t(ld.pad));
    }
}

ArchSpec read_arch(ByteReader& r) {
    ArchSpec a;
    a.name = r.str();
    a.input.h = int(r.u32());
    a.input.w = int(r.u32());
    a.input.c = int(r.u32());
    const size_t n = size_t(r.u64());
    a.layers.resize(n);
    for (LayerDesc& ld : a.layers) {
        ld.kind = LayerKind(r.u8());
        ld.units = int(r.u32());
        ld.filters = int(r.u32());
        ld.pad = int(r.u32());
    }
    a.validate();
    return a;
}

void write_matrix(ByteWriter& w, const Matrix& m) {
    w.u64(m.rows);
    w.u64(m.cols);
    w.f64_vec(m.data);
}

Matrix read_matrix(ByteReader& r) {
    Matrix m;
    m.rows = size_t(r.u64());
    m.cols = size_t(r.u64());
    m.data = r.f64_vec();
    if (m.data.size() != m.rows * m.cols) throw BadModelFile("matrix size mismatch");
    return m;
}

}  // namespace

std::vector<uint8_t> serialize_model(const SplitModel& model) {
    ByteWriter w;
    w.str(std::string(kMagic, sizeof(kMagic)));
    w.u32(kVersion);
    w.str(model.manifest.to_json());

    write_arch(w, model.fe.arch);
    w.u64(model.fe.seed);
    write_idset(w, model.fe.train_ids);
    w.u64(model.fe.weights.size());
    for (const LayerWeights& lw : model.fe.weights) {
        w.f64_vec(lw.W);
        w.f64_vec(lw.b);
    }

    const OvrSvm& svm = model.svm;
    w.u32(uint32_t(svm.classes.size()));
    write_idset(w, svm.train_ids);
    w.f64(svm.platt_holdout);
    w.u64(svm.platt_seed);
    for (size_t c = 0; c < svm.classes.size(); ++c) {
        const BinarySvm& b = svm.classes[c];
        w.f64_vec(b.alpha);
        w.i8_vec(b.y);
        write_idset(w, b.support_ids);
        write_matrix(w, b.sv_x);
        w.f64_vec(b.sv_coef);
        w.f64_vec(b.w);
        w.f64(b.bias);
        w.f64(b.C);
        w.f64(b.alpha_tol);
        w.u8(uint8_t(b.kernel));
        w.i64(b.iterations);
        const PlattParams& p = svm.platt[c];
        w.u8(p.fitted ? 1 : 0);
        w.f64(p.a);
        w.f64(p.b);
    }

    write_idset(w, model.fe_train_ids);
    write_idset(w, model.svm_train_ids);
    write_idset(w, model.platt_ids);
    write_idset(w, model.support_ids);

    const uint64_t checksum = fnv1a(w.bytes().data(), w.bytes().size());
    w.u64(checksum);
    return w.take();
}

SplitModel deserialize_model(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 + sizeof(uint64_t)) throw BadModelFile("model container too small");
    const uint64_t stored = [&] {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(bytes[bytes.size() - 8 + i]) << (8 * i);
        return v;
    }();
    if (fnv1a(bytes.data(), bytes.size() - 8) != stored) {
        throw BadModelFile("model container checksum mismatch");
    }

    ByteReader r(bytes);
    if (r.str() != std::string(kMagic, sizeof(kMagic))) {
        throw BadModelFile("model container: bad magic");
    }
    if (r.u32() != kVersion) throw BadModelFile("model container: unsupported version");

    SplitModel m;
    m.manifest = Manifest::from_json(r.str());

    m.fe.arch = read_arch(r);
    m.fe.seed = r.u64();
    m.fe.train_ids = read_idset(r);
    const size_t nl = size_t(r.u64());
    if (nl != m.fe.arch.layers.size()) throw BadModelFile("weight/layer count mismatch");
    m.fe.weights.resize(nl);
    for (LayerWeights& lw : m.fe.weights) {
        lw.W = r.f64_vec();
        lw.b = r.f64_vec();
    }

    const size_t nc = size_t(r.u32());
    m.svm.classes.resize(nc);
    m.svm.platt.resize(nc);
    m.svm.train_ids = read_idset(r);
    m.svm.platt_holdout = r.f64();
    m.svm.platt_seed = r.u64();
    for (size_t c = 0; c < nc; ++c) {
        BinarySvm& b = m.svm.classes[c];
        b.train_ids = m.svm.train_ids.ids;
        b.alpha = r.f64_vec();
        b.y = r.i8_vec();
        b.support_ids = read_idset(r);
        b.sv_x = read_matrix(r);
        b.sv_coef = r.f64_vec();
        b.w = r.f64_vec();
        b.bias = r.f64();
        b.C = r.f64();
        b.alpha_tol = r.f64();
        b.kernel = KernelKind(r.u8());
        b.iterations = r.i64();
        PlattParams& p = m.svm.platt[c];
        p.fitted = r.u8() != 0;
        p.a = r.f64();
        p.b = r.f64();
    }

    m.fe_train_ids = read_idset(r);
    m.svm_train_ids = read_idset(r);
    m.platt_ids = read_idset(r);
    m.support_ids = read_idset(r);
    return m;
}

void save_model(const SplitModel& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path);
}

SplitModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BadModelFile(path + ": cannot open");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace maxrr
