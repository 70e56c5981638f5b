#include "ecgcss/model_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ecgcss/error.hpp"

namespace ecgcss {

namespace {

constexpr char kMagic[8] = {'E', 'C', 'G', 'C', 'S', 'S', 'M', '\0'};

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

void put_str(std::string& out, std::string_view s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    std::string str() {
        auto n = get<std::uint32_t>();
        need(n);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    std::string_view raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("model container truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void ModelContainer::set_meta(std::string key, std::string value) {
    for (auto& kv : meta_)
        if (kv.first == key) {
            kv.second = std::move(value);
            return;
        }
    meta_.emplace_back(std::move(key), std::move(value));
}

bool ModelContainer::has_meta(std::string_view key) const {
    return std::any_of(meta_.begin(), meta_.end(), [&](const auto& kv) { return kv.first == key; });
}

const std::string& ModelContainer::meta(std::string_view key) const {
    for (const auto& kv : meta_)
        if (kv.first == key) return kv.second;
    throw DataError("model container: missing metadata '" + std::string(key) + "'");
}

double ModelContainer::meta_double(std::string_view key) const {
    const auto& s = meta(key);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError("model container: metadata '" + std::string(key) + "' is not a number");
    return v;
}

long long ModelContainer::meta_int(std::string_view key) const {
    const auto& s = meta(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError("model container: metadata '" + std::string(key) + "' is not an integer");
    return v;
}

void ModelContainer::add_tensor(std::string name, std::vector<std::uint64_t> shape,
                                std::vector<double> data) {
    std::uint64_t count = 1;
    for (auto d : shape) count *= d;
    if (count != data.size()) throw InvalidArgument("add_tensor: shape does not match data size");
    if (has_tensor(name)) throw InvalidArgument("add_tensor: duplicate tensor '" + name + "'");
    tensors_.push_back({std::move(name), std::move(shape), std::move(data)});
}

void ModelContainer::add_matrix(std::string name, const Eigen::MatrixXd& m) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data.data(), m.rows(), m.cols()) = m;
    add_tensor(std::move(name),
               {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
               std::move(data));
}

void ModelContainer::add_vector(std::string name, const std::vector<double>& v) {
    add_tensor(std::move(name), {static_cast<std::uint64_t>(v.size())}, v);
}

bool ModelContainer::has_tensor(std::string_view name) const {
    return std::any_of(tensors_.begin(), tensors_.end(),
                       [&](const Tensor& t) { return t.name == name; });
}

const ModelContainer::Tensor& ModelContainer::tensor(std::string_view name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return t;
    throw DataError("model container: missing tensor '" + std::string(name) + "'");
}

Eigen::MatrixXd ModelContainer::matrix(std::string_view name) const {
    const auto& t = tensor(name);
    if (t.shape.size() != 2)
        throw DataError("model container: tensor '" + std::string(name) + "' is not a matrix");
    const auto rows = static_cast<Eigen::Index>(t.shape[0]);
    const auto cols = static_cast<Eigen::Index>(t.shape[1]);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.data.data(), rows, cols);
}

std::vector<double> ModelContainer::vector(std::string_view name) const {
    return tensor(name).data;
}

std::string ModelContainer::serialize() const {
    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kVersion);
    put_str(out, kind_);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta_.size()));
    for (const auto& [k, v] : meta_) {
        put_str(out, k);
        put_str(out, v);
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& t : tensors_) {
        put_str(out, t.name);
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put_le<std::uint64_t>(out, d);
        for (double v : t.data) put_le<double>(out, v);
    }
    return out;
}

ModelContainer ModelContainer::deserialize(std::string_view bytes) {
    Reader r(bytes);
    if (r.raw(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic)))
        throw DataError("model container: bad magic");
    auto version = r.get<std::uint32_t>();
    if (version != kVersion)
        throw DataError("model container: unsupported version " + std::to_string(version));
    ModelContainer c(r.str());
    auto n_meta = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        auto k = r.str();
        auto v = r.str();
        c.meta_.emplace_back(std::move(k), std::move(v));
    }
    auto n_tensors = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        Tensor t;
        t.name = r.str();
        auto ndim = r.get<std::uint32_t>();
        std::uint64_t count = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            t.shape.push_back(r.get<std::uint64_t>());
            count *= t.shape.back();
        }
        if (count > bytes.size()) throw DataError("model container: corrupt tensor shape");
        t.data.resize(count);
        for (auto& v : t.data) v = r.get<double>();
        c.tensors_.push_back(std::move(t));
    }
    if (!r.done()) throw DataError("model container: trailing bytes");
    return c;
}

void ModelContainer::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    auto bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

ModelContainer ModelContainer::load(const std::filesystem::path& path,
                                    std::string_view expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto c = deserialize(ss.str());
    if (c.kind() != expected_kind)
        throw DataError("model " + path.string() + " has kind '" + c.kind() + "', expected '" +
                        std::string(expected_kind) + "'");
    return c;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
}

} // namespace ecgcss
