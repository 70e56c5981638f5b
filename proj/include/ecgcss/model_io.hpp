#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ecgcss {

/// Versioned binary container shared by every trained model.
///
/// Layout (all integers and floats little-endian):
///   magic "ECGCSSM\0" | u32 version | str kind
///   u32 n_meta  { str key | str value }
///   u32 n_tensor{ str name | u32 ndim | u64 dim... | f64 data... }
/// where str = u32 byte length followed by UTF-8 bytes. Tensor data is
/// row-major. Nothing time- or host-dependent is stored, so identical models
/// serialize to identical bytes.
class ModelContainer {
public:
    static constexpr std::uint32_t kVersion = 1;

    struct Tensor {
        std::string name;
        std::vector<std::uint64_t> shape;
        std::vector<double> data;
    };

    ModelContainer() = default;
    explicit ModelContainer(std::string kind) : kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

    void set_meta(std::string key, std::string value);
    bool has_meta(std::string_view key) const;
    const std::string& meta(std::string_view key) const;
    double meta_double(std::string_view key) const;
    long long meta_int(std::string_view key) const;
    const std::vector<std::pair<std::string, std::string>>& all_meta() const noexcept {
        return meta_;
    }

    void add_tensor(std::string name, std::vector<std::uint64_t> shape, std::vector<double> data);
    void add_matrix(std::string name, const Eigen::MatrixXd& m);
    void add_vector(std::string name, const std::vector<double>& v);
    bool has_tensor(std::string_view name) const;
    const Tensor& tensor(std::string_view name) const;
    Eigen::MatrixXd matrix(std::string_view name) const;
    std::vector<double> vector(std::string_view name) const;
    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

    std::string serialize() const;
    static ModelContainer deserialize(std::string_view bytes);

    void save(const std::filesystem::path& path) const;
    /// Loads and checks the kind tag; throws DataError on mismatch or corruption.
    static ModelContainer load(const std::filesystem::path& path, std::string_view expected_kind);

private:
    std::string kind_;
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<Tensor> tensors_;
};

/// Writes `key=value` lines; used for the human-readable training manifest.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& entries);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

} // namespace ecgcss
