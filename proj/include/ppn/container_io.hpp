#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppn/errors.hpp"

namespace ppn {

// On-disk container: a directory holding manifest.txt plus raw little-endian
// arrays, one file per array. The manifest records magic, format version and
// for every array its name, element type, shape and file name. Scalars and
// free text live directly in the manifest. Byte-exact and append-ordered, so
// identical content saves to identical bytes.
class Container {
  public:
    struct ArrayEntry {
        std::string name;
        std::string dtype;  // f64 | i64 | u8
        std::vector<std::size_t> shape;
        std::string file;
        std::vector<std::byte> bytes;
    };

    Container() = default;
    Container(std::string magic, int version) : magic_(std::move(magic)), version_(version) {}

    const std::string& magic() const { return magic_; }
    int version() const { return version_; }

    void put_f64(const std::string& name, std::vector<std::size_t> shape, const double* data);
    void put_i64(const std::string& name, std::vector<std::size_t> shape, const std::int64_t* data);
    void put_u8(const std::string& name, std::vector<std::size_t> shape, const std::uint8_t* data);
    void put_scalar(const std::string& name, const std::string& value);
    void put_scalar(const std::string& name, std::int64_t value);
    void put_scalar(const std::string& name, double value);
    // Multi-line payload, stored verbatim in its own file.
    void put_text(const std::string& name, const std::string& content);

    bool has_array(const std::string& name) const;
    bool has_scalar(const std::string& name) const;
    const ArrayEntry& array(const std::string& name) const;
    std::vector<double> get_f64(const std::string& name,
                                const std::vector<std::size_t>& expect_shape) const;
    std::vector<std::int64_t> get_i64(const std::string& name,
                                      const std::vector<std::size_t>& expect_shape) const;
    std::vector<std::uint8_t> get_u8(const std::string& name,
                                     const std::vector<std::size_t>& expect_shape) const;
    const std::vector<std::size_t>& shape(const std::string& name) const;
    std::string get_scalar(const std::string& name) const;
    std::int64_t get_scalar_i64(const std::string& name) const;
    double get_scalar_f64(const std::string& name) const;
    std::string get_text(const std::string& name) const;

    const std::vector<ArrayEntry>& arrays() const { return arrays_; }
    const std::vector<std::pair<std::string, std::string>>& scalars() const { return scalars_; }

    void save(const std::filesystem::path& dir) const;
    static Container load(const std::filesystem::path& dir, const std::string& expect_magic);

  private:
    std::string magic_;
    int version_ = 1;
    std::vector<ArrayEntry> arrays_;
    std::vector<std::pair<std::string, std::string>> scalars_;
    std::vector<std::pair<std::string, std::string>> texts_;  // name -> content
};

}  // namespace ppn
