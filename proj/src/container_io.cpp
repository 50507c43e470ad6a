#include "ppn/container_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ppn {

static_assert(std::endian::native == std::endian::little,
              "container format stores little-endian arrays");

namespace {

std::size_t element_size(const std::string& dtype) {
    if (dtype == "f64") return 8;
    if (dtype == "i64") return 8;
    if (dtype == "u8") return 1;
    throw DataError("container: unknown element type '" + dtype + "'");
}

std::size_t shape_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << shape.size();
    for (std::size_t d : shape) os << ' ' << d;
    return os.str();
}

}  // namespace

void Container::put_f64(const std::string& name, std::vector<std::size_t> shape,
                        const double* data) {
    ArrayEntry e{name, "f64", std::move(shape), name + ".bin", {}};
    const std::size_t n = shape_count(e.shape) * 8;
    e.bytes.resize(n);
    std::memcpy(e.bytes.data(), data, n);
    arrays_.push_back(std::move(e));
}

void Container::put_i64(const std::string& name, std::vector<std::size_t> shape,
                        const std::int64_t* data) {
    ArrayEntry e{name, "i64", std::move(shape), name + ".bin", {}};
    const std::size_t n = shape_count(e.shape) * 8;
    e.bytes.resize(n);
    std::memcpy(e.bytes.data(), data, n);
    arrays_.push_back(std::move(e));
}

void Container::put_u8(const std::string& name, std::vector<std::size_t> shape,
                       const std::uint8_t* data) {
    ArrayEntry e{name, "u8", std::move(shape), name + ".bin", {}};
    const std::size_t n = shape_count(e.shape);
    e.bytes.resize(n);
    std::memcpy(e.bytes.data(), data, n);
    arrays_.push_back(std::move(e));
}

void Container::put_scalar(const std::string& name, const std::string& value) {
    scalars_.emplace_back(name, value);
}

void Container::put_scalar(const std::string& name, std::int64_t value) {
    scalars_.emplace_back(name, std::to_string(value));
}

void Container::put_scalar(const std::string& name, double value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    scalars_.emplace_back(name, os.str());
}

void Container::put_text(const std::string& name, const std::string& content) {
    texts_.emplace_back(name, content);
}

bool Container::has_array(const std::string& name) const {
    for (const auto& e : arrays_)
        if (e.name == name) return true;
    return false;
}

bool Container::has_scalar(const std::string& name) const {
    for (const auto& [k, v] : scalars_)
        if (k == name) return true;
    return false;
}

const Container::ArrayEntry& Container::array(const std::string& name) const {
    for (const auto& e : arrays_)
        if (e.name == name) return e;
    throw DataError("container: missing array '" + name + "'");
}

const std::vector<std::size_t>& Container::shape(const std::string& name) const {
    return array(name).shape;
}

std::vector<double> Container::get_f64(const std::string& name,
                                       const std::vector<std::size_t>& expect_shape) const {
    const ArrayEntry& e = array(name);
    if (e.dtype != "f64") throw DataError("container: '" + name + "' is not f64");
    if (!expect_shape.empty() && e.shape != expect_shape)
        throw DataError("container: shape mismatch for '" + name + "'");
    std::vector<double> out(shape_count(e.shape));
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    for (double x : out) {
        if (!std::isfinite(x)) throw DataError("container: non-finite value in '" + name + "'");
    }
    return out;
}

std::vector<std::int64_t> Container::get_i64(const std::string& name,
                                             const std::vector<std::size_t>& expect_shape) const {
    const ArrayEntry& e = array(name);
    if (e.dtype != "i64") throw DataError("container: '" + name + "' is not i64");
    if (!expect_shape.empty() && e.shape != expect_shape)
        throw DataError("container: shape mismatch for '" + name + "'");
    std::vector<std::int64_t> out(shape_count(e.shape));
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
}

std::vector<std::uint8_t> Container::get_u8(const std::string& name,
                                            const std::vector<std::size_t>& expect_shape) const {
    const ArrayEntry& e = array(name);
    if (e.dtype != "u8") throw DataError("container: '" + name + "' is not u8");
    if (!expect_shape.empty() && e.shape != expect_shape)
        throw DataError("container: shape mismatch for '" + name + "'");
    std::vector<std::uint8_t> out(shape_count(e.shape));
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
}

std::string Container::get_scalar(const std::string& name) const {
    for (const auto& [k, v] : scalars_)
        if (k == name) return v;
    throw DataError("container: missing scalar '" + name + "'");
}

std::int64_t Container::get_scalar_i64(const std::string& name) const {
    return std::stoll(get_scalar(name));
}

double Container::get_scalar_f64(const std::string& name) const {
    return std::stod(get_scalar(name));
}

std::string Container::get_text(const std::string& name) const {
    for (const auto& [k, v] : texts_)
        if (k == name) return v;
    throw DataError("container: missing text '" + name + "'");
}

void Container::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ostringstream man;
    man << magic_ << ' ' << version_ << '\n';
    for (const auto& [k, v] : scalars_) man << "scalar " << k << ' ' << v << '\n';
    for (const auto& e : arrays_) {
        man << "array " << e.name << ' ' << e.dtype << " little " << shape_str(e.shape) << ' '
            << e.file << '\n';
        std::ofstream f(dir / e.file, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("container: cannot write " + (dir / e.file).string());
        f.write(reinterpret_cast<const char*>(e.bytes.data()),
                static_cast<std::streamsize>(e.bytes.size()));
    }
    for (const auto& [k, v] : texts_) {
        man << "text " << k << ' ' << k << ".txt\n";
        std::ofstream f(dir / (k + ".txt"), std::ios::binary | std::ios::trunc);
        f.write(v.data(), static_cast<std::streamsize>(v.size()));
    }
    std::ofstream mf(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
    const std::string s = man.str();
    mf.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!mf) throw DataError("container: cannot write manifest in " + dir.string());
}

Container Container::load(const std::filesystem::path& dir, const std::string& expect_magic) {
    std::ifstream mf(dir / "manifest.txt");
    if (!mf) throw DataError("container: missing manifest in " + dir.string());
    Container c;
    std::string line;
    if (!std::getline(mf, line)) throw DataError("container: empty manifest");
    {
        std::istringstream is(line);
        is >> c.magic_ >> c.version_;
        if (c.magic_ != expect_magic)
            throw DataError("container: bad magic '" + c.magic_ + "', expected '" + expect_magic +
                            "'");
        if (c.version_ != 1)
            throw DataError("container: unsupported format version " +
                            std::to_string(c.version_));
    }
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string kind;
        is >> kind;
        if (kind == "scalar") {
            std::string k;
            is >> k;
            std::string v;
            std::getline(is, v);
            if (!v.empty() && v.front() == ' ') v.erase(0, 1);
            c.scalars_.emplace_back(k, v);
        } else if (kind == "array") {
            ArrayEntry e;
            std::string endian;
            std::size_t ndim = 0;
            is >> e.name >> e.dtype >> endian >> ndim;
            if (endian != "little") throw DataError("container: unsupported byte order");
            e.shape.resize(ndim);
            for (auto& d : e.shape) is >> d;
            is >> e.file;
            if (!is) throw DataError("container: malformed array line: " + line);
            std::ifstream f(dir / e.file, std::ios::binary);
            if (!f) throw DataError("container: missing array file " + e.file);
            f.seekg(0, std::ios::end);
            const auto size = static_cast<std::size_t>(f.tellg());
            const std::size_t want = shape_count(e.shape) * element_size(e.dtype);
            if (size != want)
                throw DataError("container: '" + e.name + "' size " + std::to_string(size) +
                                " disagrees with manifest shape (" + std::to_string(want) + ")");
            e.bytes.resize(size);
            f.seekg(0);
            f.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(size));
            c.arrays_.push_back(std::move(e));
        } else if (kind == "text") {
            std::string k, file;
            is >> k >> file;
            std::ifstream f(dir / file, std::ios::binary);
            if (!f) throw DataError("container: missing text file " + file);
            std::ostringstream os;
            os << f.rdbuf();
            c.texts_.emplace_back(k, os.str());
        } else {
            throw DataError("container: unknown manifest entry '" + kind + "'");
        }
    }
    return c;
}

}  // namespace ppn
