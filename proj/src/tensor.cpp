#include "biox/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace biox {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ')';
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

static void check_shape_valid(const Shape& s) {
    for (int64_t d : s) {
        if (d <= 0) throw ShapeError("tensor: non-positive dimension in shape " + shape_str(s));
    }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape_valid(shape_);
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape_valid(shape_);
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw ShapeError("tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
    }
}

Tensor::Tensor(std::initializer_list<double> row) : shape_{static_cast<int64_t>(row.size())}, data_(row) {}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    int64_t r = static_cast<int64_t>(rows.size());
    int64_t c = r > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
    shape_ = {r, c};
    data_.reserve(static_cast<size_t>(r * c));
    for (const auto& row : rows) {
        if (static_cast<int64_t>(row.size()) != c) throw ShapeError("tensor: ragged initializer");
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_.assign(1, v);
    return t;
}

Tensor Tensor::eye(int64_t n) {
    Tensor t(Shape{n, n});
    for (int64_t i = 0; i < n; ++i) t.data_[static_cast<size_t>(i * n + i)] = 1.0;
    return t;
}

int64_t Tensor::dim(int axis) const {
    int r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("tensor: axis out of range for shape " + shape_str(shape_));
    return shape_[static_cast<size_t>(axis)];
}

int64_t Tensor::flat_index(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank()) throw ShapeError("tensor: index rank mismatch");
    int64_t flat = 0;
    int i = 0;
    for (int64_t ix : idx) {
        int64_t extent = shape_[static_cast<size_t>(i)];
        if (ix < 0) ix += extent;
        if (ix < 0 || ix >= extent) throw ShapeError("tensor: index out of range for shape " + shape_str(shape_));
        flat = flat * extent + ix;
        ++i;
    }
    return flat;
}

double& Tensor::at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(flat_index(idx))]; }

double Tensor::at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(flat_index(idx))]; }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("tensor: item() on non-scalar of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw ShapeError("tensor: cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool allclose(const Tensor& a, const Tensor& b, double atol, double rtol) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = std::abs(a[i] - b[i]);
        if (d > atol + rtol * std::abs(b[i])) return false;
    }
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// splitmix64; full-period, trivially seedable.
static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t fork_seed(uint64_t seed, uint64_t tag) {
    uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + (tag << 1));
    splitmix64(x);
    return splitmix64(x);
}

Rng::Rng(uint64_t seed) : state_(seed) {
    // warm up so nearby seeds diverge immediately
    splitmix64(state_);
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

int64_t Rng::below(int64_t n) {
    // rejection sampling to avoid modulo bias
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x = 0;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
}

std::vector<int64_t> Rng::sample_without_replacement(int64_t n, int64_t k) {
    if (k > n) k = n;
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    // partial Fisher-Yates: first k entries are the sample
    for (int64_t i = 0; i < k; ++i) {
        int64_t j = i + below(n - i);
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
}

Tensor Rng::normal_tensor(Shape shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
    return t;
}

}  // namespace biox
