#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace biox {

/// Thrown when an operation receives tensors whose shapes violate its
/// contract. The message names the operation and the offending dimensions.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// Dense n-dimensional array of doubles, row-major. Rank 0 is a scalar
/// (numel 1). Tensors are plain values; copying copies the buffer.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);
    Tensor(std::initializer_list<double> row);                          // rank 1
    Tensor(std::initializer_list<std::initializer_list<double>> rows);  // rank 2

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v);
    static Tensor eye(int64_t n);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    /// Dimension lookup; negative axes count from the back.
    int64_t dim(int axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(std::initializer_list<int64_t> idx);
    double at(std::initializer_list<int64_t> idx) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    /// Scalar access; requires numel == 1.
    double item() const;

    Tensor reshaped(Shape shape) const;

private:
    int64_t flat_index(std::initializer_list<int64_t> idx) const;

    Shape shape_;
    std::vector<double> data_;
};

bool allclose(const Tensor& a, const Tensor& b, double atol = 1e-12, double rtol = 0.0);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Deterministic RNG used everywhere randomness is needed. Gaussian draws go
/// through an explicit Box-Muller transform so sequences do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    double uniform();  // [0, 1)
    double normal();   // N(0, 1)
    /// Uniform integer in [0, n).
    int64_t below(int64_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(below(i + 1))]);
        }
    }

    /// k distinct indices from [0, n), order randomized.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

    Tensor normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0);

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Stable sub-seed derivation: mixes a parent seed with a tag so independent
/// components (epochs, workers, modalities) get decorrelated streams.
uint64_t fork_seed(uint64_t seed, uint64_t tag);

}  // namespace biox
