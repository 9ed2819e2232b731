#pragma once

#include <cmath>
#include <cstdint>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fundus {

/// 64-byte-aligned allocator. Keeping every numeric buffer identically
/// aligned pins Eigen's vectorization peeling, so reductions accumulate in
/// the same order on every run and results are bitwise reproducible.
template <class T, std::size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(Align)); }
    bool operator==(const AlignedAllocator&) const { return true; }
    bool operator!=(const AlignedAllocator&) const { return false; }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major tensor. Rank-4 tensors follow the NCHW layout.
template <class T = float>
struct Tensor {
    std::vector<long> shape;
    AlignedVector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<long> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    Tensor(std::vector<long> s, T fill) : shape(std::move(s)), data(count(shape), fill) {}

    static long count(const std::vector<long>& s) {
        long n = 1;
        for (long d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    long numel() const { return static_cast<long>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    long dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool empty() const { return data.empty(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](long i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](long i) const { return data[static_cast<size_t>(i)]; }

    // NCHW accessors
    T& at4(long n, long c, long h, long w) {
        return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    const T& at4(long n, long c, long h, long w) const {
        return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    T& at2(long r, long c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
    const T& at2(long r, long c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

    Tensor reshaped(std::vector<long> s) const {
        if (count(s) != numel()) throw std::invalid_argument("tensor: reshape element count mismatch");
        Tensor out;
        out.shape = std::move(s);
        out.data = data;
        return out;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

template <class T>
void check_shape(const Tensor<T>& t, const std::vector<long>& want, const char* what) {
    if (t.shape != want) {
        Tensor<T> w;
        w.shape = want;
        throw std::invalid_argument(std::string(what) + ": expected shape " + w.shape_str() +
                                    ", got " + t.shape_str());
    }
}

}  // namespace fundus
