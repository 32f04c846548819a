#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace dpt {

// Dense row-major matrix of doubles. Rank is fixed at 2; vectors are 1 x d or
// n x 1, scalars 1 x 1.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Tensor(std::size_t r, std::size_t c, double fill) : rows(r), cols(c), data(r * c, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }
    static Tensor row(std::vector<double> v) {
        Tensor t;
        t.rows = 1;
        t.cols = v.size();
        t.data = std::move(v);
        return t;
    }
    static Tensor column(std::vector<double> v) {
        Tensor t;
        t.rows = v.size();
        t.cols = 1;
        t.data = std::move(v);
        return t;
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return rows * cols; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
    std::string shape_str() const;
};

Tensor matmul(const Tensor& a, const Tensor& b);    // a (m x k) * b (k x n)
Tensor matmul_nt(const Tensor& a, const Tensor& b); // a (m x k) * b^T (n x k)
Tensor matmul_tn(const Tensor& a, const Tensor& b); // a^T (k x m) * b (k x n)

// Sparse matrix in CSR form. Graph adjacencies enter the tape through this
// type; weights are data, never trainable.
struct SpMat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr; // rows + 1 entries
    std::vector<int> col;
    std::vector<double> val;

    // Triplets are sorted by (row, col) internally so construction order
    // never changes the layout.
    static SpMat from_triplets(std::size_t rows, std::size_t cols,
                               std::vector<std::tuple<int, int, double>> triplets);
    SpMat transposed() const;
    std::size_t nnz() const { return col.size(); }
};

using SpMatPtr = std::shared_ptr<const SpMat>;

// out = m * x, with x dense (m.cols x d).
Tensor spmm(const SpMat& m, const Tensor& x);

} // namespace dpt
