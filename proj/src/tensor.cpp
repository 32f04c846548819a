#include "dpt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpt {

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ");
    Tensor out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
    Tensor out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            out.at(i, j) = acc;
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require(a.rows == b.rows, "matmul_tn: inner dimensions differ");
    Tensor out(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.data.data() + k * a.cols;
        const double* brow = b.data.data() + k * b.cols;
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

SpMat SpMat::from_triplets(std::size_t rows, std::size_t cols,
                           std::vector<std::tuple<int, int, double>> triplets) {
    std::sort(triplets.begin(), triplets.end(),
              [](const auto& a, const auto& b) {
                  return std::tie(std::get<0>(a), std::get<1>(a)) <
                         std::tie(std::get<0>(b), std::get<1>(b));
              });
    SpMat m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    m.col.reserve(triplets.size());
    m.val.reserve(triplets.size());
    for (const auto& [r, c, v] : triplets) {
        require(r >= 0 && static_cast<std::size_t>(r) < rows, "SpMat: row out of range");
        require(c >= 0 && static_cast<std::size_t>(c) < cols, "SpMat: col out of range");
        ++m.row_ptr[static_cast<std::size_t>(r) + 1];
        m.col.push_back(c);
        m.val.push_back(v);
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    return m;
}

SpMat SpMat::transposed() const {
    std::vector<std::tuple<int, int, double>> triplets;
    triplets.reserve(nnz());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
            triplets.emplace_back(col[k], static_cast<int>(r), val[k]);
        }
    }
    return from_triplets(cols, rows, std::move(triplets));
}

Tensor spmm(const SpMat& m, const Tensor& x) {
    require(m.cols == x.rows, "spmm: inner dimensions differ");
    Tensor out(m.rows, x.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* orow = out.data.data() + r * out.cols;
        for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
            const double w = m.val[k];
            const double* xrow = x.data.data() + static_cast<std::size_t>(m.col[k]) * x.cols;
            for (std::size_t j = 0; j < x.cols; ++j) orow[j] += w * xrow[j];
        }
    }
    return out;
}

} // namespace dpt
