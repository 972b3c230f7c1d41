#include "ctxval/matcore.hpp"

#include "ctxval/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ctxval::matcore {

namespace {

constexpr double kPsdTol = 1e-10;

}  // namespace

double RankCutoff::absolute_for(double sigma_max, Eigen::Index rows, Eigen::Index cols) const {
    const double rel = relative.value_or(static_cast<double>(std::max(rows, cols)) *
                                         std::numeric_limits<double>::epsilon());
    return rel * sigma_max;
}

bool all_finite(const CMatrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const Complex z = m.data()[i];
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
}

bool all_finite(const RMatrix& m) { return m.allFinite(); }

void require_finite(const CMatrix& m, const char* what) {
    if (m.size() == 0) throw DimensionMismatch(std::string(what) + ": empty matrix");
    if (!all_finite(m)) throw NonFiniteInput(std::string(what) + ": non-finite entry");
}

void require_square(const CMatrix& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw DimensionMismatch(std::string(what) + ": expected a nonempty square matrix, got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

double hermiticity_defect(const CMatrix& m) { return (m - m.adjoint()).norm(); }

bool is_hermitian(const CMatrix& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    return hermiticity_defect(m) <= rel_tol * std::max(m.norm(), std::numeric_limits<double>::min());
}

void require_hermitian(const CMatrix& m, const char* what) {
    require_square(m, what);
    require_finite(m, what);
    if (!is_hermitian(m)) throw NotHermitian(std::string(what) + " is not Hermitian", hermiticity_defect(m));
}

double min_eigenvalue(const CMatrix& hermitian) {
    const CMatrix h = 0.5 * (hermitian + hermitian.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const CMatrix& hermitian) {
    const CMatrix h = 0.5 * (hermitian + hermitian.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

std::vector<Eigenspace> spectral_decompose(const CMatrix& m) {
    require_hermitian(m, "spectral_decompose");
    const CMatrix h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    const RVector& values = es.eigenvalues();  // ascending
    const CMatrix& vectors = es.eigenvectors();
    const double merge_tol = kDegeneracyTol * values.cwiseAbs().maxCoeff();

    std::vector<Eigenspace> spaces;
    Eigen::Index start = 0;
    const Eigen::Index n = values.size();
    while (start < n) {
        Eigen::Index end = start + 1;
        while (end < n && values(end) - values(start) <= merge_tol) ++end;
        const auto block = vectors.middleCols(start, end - start);
        spaces.push_back({values.segment(start, end - start).mean(), block * block.adjoint(),
                          static_cast<int>(end - start)});
        start = end;
    }
    return spaces;
}

SVDResult<RMatrix> svd(const RMatrix& m) {
    if (!m.allFinite()) throw NonFiniteInput("svd: non-finite entry");
    Eigen::JacobiSVD<RMatrix> solver(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

SVDResult<CMatrix> svd(const CMatrix& m) {
    require_finite(m, "svd");
    Eigen::JacobiSVD<CMatrix> solver(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

int numerical_rank(const RVector& sigma, Eigen::Index rows, Eigen::Index cols, const RankCutoff& cutoff) {
    if (sigma.size() == 0) return 0;
    const double threshold = cutoff.absolute_for(sigma(0), rows, cols);
    int rank = 0;
    for (Eigen::Index k = 0; k < sigma.size(); ++k) {
        if (sigma(k) > threshold) ++rank;
    }
    return rank;
}

RMatrix pseudoinverse(const RMatrix& m, const RankCutoff& cutoff) {
    const auto [U, sigma, V] = svd(m);
    const int rank = numerical_rank(sigma, m.rows(), m.cols(), cutoff);
    RMatrix result = RMatrix::Zero(m.cols(), m.rows());
    for (int k = 0; k < rank; ++k) {
        result += (V.col(k) / sigma(k)) * U.col(k).transpose();
    }
    return result;
}

CMatrix principal_sqrt(const CMatrix& m) {
    require_hermitian(m, "principal_sqrt");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()));
    const RVector& values = es.eigenvalues();
    const double tol = kPsdTol * std::max(1.0, values.cwiseAbs().maxCoeff());
    if (values.minCoeff() < -tol) throw NotPositive("principal_sqrt: matrix is not PSD", values.minCoeff());
    const RVector roots = values.cwiseMax(0.0).cwiseSqrt();
    const CMatrix& vecs = es.eigenvectors();
    CMatrix r = vecs * roots.cast<Complex>().asDiagonal() * vecs.adjoint();
    return 0.5 * (r + r.adjoint());
}

PolarFactors polar_decompose(const CMatrix& m) {
    require_square(m, "polar_decompose");
    require_finite(m, "polar_decompose");
    const auto n = m.rows();
    if (is_hermitian(m)) {
        const double tol = kPsdTol * std::max(1.0, m.norm());
        if (min_eigenvalue(m) >= -tol) return {CMatrix::Identity(n, n), 0.5 * (m + m.adjoint())};
    }
    const auto [W, sigma, V] = svd(m);
    CMatrix root = V * sigma.cast<Complex>().asDiagonal() * V.adjoint();
    return {W * V.adjoint(), 0.5 * (root + root.adjoint())};
}

CMatrix commutator(const CMatrix& a, const CMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != a.cols()) {
        throw DimensionMismatch("commutator: operands must be square with equal dimensions");
    }
    return a * b - b * a;
}

CMatrix anticommutator(const CMatrix& a, const CMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != a.cols()) {
        throw DimensionMismatch("anticommutator: operands must be square with equal dimensions");
    }
    return a * b + b * a;
}

CMatrix unitary_log(const CMatrix& u) {
    require_square(u, "unitary_log");
    Eigen::ComplexSchur<CMatrix> schur(u);
    const CMatrix& T = schur.matrixT();
    const CMatrix& Q = schur.matrixU();
    CVector logs(T.rows());
    for (Eigen::Index i = 0; i < T.rows(); ++i) logs(i) = std::log(T(i, i));
    return Q * logs.asDiagonal() * Q.adjoint();
}

bool is_unitary(const CMatrix& u, double tol) {
    if (u.rows() != u.cols()) return false;
    return (u.adjoint() * u - CMatrix::Identity(u.rows(), u.cols())).norm() <= tol * std::sqrt(double(u.rows()));
}

bool is_diagonal(const CMatrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            if (i != j && m(i, j) != Complex(0.0)) return false;
    return true;
}

}  // namespace ctxval::matcore
