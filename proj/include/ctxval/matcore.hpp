#pragma once

// Dense complex-matrix foundations shared by every other module.

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <vector>

namespace ctxval {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

namespace matcore {

/// Relative Hermiticity tolerance: ||m - m^dagger||_F <= kHermitianTol * ||m||_F.
inline constexpr double kHermitianTol = 1e-10;
/// Eigenvalues closer than kDegeneracyTol * max|a| share one eigenspace.
inline constexpr double kDegeneracyTol = 1e-9;

struct Eigenspace {
    double value;
    CMatrix projector;
    int rank;
};

template <typename Matrix>
struct SVDResult {
    Matrix U;
    RVector sigma;  // nonincreasing, nonnegative
    Matrix V;
};

struct PolarFactors {
    CMatrix unitary;
    CMatrix root;
};

/// Cutoff below which a singular value counts as zero. When `relative` is
/// empty the rank-revealing default max(rows, cols) * eps is used.
struct RankCutoff {
    std::optional<double> relative;

    double absolute_for(double sigma_max, Eigen::Index rows, Eigen::Index cols) const;
};

bool all_finite(const CMatrix& m);
bool all_finite(const RMatrix& m);
void require_finite(const CMatrix& m, const char* what);
void require_square(const CMatrix& m, const char* what);

double hermiticity_defect(const CMatrix& m);
bool is_hermitian(const CMatrix& m, double rel_tol = kHermitianTol);
void require_hermitian(const CMatrix& m, const char* what);

/// Smallest eigenvalue of the Hermitian part.
double min_eigenvalue(const CMatrix& hermitian);
double max_eigenvalue(const CMatrix& hermitian);

std::vector<Eigenspace> spectral_decompose(const CMatrix& m);

SVDResult<RMatrix> svd(const RMatrix& m);
SVDResult<CMatrix> svd(const CMatrix& m);

int numerical_rank(const RVector& sigma, Eigen::Index rows, Eigen::Index cols,
                   const RankCutoff& cutoff = {});

RMatrix pseudoinverse(const RMatrix& m, const RankCutoff& cutoff = {});

CMatrix principal_sqrt(const CMatrix& m);

/// m = unitary * root with root = (m^dagger m)^{1/2}. For singular m the
/// unitary factor is completed on the kernel by the SVD factors (W V^dagger);
/// PSD inputs return the identity as the unitary factor.
PolarFactors polar_decompose(const CMatrix& m);

CMatrix commutator(const CMatrix& a, const CMatrix& b);
CMatrix anticommutator(const CMatrix& a, const CMatrix& b);

/// Principal logarithm of a unitary matrix via its Schur form.
CMatrix unitary_log(const CMatrix& u);

bool is_unitary(const CMatrix& u, double tol = 1e-10);

/// True when every off-diagonal entry is exactly zero.
bool is_diagonal(const CMatrix& m);

}  // namespace matcore
}  // namespace ctxval
