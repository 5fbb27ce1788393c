#pragma once

#include <Eigen/Dense>

namespace edgeinfer::conic {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Singular-value thresholding: soft-threshold the spectrum of X by tau.
// This is the proximal operator of tau * (nuclear norm).
MatrixXcd svt(const MatrixXcd& X, double tau);

// Subgradient of the Ky Fan r-norm (sum of the r largest singular values)
// at X: U_r V_r^H from the top-r singular triplets. Ties between singular
// values are resolved by the SVD routine's fixed descending order.
MatrixXcd kyfan_subgradient(const MatrixXcd& X, int r);

// Sum of the r largest singular values.
double kyfan_norm(const MatrixXcd& X, int r);

double nuclear_norm(const MatrixXcd& X);

// Euclidean projection of a Hermitian matrix onto the PSD cone
// (eigenvalues clipped at zero). Throws std::invalid_argument if S is not
// Hermitian within 1e-10 relative to its norm.
MatrixXcd psd_project(const MatrixXcd& S);

// Scaled lower-triangle vectorization of a real symmetric n x n matrix:
// column-major lower triangle with off-diagonal entries multiplied by
// sqrt(2), so that <svec(A), svec(B)> = <A, B>_F. Length n(n+1)/2.
VectorXd svec(const MatrixXd& S);

// Inverse of svec.
MatrixXd smat(const VectorXd& v, int n);

inline int svec_len(int n) { return n * (n + 1) / 2; }

// Index of entry (i, j), i >= j, within svec of an n x n matrix.
inline int svec_index(int n, int i, int j) {
  // Column j occupies n-j entries starting after the first j columns.
  return j * n - j * (j - 1) / 2 + (i - j);
}

// Real embedding of a complex Hermitian p x p matrix as the symmetric
// 2p x 2p matrix [[X, -Y], [Y, X]] with Z = X + iY. Z is Hermitian PSD
// iff the embedding is PSD; eigenvalues appear twice.
MatrixXd embed_hermitian(const MatrixXcd& Z);

// Recover the complex Hermitian matrix from its 2p x 2p real embedding,
// averaging the redundant blocks.
MatrixXcd unembed_hermitian(const MatrixXd& E);

}  // namespace edgeinfer::conic
