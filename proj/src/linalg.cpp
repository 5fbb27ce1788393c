#include "edgeinfer/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <stdexcept>

namespace edgeinfer::conic {

namespace {

// Thin SVD with singular values in descending order. Eigen's JacobiSVD is
// deterministic and accurate at the sizes this project uses.
Eigen::JacobiSVD<MatrixXcd> thin_svd(const MatrixXcd& X) {
  return Eigen::JacobiSVD<MatrixXcd>(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

}  // namespace

MatrixXcd svt(const MatrixXcd& X, double tau) {
  if (tau < 0.0) throw std::invalid_argument("svt: negative threshold");
  if (tau == 0.0) return X;
  auto svd = thin_svd(X);
  VectorXd s = svd.singularValues();
  for (int i = 0; i < s.size(); ++i) s[i] = std::max(s[i] - tau, 0.0);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().adjoint();
}

MatrixXcd kyfan_subgradient(const MatrixXcd& X, int r) {
  const int rmax = static_cast<int>(std::min(X.rows(), X.cols()));
  if (r < 1 || r > rmax) throw std::invalid_argument("kyfan_subgradient: rank out of range");
  auto svd = thin_svd(X);
  return svd.matrixU().leftCols(r) * svd.matrixV().leftCols(r).adjoint();
}

double kyfan_norm(const MatrixXcd& X, int r) {
  const int rmax = static_cast<int>(std::min(X.rows(), X.cols()));
  if (r < 1 || r > rmax) throw std::invalid_argument("kyfan_norm: rank out of range");
  VectorXd s = thin_svd(X).singularValues();
  return s.head(r).sum();
}

double nuclear_norm(const MatrixXcd& X) {
  return thin_svd(X).singularValues().sum();
}

MatrixXcd psd_project(const MatrixXcd& S) {
  const double scale = std::max(1.0, S.norm());
  if ((S - S.adjoint()).norm() > 1e-10 * scale)
    throw std::invalid_argument("psd_project: input is not Hermitian");
  MatrixXcd H = 0.5 * (S + S.adjoint());
  Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(H);
  VectorXd d = eig.eigenvalues();
  for (int i = 0; i < d.size(); ++i) d[i] = std::max(d[i], 0.0);
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().adjoint();
}

VectorXd svec(const MatrixXd& S) {
  const int n = static_cast<int>(S.rows());
  VectorXd v(svec_len(n));
  const double rt2 = std::sqrt(2.0);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i)
      v[idx++] = (i == j) ? S(i, j) : rt2 * S(i, j);
  return v;
}

MatrixXd smat(const VectorXd& v, int n) {
  if (v.size() != svec_len(n)) throw std::invalid_argument("smat: length mismatch");
  MatrixXd S(n, n);
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  int idx = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) {
      double x = v[idx++];
      if (i == j) {
        S(i, j) = x;
      } else {
        S(i, j) = x * inv_rt2;
        S(j, i) = x * inv_rt2;
      }
    }
  }
  return S;
}

MatrixXd embed_hermitian(const MatrixXcd& Z) {
  const int p = static_cast<int>(Z.rows());
  MatrixXd E(2 * p, 2 * p);
  MatrixXd X = Z.real();
  MatrixXd Y = Z.imag();
  E.topLeftCorner(p, p) = X;
  E.topRightCorner(p, p) = -Y;
  E.bottomLeftCorner(p, p) = Y;
  E.bottomRightCorner(p, p) = X;
  return E;
}

MatrixXcd unembed_hermitian(const MatrixXd& E) {
  const int p = static_cast<int>(E.rows()) / 2;
  MatrixXd X = 0.5 * (E.topLeftCorner(p, p) + E.bottomRightCorner(p, p));
  MatrixXd Y = 0.5 * (E.bottomLeftCorner(p, p) - E.topRightCorner(p, p));
  MatrixXcd Z = X.cast<std::complex<double>>() +
                std::complex<double>(0, 1) * Y.cast<std::complex<double>>();
  return 0.5 * (Z + Z.adjoint());
}

}  // namespace edgeinfer::conic
