#include "hclab/dense_oracle.hpp"

#include <complex>

namespace hclab::oracle {

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> decompose(const SparseSymmetricOperator& op) {
  Eigen::MatrixXd dense(op.mat);
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense);
}

}  // namespace

Eigen::VectorXd eigenvalues(const SparseSymmetricOperator& op) {
  Eigen::MatrixXd dense(op.mat);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

Eigen::Index count_in_window(const SparseSymmetricOperator& op, double a, double b) {
  const Eigen::VectorXd vals = eigenvalues(op);
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < vals.size(); ++i)
    if (vals[i] > a && vals[i] <= b) ++count;
  return count;
}

double resolvent_block_norm(const SparseSymmetricOperator& op, double energy,
                            const IndexMask& rows, const IndexMask& cols) {
  const auto es = decompose(op);
  const Eigen::VectorXd inv = (es.eigenvalues().array() - energy).inverse();
  const Eigen::MatrixXd resolvent =
      es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  Eigen::MatrixXd block(rows.indices.size(), cols.indices.size());
  for (std::size_t i = 0; i < rows.indices.size(); ++i)
    for (std::size_t j = 0; j < cols.indices.size(); ++j)
      block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          resolvent(rows.indices[i], cols.indices[j]);
  return block.jacobiSvd().singularValues()(0);
}

Eigen::VectorXcd evolve(const SparseSymmetricOperator& op, const Eigen::VectorXcd& state,
                        double t) {
  const auto es = decompose(op);
  const Eigen::VectorXcd coeff = es.eigenvectors().transpose() * state;
  Eigen::VectorXcd scaled(coeff.size());
  for (Eigen::Index i = 0; i < coeff.size(); ++i)
    scaled[i] = coeff[i] * std::exp(std::complex<double>(0.0, -t * es.eigenvalues()[i]));
  return es.eigenvectors() * scaled;
}

}  // namespace hclab::oracle
