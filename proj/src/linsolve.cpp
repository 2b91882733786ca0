#include "linsolve.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace tgnn::detail {

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
            e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    return e;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
    Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
    for (Eigen::Index i = 0; i < e.rows(); ++i)
        for (Eigen::Index j = 0; j < e.cols(); ++j)
            m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = e(i, j);
    return m;
}

}  // namespace

SymmetricEig symmetric_eig(const Matrix& a) {
    if (a.rows != a.cols) throw std::invalid_argument("symmetric_eig: matrix not square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(to_eigen(a));
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("symmetric_eig: eigensolver failed to converge");
    SymmetricEig out;
    out.eigenvectors = from_eigen(solver.eigenvectors());
    const auto& vals = solver.eigenvalues();
    out.eigenvalues.assign(vals.data(), vals.data() + vals.size());
    return out;
}

Matrix solve_gram(const Matrix& g, const Matrix& b, double ridge) {
    if (g.rows != g.cols) throw std::invalid_argument("solve_gram: gram matrix not square");
    if (b.cols != g.rows) throw std::invalid_argument("solve_gram: shape mismatch");
    Eigen::MatrixXd ge = to_eigen(g);
    ge.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ge);
    Eigen::MatrixXd xe = ldlt.solve(to_eigen(b).transpose()).transpose();
    return from_eigen(xe);
}

Vector solve_linear(const Matrix& a, const Vector& b) {
    if (a.rows != a.cols || a.rows != b.size())
        throw std::invalid_argument("solve_linear: shape mismatch");
    Eigen::VectorXd be(static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i) be(static_cast<Eigen::Index>(i)) = b[i];
    Eigen::VectorXd xe = to_eigen(a).partialPivLu().solve(be);
    return Vector(xe.data(), xe.data() + xe.size());
}

}  // namespace tgnn::detail
