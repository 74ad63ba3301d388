#ifndef POINTNORM_TESTS_ADF_ORACLE_HPP
#define POINTNORM_TESTS_ADF_ORACLE_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace pointnorm::test_support {

// ADF t-statistic from a Householder QR of the full design [y_{t-1}, 1, lagged diffs].
inline double adf_qr(const std::vector<double>& y, std::size_t lag) {
    const std::size_t n = y.size();
    const auto nobs = static_cast<Eigen::Index>(n - 1 - lag);
    const auto p = static_cast<Eigen::Index>(lag + 2);
    Eigen::MatrixXd x(nobs, p);
    Eigen::VectorXd dy(nobs);
    for (Eigen::Index r = 0; r < nobs; ++r) {
        const std::size_t t = static_cast<std::size_t>(r) + lag + 1;
        dy(r) = y[t] - y[t - 1];
        x(r, 0) = y[t - 1];
        x(r, 1) = 1.0;
        for (std::size_t i = 1; i <= lag; ++i) x(r, static_cast<Eigen::Index>(i + 1)) = y[t - i] - y[t - i - 1];
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    const Eigen::VectorXd beta = qr.solve(dy);
    const double rss = (dy - x * beta).squaredNorm();
    const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const double inv00 = r_inv.row(0).squaredNorm();
    return beta(0) / std::sqrt(rss / static_cast<double>(nobs - p) * inv00);
}

}  // namespace pointnorm::test_support

#endif  // POINTNORM_TESTS_ADF_ORACLE_HPP
