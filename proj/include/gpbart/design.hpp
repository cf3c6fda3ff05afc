#pragma once

#include <vector>

#include <Eigen/Dense>

namespace gpbart {

enum class ColumnKind { kContinuous, kCategorical };

// Covariates as seen by the sampler. Continuous columns are normalized;
// categorical columns hold level codes (0..levels-1, or -1 for a level
// not seen during training).
struct Design {
  Eigen::MatrixXd x;
  std::vector<ColumnKind> kinds;
  std::vector<int> levels;            // level count per column, 0 if continuous
  std::vector<int> gp_columns;        // columns entering the kernel
  std::vector<int> rotation_columns;  // columns eligible for rotated splits

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  bool is_continuous(int j) const { return kinds[j] == ColumnKind::kContinuous; }

  // The kernel inputs (gp_columns) for the given rows.
  Eigen::MatrixXd gp_inputs(const std::vector<int>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(gp_columns.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < gp_columns.size(); ++j)
        out(i, j) = x(rows[i], gp_columns[j]);
    return out;
  }
};

// All-continuous design with every column in the kernel and eligible for
// rotation. Convenient for simulated data and tests.
inline Design continuous_design(Eigen::MatrixXd x) {
  Design d;
  const int p = static_cast<int>(x.cols());
  d.x = std::move(x);
  d.kinds.assign(p, ColumnKind::kContinuous);
  d.levels.assign(p, 0);
  for (int j = 0; j < p; ++j) {
    d.gp_columns.push_back(j);
    d.rotation_columns.push_back(j);
  }
  return d;
}

}  // namespace gpbart
