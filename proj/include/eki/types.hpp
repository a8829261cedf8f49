#pragma once

#include <Eigen/Dense>

namespace eki {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace eki
