#pragma once
// Internal helpers for checking the chain iteration bound before it is
// simplified; not installed.

#include <Eigen/Core>

#include "vpe/spectral.hpp"

namespace vpe::detail {

/// sqrt(v^T S^-1 v) with S = diag(gamma^1, ..., gamma^l).
double s_norm(const Eigen::VectorXd& v, double gamma);

/// -ln(gamma^(l/2) ||S xi0 - S xi_inf||_S / (psi (1 - gamma^-delta0))) / ln(lambda2 bound)
/// where psi = gamma^i xi_inf_i (the same for every i).
double chain_unsimplified_bound(const ChainSpec& chain, const Eigen::VectorXd& xi0, double delta0);

}  // namespace vpe::detail
