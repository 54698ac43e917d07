#pragma once

#include "scdd/schedule.hpp"
#include "scdd/vocab.hpp"

#include <vector>

namespace scdd {

// One reverse transition t -> s driven by a clean-data predictor
// (the network output, or a one-hot for the true posterior).
struct BackwardStep {
    SchedulePoint point_s;
    SchedulePoint point_t;
    Token z_t = 0;
    TokenDist predictor;
};

// Throws ConstraintViolation unless `predictor` is a simplex (within 1e-9) with
// exactly zero mask mass.
void check_predictor(const TokenDist& predictor, const Vocab& vocab);

// Bayes posterior q(z_s | z_t, x).
TokenDist true_posterior(const SchedulePoint& point_s, const SchedulePoint& point_t, Token z_t, Token x,
                         const Vocab& vocab);

// p_theta(z_s | z_t): the posterior with x replaced by the predictor simplex.
// Never moves a non-mask token to the mask.
TokenDist model_backward(const BackwardStep& step, const Vocab& vocab);

// p_theta(x | z_0): the final step from t_0 to the clean convention point
// (rho = gamma = 1). Masked positions are drawn from the predictor itself.
TokenDist reconstruction(const SchedulePoint& point_0, Token z_0, const TokenDist& predictor, const Vocab& vocab);

// Row z_t of the backward generator at an interior time.
std::vector<double> backward_rate(const SchedulePoint& point, Token z_t, const TokenDist& predictor,
                                  const Vocab& vocab);

} // namespace scdd
