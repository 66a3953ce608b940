#include "zamba/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>

namespace zamba {

int64_t Phase1Schedule::warmup_steps() const {
    const auto w = static_cast<int64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
    return w < 1 ? 1 : w;
}

void Phase1Schedule::validate() const {
    if (!(eta_min < eta_max)) throw std::invalid_argument("schedule: eta_min must be < eta_max");
    if (total_steps < 1) throw std::invalid_argument("schedule: total_steps must be >= 1");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
        throw std::invalid_argument("schedule: warmup_fraction must be in [0,1]");
}

std::pair<double, double> solve_anneal_coeffs(double eta0, double etaT, double gamma) {
    if (!(eta0 > etaT)) throw std::invalid_argument("anneal: eta0 must be > etaT");
    if (!(etaT > 0.0)) throw std::invalid_argument("anneal: etaT must be > 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("anneal: gamma must be > 0");
    const double a = (eta0 - etaT) / (1.0 - std::exp(-1.0 / gamma));
    return {a, eta0 - a};
}

AnnealSchedule AnnealSchedule::make(double eta0, double etaT, double gamma, int64_t total_steps,
                                    int64_t rewarmup_steps) {
    if (total_steps < 1) throw std::invalid_argument("anneal: total_steps must be >= 1");
    if (rewarmup_steps < 1) throw std::invalid_argument("anneal: rewarmup_steps must be >= 1");
    AnnealSchedule s;
    s.eta0 = eta0;
    s.etaT = etaT;
    s.gamma = gamma;
    s.total_steps = total_steps;
    s.rewarmup_steps = rewarmup_steps;
    std::tie(s.coef_a, s.coef_b) = solve_anneal_coeffs(eta0, etaT, gamma);
    return s;
}

double lr_at(const Phase1Schedule& s, int64_t t) {
    if (t < 0 || t > s.total_steps)
        throw std::invalid_argument("schedule: step " + std::to_string(t) + " outside [0," +
                                    std::to_string(s.total_steps) + "]");
    const int64_t w = s.warmup_steps();
    if (t < w) return s.eta_max * static_cast<double>(t) / static_cast<double>(w);
    const double tau = s.total_steps == w
                           ? 1.0
                           : static_cast<double>(t - w) / static_cast<double>(s.total_steps - w);
    return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(3.14159265358979323846 * tau));
}

double lr_at(const AnnealSchedule& s, int64_t t) {
    if (t < 0 || t > s.span())
        throw std::invalid_argument("anneal: step " + std::to_string(t) + " outside [0," +
                                    std::to_string(s.span()) + "]");
    if (t < s.rewarmup_steps)
        return s.eta0 * static_cast<double>(t) / static_cast<double>(s.rewarmup_steps);
    const double tau = static_cast<double>(t - s.rewarmup_steps);
    return s.coef_a * std::exp(-tau / (s.gamma * static_cast<double>(s.total_steps))) + s.coef_b;
}

double linear_anneal_lr(double eta0, double etaT, int64_t t, int64_t total_steps) {
    return eta0 + (etaT - eta0) * static_cast<double>(t) / static_cast<double>(total_steps);
}

}  // namespace zamba
