#pragma once

// Learning-rate schedules for the two training phases.
//
// Phase 1: linear warmup from 0 over round(warmup_fraction * T) steps, then
// cosine from eta_max to eta_min:
//     eta(t) = eta_min + (eta_max - eta_min) * (1 + cos(pi * tau)) / 2.
//
// Annealing: linear rewarmup from 0 to eta0 over rewarmup_steps, then an
// exponential decay over total_steps:
//     eta(tau) = A * exp(-tau / (gamma * T)) + B
// with A and B fixed by eta(0) = eta0 and eta(T) = etaT. The two phases are
// independent: annealing restarts from 0 rather than continuing at the
// final phase-1 rate.

#include <cstdint>
#include <utility>

namespace zamba {

struct Phase1Schedule {
    double eta_max = 1.5e-4;
    double eta_min = 7.5e-5;
    double warmup_fraction = 0.01;
    int64_t total_steps = 0;

    int64_t warmup_steps() const;
    void validate() const;
};

struct AnnealSchedule {
    double eta0 = 1.1e-4;
    double etaT = 1e-7;
    double gamma = 0.25;
    int64_t total_steps = 0;  // decay portion, excluding rewarmup
    int64_t rewarmup_steps = 0;
    double coef_a = 0.0;
    double coef_b = 0.0;

    static AnnealSchedule make(double eta0, double etaT, double gamma, int64_t total_steps,
                               int64_t rewarmup_steps);
    int64_t span() const { return rewarmup_steps + total_steps; }
};

// A = (eta0 - etaT) / (1 - exp(-1/gamma)), B = eta0 - A.
std::pair<double, double> solve_anneal_coeffs(double eta0, double etaT, double gamma);

double lr_at(const Phase1Schedule& s, int64_t t);
double lr_at(const AnnealSchedule& s, int64_t t);

// Straight line between the same endpoints; the exponential schedule sits
// strictly below it everywhere in the interior.
double linear_anneal_lr(double eta0, double etaT, int64_t t, int64_t total_steps);

}  // namespace zamba
