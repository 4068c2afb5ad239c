"""Derived constants and the bit-rate lower bounds.

The pipeline turns a plant, a certificate, a DoS budget and a sampling
period into every constant the scheme needs, in dependency order:

    sigma -> zbar0 -> phimax(zbar0) -> l -> W -> O -> U -> F -> M
          -> gamma -> K -> rate thresholds -> lambda, c, omega

with

    zbar0  = (kappa + eta*delta)/sigma        worst first-success time
    l      = alpha2(phimax(zbar0))            target level set
    W      = alpha1_inv(l + delta_margin)     state evolution radius
    O      = alpha1_inv(alpha2(2 W))          estimate evolution radius
    gamma  = W exp(F (kappa + eta*delta)/sigma)
    lambda = exp(F*delta/sigma - R ln 2)      per-success error factor
    c      = W exp((2 ln(2) R - F*delta/sigma)(kappa/delta + eta))
    omega  = (ln(2) sigma R - F delta)/delta  time-domain decay rate
    K      = max(delta_margin*sigma/(M gamma delta) - kappa/delta - eta, 1)

Two rate conditions. The estimation condition is strict:

    R > max(F delta, F (kappa + eta delta)) / (sigma ln 2)

and the stabilization condition adds, non-strict,

    R >= F delta/(sigma ln 2) + ln(M gamma / alpha(alpha2_inv(rho))) / (K ln 2)

for a chosen level rho < l + delta_margin.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

from . import dos as dos_mod
from .dynamics import (
    Box,
    LyapunovCertificate,
    PlantModel,
    SamplingPlan,
    gain_bound_M,
    input_bound_U,
    lipschitz_estimate,
    phi_max,
)

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class DerivedParams:
    """Every pipeline constant, plus the raw (pre-safety) estimator values.

    ``lambda_``, ``c`` and ``omega`` are evaluated at ``R_used`` (the
    scenario rate when given, otherwise the minimal stabilizing rate).
    ``alpha_rho`` caches alpha(alpha2_inv(rho)) so the rate formulas do not
    need the certificate again.
    """

    sigma: float
    zbar0: float
    phimax_zbar0: float
    l: float
    delta: float            # level margin (not the sampling period)
    W: float
    O: float
    U: float
    F: float
    M: float
    gamma: float
    lambda_: float
    c: float
    omega: float
    K: float
    rho: float
    alpha_rho: float
    R_prop1: int
    R_thm: int
    R_used: int
    thm_binding: str
    U_raw: float
    F_raw: float
    M_raw: float
    kappa: float
    eta: float
    delta_period: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d


def lambda_factor(F: float, delta_period: float, sigma: float, R: int) -> float:
    """Worst-case error contraction per success, exp(F*delta/sigma - R ln 2)."""
    return math.exp(F * delta_period / sigma - R * _LN2)


def gamma_factor(W: float, F: float, kappa: float, eta: float,
                 delta_period: float, sigma: float) -> float:
    return W * math.exp(F * (kappa + eta * delta_period) / sigma)


def time_envelope_coeffs(W: float, F: float, kappa: float, eta: float,
                         delta_period: float, sigma: float, R: int) -> tuple[float, float]:
    """(c, omega) of the time-domain error envelope c*exp(-omega t)."""
    c = W * math.exp((2.0 * _LN2 * R - F * delta_period / sigma)
                     * (kappa / delta_period + eta))
    omega = (_LN2 * sigma * R - F * delta_period) / delta_period
    return c, omega


def _min_int_strict(threshold: float) -> int:
    return max(1, int(math.floor(threshold)) + 1)


def _min_int_weak(threshold: float) -> int:
    # non-strict bound: an exactly integral threshold is itself admissible
    return max(1, int(math.ceil(threshold)))


def rate_bound_prop1(F: float, delta_period: float, sigma: float,
                     kappa: float, eta: float) -> tuple[float, int]:
    """Estimation rate condition: real threshold and the minimal integer
    strictly above it."""
    if sigma <= 0:
        raise dos_mod.FeasibilityError(f"sigma = {sigma} is not positive")
    threshold = max(F * delta_period, F * (kappa + eta * delta_period)) / (sigma * _LN2)
    return threshold, _min_int_strict(threshold)


def rate_bound_lemma5(F: float, delta_period: float, sigma: float, gamma: float,
                      K: float, eps: float) -> float:
    """Rate needed to push the error below eps by the time the state could
    reach the level boundary."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if K <= 0:
        raise ValueError("K must be positive")
    if math.isinf(K):
        return F * delta_period / (sigma * _LN2)
    return F * delta_period / (sigma * _LN2) + (math.log(gamma) - math.log(eps)) / (K * _LN2)


@dataclass(frozen=True)
class ThmRate:
    threshold_estimation: float
    threshold_stabilization: float
    R_min: int
    binding: str  # "estimation" or "stabilization"


def rate_bound_thm(params: DerivedParams) -> ThmRate:
    """Minimal integer rate meeting both the strict estimation condition and
    the non-strict stabilization condition; reports which one binds."""
    if params.alpha_rho <= 0:
        raise ValueError(f"alpha(alpha_2_inv(rho)) = {params.alpha_rho} must be positive")
    t1, r1 = rate_bound_prop1(params.F, params.delta_period, params.sigma,
                              params.kappa, params.eta)
    if params.M == 0.0:
        # error cannot disturb the Lyapunov decrease; only estimation binds
        t2 = -math.inf
        r2 = 1
    else:
        t2 = rate_bound_lemma5(params.F, params.delta_period, params.sigma,
                               params.gamma, params.K,
                               params.alpha_rho / params.M)
        r2 = _min_int_weak(t2)
    r = max(r1, r2)
    binding = "stabilization" if r2 >= r1 else "estimation"
    return ThmRate(t1, t2, r, binding)


def error_envelope_by_success(params: DerivedParams, ell: int,
                              R: int | None = None) -> float:
    """Bound gamma*lambda^(ell+1) on the error after ell+1 successes."""
    lam = params.lambda_ if R is None else lambda_factor(
        params.F, params.delta_period, params.sigma, R)
    return params.gamma * lam ** (ell + 1)


def error_envelope_by_time(params: DerivedParams, R: int, t: float) -> float:
    """Time-domain bound c*exp(-omega t); omega <= 0 means no decay at this
    rate (the value is still returned)."""
    c, omega = time_envelope_coeffs(params.W, params.F, params.kappa, params.eta,
                                    params.delta_period, params.sigma, R)
    return c * math.exp(-omega * t)


def k_constant(delta_margin: float, sigma: float, M: float, gamma: float,
               kappa: float, eta: float, delta_period: float) -> float:
    if M * gamma == 0.0:
        return math.inf
    return max(delta_margin * sigma / (M * gamma * delta_period)
               - kappa / delta_period - eta, 1.0)


def derive(model: PlantModel, cert: LyapunovCertificate, budget: dos_mod.DoSBudget,
           delta_period: float, X: float, delta_margin: float = 1e-4,
           rho: float | None = None, rho_fraction: float | None = None,
           R: int | None = None, plan: SamplingPlan = SamplingPlan(),
           phi_grid: int = 9, phi_step: float = 1e-3) -> DerivedParams:
    """Run the whole constant pipeline.

    ``rho`` pins the stabilization level directly; ``rho_fraction`` gives it
    as a fraction of l + delta_margin (default 0.999 when neither is set).
    ``R`` selects the rate at which lambda, c and omega are reported; the
    minimal stabilizing rate is used when omitted.

    The estimator safety factor is applied to U, F and M. The open-loop
    excursion is a direct simulation maximum and is reported as computed;
    inflating it would feed through l, W, O and U and no longer describe the
    simulated plant.
    """
    if delta_margin <= 0:
        raise ValueError("delta_margin must be positive")
    if rho is not None and rho_fraction is not None:
        raise ValueError("give rho or rho_fraction, not both")

    sig = dos_mod.sigma(budget, delta_period)
    if sig <= 0:
        raise dos_mod.FeasibilityError(
            f"sigma = {sig} is not positive: the budget admits no guaranteed transmissions")
    zbar0 = (budget.kappa + budget.eta * delta_period) / sig

    phimax0 = phi_max(model, X, zbar0, grid=phi_grid, h=phi_step)
    l = cert.alpha2(phimax0)
    W = cert.alpha1_inv(l + delta_margin)
    if not (W > phimax0):
        raise RuntimeError(
            f"derived W = {W} does not dominate the open-loop excursion {phimax0}")
    O = cert.alpha1_inv(cert.alpha2(2.0 * W))

    raw_plan = replace(plan, safety=1.0)
    U_raw = input_bound_U(cert, Box(O), raw_plan, m=model.m, n=model.n)
    U = U_raw * plan.safety
    F_raw = lipschitz_estimate(model, Box(W), Box(O), Box(U), raw_plan)
    F = F_raw * plan.safety
    M_raw = gain_bound_M(model, cert, Box(W), Box(O), raw_plan)
    M = M_raw * plan.safety

    gamma = gamma_factor(W, F, budget.kappa, budget.eta, delta_period, sig)
    K = k_constant(delta_margin, sig, M, gamma, budget.kappa, budget.eta, delta_period)

    if rho is None:
        frac = 0.999 if rho_fraction is None else rho_fraction
        if not (0 < frac < 1):
            raise ValueError("rho_fraction must lie in (0, 1)")
        rho = frac * (l + delta_margin)
    if not (0 < rho < l + delta_margin):
        raise ValueError(f"need 0 < rho < l + delta = {l + delta_margin}, got {rho}")
    alpha_rho = cert.alpha(cert.alpha2_inv(rho))

    t1, R_prop1 = rate_bound_prop1(F, delta_period, sig, budget.kappa, budget.eta)
    partial = DerivedParams(
        sigma=sig, zbar0=zbar0, phimax_zbar0=phimax0, l=l, delta=delta_margin,
        W=W, O=O, U=U, F=F, M=M, gamma=gamma, lambda_=0.0, c=0.0, omega=0.0,
        K=K, rho=rho, alpha_rho=alpha_rho, R_prop1=R_prop1, R_thm=0,
        R_used=0, thm_binding="", U_raw=U_raw, F_raw=F_raw, M_raw=M_raw,
        kappa=budget.kappa, eta=budget.eta, delta_period=delta_period,
    )
    thm = rate_bound_thm(partial)
    R_used = R if R is not None else thm.R_min
    lam = lambda_factor(F, delta_period, sig, R_used)
    c, omega = time_envelope_coeffs(W, F, budget.kappa, budget.eta,
                                    delta_period, sig, R_used)
    return replace(partial, lambda_=lam, c=c, omega=omega, R_thm=thm.R_min,
                   R_used=R_used, thm_binding=thm.binding)
