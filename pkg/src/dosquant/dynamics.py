"""Plant, controller and Lyapunov-certificate primitives.

States and inputs are 1-D numpy float arrays. Every norm in this package is
the infinity norm, and every evaluation region is an origin-centered
hypercube ``B(r)`` of half-edge ``r``.

The quantities that the control scheme treats as known constants (the
worst-case open-loop excursion, the Lipschitz constant of the field in its
first argument, the certificate gain bound, the input bound) are estimated
here by deterministic grid sampling plus seeded random refinement. Ratio
estimators carry a multiplicative safety factor so that a sampled maximum
can stand in for the analytic one.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

Vector = np.ndarray

# Pairs closer than this are excluded from difference-quotient estimators
# (removable 0/0 singularity).
_PAIR_EXCLUSION = 1e-9


class IntegrationFault(RuntimeError):
    """The vector field produced a non-finite value during integration."""


class DivergenceError(RuntimeError):
    """An open-loop trajectory escaped to non-finite values before the target time."""


class ConfigurationError(ValueError):
    """A sampling plan or estimator configuration cannot be used."""


@dataclass(frozen=True)
class Box:
    """Origin-centered hypercube of half-edge ``radius``."""

    radius: float

    def __post_init__(self) -> None:
        if not (self.radius >= 0.0):
            raise ValueError(f"box radius must be nonnegative, got {self.radius}")


@dataclass(frozen=True)
class SamplingPlan:
    """How an estimator samples its evaluation boxes.

    grid:   lattice points per axis, endpoints included (the maxima of the
            bundled systems sit at box corners, so corners must be present)
    random: number of seeded uniform refinement samples
    seed:   seed for the refinement draws
    safety: multiplicative headroom applied to the sampled maximum
    """

    grid: int = 9
    random: int = 256
    seed: int = 0
    safety: float = 1.02

    def __post_init__(self) -> None:
        if self.grid < 2 and self.random <= 0:
            raise ConfigurationError("sampling plan is empty: need grid >= 2 or random > 0")
        if self.grid < 0 or self.random < 0:
            raise ConfigurationError("grid and random sample counts must be nonnegative")
        if self.safety < 1.0:
            raise ConfigurationError(f"safety factor must be >= 1, got {self.safety}")


@dataclass(frozen=True)
class PlantModel:
    """Control-affine or general nonlinear plant ``dx/dt = f(x, u)``.

    ``f`` maps (state, input) arrays to the state derivative. The origin with
    zero input must be an equilibrium. ``scalar_ok`` marks fields written in
    plain arithmetic that also accept Python floats when n = m = 1; the
    simulator uses this for a fast scalar integration path.
    """

    n: int
    m: int
    f: Callable[[Vector, Vector], Vector]
    name: str = ""
    scalar_ok: bool = False

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("state and input dimensions must be positive")


@dataclass(frozen=True)
class LyapunovCertificate:
    """Stabilizing law plus the Lyapunov data witnessing closed-loop stability.

    ``k`` is the feedback law, ``V`` the Lyapunov function with gradient row
    vector ``gradV``. ``alpha1 <= alpha2`` sandwich V through the state norm
    and ``alpha`` bounds the decrease rate; all three are class-K-infinity on
    the domain of use and carry explicit inverses for the first two.
    """

    k: Callable[[Vector], Vector]
    V: Callable[[Vector], float]
    gradV: Callable[[Vector], Vector]
    alpha1: Callable[[float], float]
    alpha2: Callable[[float], float]
    alpha: Callable[[float], float]
    alpha1_inv: Callable[[float], float]
    alpha2_inv: Callable[[float], float]
    scalar_ok: bool = False

    def verify(self, model: PlantModel, radius: float, grid: int = 11,
               tol: float = 1e-9) -> None:
        """Spot-check the certificate on a sampled grid of B(radius).

        Raises AssertionError with the offending sample when the sandwich
        ordering, the inverse consistency, or the decrease condition fails.
        """
        svals = np.linspace(0.0, max(radius, 1.0), grid)
        for s in svals:
            a1, a2 = self.alpha1(s), self.alpha2(s)
            assert a1 <= a2 + tol, f"alpha1({s})={a1} exceeds alpha2({s})={a2}"
            if s > 0:
                r1 = self.alpha1_inv(a1)
                r2 = self.alpha2_inv(a2)
                assert abs(r1 - s) <= 1e-9 * max(1.0, s), f"alpha1_inv o alpha1 != id at {s}"
                assert abs(r2 - s) <= 1e-9 * max(1.0, s), f"alpha2_inv o alpha2 != id at {s}"
        for pt in _lattice(radius, model.n, grid):
            x = np.asarray(pt, dtype=float)
            v = float(self.V(x))
            nx = float(np.max(np.abs(x))) if model.n else 0.0
            assert self.alpha1(nx) <= v + tol, f"V below alpha1 at {x}"
            assert v <= self.alpha2(nx) + tol, f"V above alpha2 at {x}"
            vdot = float(np.dot(np.atleast_1d(self.gradV(x)),
                                np.atleast_1d(model.f(x, self.k(x)))))
            assert vdot <= -self.alpha(nx) + 1e-9, (
                f"decrease condition fails at {x}: Vdot={vdot}, -alpha={-self.alpha(nx)}")


# ---------------------------------------------------------------------------
# integration


def _check_finite(x: Vector | float, t: float, what: str) -> None:
    ok = math.isfinite(x) if isinstance(x, float) else bool(np.isfinite(x).all())
    if not ok:
        raise IntegrationFault(f"non-finite {what} at t={t!r}: {x!r}")


def integrate_step(model: PlantModel, x: Vector, u: Vector, h: float,
                   t: float = 0.0) -> Vector:
    """One fixed-step RK4 update of the plant with the input held constant.

    ``t`` is only used to label integration faults.
    """
    if not (h > 0):
        raise ValueError(f"step size must be positive, got {h}")
    f = model.f
    k1 = f(x, u)
    k2 = f(x + (0.5 * h) * k1, u)
    k3 = f(x + (0.5 * h) * k2, u)
    k4 = f(x + h * k3, u)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(out, t + h, f"state (from x={x!r})")
    return out


def integrate_step_scalar(f: Callable[[float, float], float], x: float, u: float,
                          h: float, t: float = 0.0) -> float:
    """Scalar twin of :func:`integrate_step` for n = m = 1 fast paths."""
    k1 = f(x, u)
    k2 = f(x + 0.5 * h * k1, u)
    k3 = f(x + 0.5 * h * k2, u)
    k4 = f(x + h * k3, u)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not math.isfinite(out):
        raise IntegrationFault(f"non-finite state at t={t + h!r} (from x={x!r})")
    return out


# ---------------------------------------------------------------------------
# sampled estimators


def _axis_points(radius: float, grid: int) -> np.ndarray:
    if grid < 2:
        return np.array([radius, -radius]) if radius > 0 else np.array([0.0])
    return np.linspace(-radius, radius, grid)


def _lattice(radius: float, dim: int, grid: int):
    """Iterate lattice points of B(radius) in R^dim, corners included."""
    axis = _axis_points(radius, grid)
    if len(axis) ** dim > 200_000:
        raise ConfigurationError(
            f"lattice of {len(axis)}^{dim} points is too large; lower the grid resolution")
    return itertools.product(axis, repeat=dim)


def phi_max_profile(model: PlantModel, X: float, t_end: float, grid: int = 9,
                    h: float = 1e-3) -> np.ndarray:
    """Running maximum of |open-loop state| over initial states in B(X).

    Entry ``j`` is the worst infinity norm seen on [0, j*h] over a lattice of
    initial conditions driven with zero input. The last entry covers a final
    partial step so the profile ends exactly at ``t_end``. Nondecreasing by
    construction.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if X < 0:
        raise ValueError("X must be nonnegative")
    steps = int(math.floor(t_end / h + 1e-9))
    rem = t_end - steps * h
    if rem < 1e-12 * max(1.0, t_end):
        rem = 0.0
    total = steps + (1 if rem > 0 else 0)
    profile = np.empty(total + 1, dtype=float)
    if X == 0.0:
        profile.fill(0.0)
        return profile
    if grid < 2:
        raise ConfigurationError("phi_max needs at least 2 grid points per dimension")

    zero_u = np.zeros(model.m)
    scalar = model.scalar_ok and model.n == 1 and model.m == 1
    if scalar:
        states = [float(p[0]) for p in _lattice(X, model.n, grid)]
        running = max(abs(s) for s in states)
        profile[0] = running
        f = model.f
        for j in range(1, total + 1):
            hh = h if j <= steps else rem
            t = (j - 1) * h
            nxt = []
            for s in states:
                s2 = integrate_step_scalar(f, s, 0.0, hh, t)
                if not math.isfinite(s2):
                    raise DivergenceError(f"open-loop escape near t={t + hh}")
                nxt.append(s2)
                a = abs(s2)
                if a > running:
                    running = a
            states = nxt
            profile[j] = running
        return profile

    states = [np.asarray(p, dtype=float) for p in _lattice(X, model.n, grid)]
    running = max(float(np.max(np.abs(s))) for s in states)
    profile[0] = running
    for j in range(1, total + 1):
        hh = h if j <= steps else rem
        t = (j - 1) * h
        nxt = []
        for s in states:
            try:
                s2 = integrate_step(model, s, zero_u, hh, t)
            except IntegrationFault as exc:
                raise DivergenceError(f"open-loop escape near t={t + hh}: {exc}") from exc
            nxt.append(s2)
            a = float(np.max(np.abs(s2)))
            if a > running:
                running = a
        states = nxt
        profile[j] = running
    return profile


def phi_max(model: PlantModel, X: float, t: float, grid: int = 9,
            h: float = 1e-3) -> float:
    """Worst open-loop excursion from B(X) up to time ``t``, zero input.

    Monotone nondecreasing in both ``t`` and ``X`` (running maximum over a
    nested family of initial sets).
    """
    return float(phi_max_profile(model, X, t, grid=grid, h=h)[-1])


def lipschitz_estimate(model: PlantModel, W: Box, O: Box, U: Box,
                       plan: SamplingPlan = SamplingPlan()) -> float:
    """Sampled Lipschitz constant of f in its state argument.

    Maximum of |f(x,u) - f(xb,u)| / |x - xb| over B(W) x B(O) x B(U), on the
    deterministic lattice and the seeded refinement, times the safety factor.
    """
    if W.radius > O.radius:
        raise ValueError("state box W must be contained in estimate box O")
    best = 0.0
    f = model.f
    xs = [np.asarray(p, float) for p in _lattice(W.radius, model.n, plan.grid)]
    xbs = [np.asarray(p, float) for p in _lattice(O.radius, model.n, plan.grid)]
    us = [np.asarray(p, float) for p in _lattice(U.radius, model.m, plan.grid)]
    for u in us:
        fx = [f(x, u) for x in xs]
        fxb = [f(xb, u) for xb in xbs]
        for i, x in enumerate(xs):
            for j, xb in enumerate(xbs):
                d = float(np.max(np.abs(x - xb)))
                if d < _PAIR_EXCLUSION:
                    continue
                r = float(np.max(np.abs(fx[i] - fxb[j]))) / d
                if r > best:
                    best = r
    rng = np.random.default_rng(plan.seed)
    for _ in range(plan.random):
        x = rng.uniform(-W.radius, W.radius, model.n)
        xb = rng.uniform(-O.radius, O.radius, model.n)
        u = rng.uniform(-U.radius, U.radius, model.m)
        d = float(np.max(np.abs(x - xb)))
        if d < _PAIR_EXCLUSION:
            continue
        r = float(np.max(np.abs(np.asarray(f(x, u)) - np.asarray(f(xb, u))))) / d
        if r > best:
            best = r
    return best * plan.safety


def gain_bound_M(model: PlantModel, cert: LyapunovCertificate, W: Box, O: Box,
                 plan: SamplingPlan = SamplingPlan()) -> float:
    """Sampled bound on how strongly estimation error perturbs the V-derivative.

    The feedback mismatch satisfies f(x,k(xb)) - f(x,k(x)) = g(x,xb)(x - xb)
    for an implicit g, so the bound is the worst ratio
    |gradV(x) . (f(x,k(xb)) - f(x,k(x)))| / |x - xb| over B(W) x B(O).
    """
    if W.radius > O.radius:
        raise ValueError("state box W must be contained in estimate box O")
    best = 0.0
    f, kk, gV = model.f, cert.k, cert.gradV

    def ratio(x: Vector, xb: Vector) -> float:
        d = float(np.max(np.abs(x - xb)))
        if d < _PAIR_EXCLUSION:
            return -1.0
        mism = np.asarray(f(x, kk(xb))) - np.asarray(f(x, kk(x)))
        return abs(float(np.dot(np.atleast_1d(gV(x)), np.atleast_1d(mism)))) / d

    for px in _lattice(W.radius, model.n, plan.grid):
        x = np.asarray(px, float)
        for pxb in _lattice(O.radius, model.n, plan.grid):
            r = ratio(x, np.asarray(pxb, float))
            if r > best:
                best = r
    rng = np.random.default_rng(plan.seed)
    for _ in range(plan.random):
        x = rng.uniform(-W.radius, W.radius, model.n)
        xb = rng.uniform(-O.radius, O.radius, model.n)
        r = ratio(x, xb)
        if r > best:
            best = r
    return best * plan.safety


def input_bound_U(cert: LyapunovCertificate, O: Box,
                  plan: SamplingPlan = SamplingPlan(), m: int = 1, n: int = 1) -> float:
    """Sampled maximum of |k(x)| over B(O), times the safety factor."""
    best = 0.0
    for p in _lattice(O.radius, n, plan.grid):
        v = float(np.max(np.abs(cert.k(np.asarray(p, float)))))
        if v > best:
            best = v
    rng = np.random.default_rng(plan.seed)
    for _ in range(plan.random):
        x = rng.uniform(-O.radius, O.radius, n)
        v = float(np.max(np.abs(cert.k(x))))
        if v > best:
            best = v
    return best * plan.safety
