"""Closed-loop event engine and invariant auditing.

One run advances the plant with fixed-step RK4 under zero-order-hold control
recomputed from the decoder estimate at every integration step, attempts a
transmission every ``delta`` seconds, filters attempts through the attack
sequence, and applies the codec zoom events at the successes. The
integration step must divide the sampling period so every attempt lands
exactly on the step grid.

Encoder and decoder share all continuous-time evolution deterministically
(the protocol keeps them synchronized by construction), so the engine
advances one codec lineage between events and forks it at each success:
the encoder side quantizes, the decoder side applies the packed index, and
the two resulting states are asserted exactly equal.

Runs never crash on the two anticipated failure modes. A containment
violation ends the run with a diagnosed ``overflow`` status and a plant
excursion beyond ten times the estimate region ends it with ``divergence``;
both leave a truncated trace behind.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import bounds as bounds_mod
from . import codec as codec_mod
from . import dos as dos_mod
from .codec import CodecOverflowError, CodecState
from .dynamics import (
    IntegrationFault,
    LyapunovCertificate,
    PlantModel,
    integrate_step,
    integrate_step_scalar,
    phi_max_profile,
)

STABILIZATION_TOL = 1e-3  # |x(horizon)| at or below this counts as stabilized
_LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class AttackSpec:
    """Request to generate the attack instead of supplying one."""

    style: str = "random"
    seed: int = 0


@dataclass(frozen=True)
class SimConfig:
    model: PlantModel
    cert: LyapunovCertificate
    budget: dos_mod.DoSBudget
    attack: dos_mod.DoSSequence | AttackSpec
    delta: float
    R: int
    X: float
    x0: tuple[float, ...]
    horizon: float
    h: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if len(self.x0) != self.model.n:
            raise ValueError(f"x0 has dimension {len(self.x0)}, plant has {self.model.n}")
        if max(abs(v) for v in self.x0) > self.X:
            raise ValueError(f"|x0| = {max(abs(v) for v in self.x0)} exceeds X = {self.X}")
        if not (self.h > 0 and self.delta > 0 and self.horizon >= 0):
            raise ValueError("h, delta must be positive and horizon nonnegative")
        ratio = self.delta / self.h
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ValueError(f"integration step {self.h} must divide the period {self.delta}")
        hratio = self.horizon / self.h
        if abs(hratio - round(hratio)) > 1e-9 * max(1.0, hratio):
            raise ValueError("horizon must be a whole number of integration steps")


@dataclass
class SimTrace:
    """Recorded run: per-step series, events, realized successes, diagnostics."""

    config: SimConfig
    params: bounds_mod.DerivedParams
    attack: dos_mod.DoSSequence
    attack_valid: bool
    t: np.ndarray
    x: np.ndarray      # (rows, n)
    xhat: np.ndarray   # (rows, n)
    L: np.ndarray
    u: np.ndarray      # (rows, m)
    events: list[str]
    attempts: tuple[float, ...]
    successes: tuple[float, ...]
    status: str = "ok"               # ok | overflow | divergence
    fault_time: Optional[float] = None
    fault_detail: str = ""
    theta: Optional[float] = None    # z0 + delta_margin/(M gamma), diagnostic only
    audit: Optional[dict] = None

    @property
    def z0(self) -> Optional[float]:
        return self.successes[0] if self.successes else None

    def final_state_inf(self) -> float:
        return float(np.max(np.abs(self.x[-1])))


def run(config: SimConfig, params: bounds_mod.DerivedParams | None = None,
        phi_grid: int = 9) -> SimTrace:
    """Simulate one closed-loop run. Deterministic for a fixed config.

    ``params`` supplies the constants the codec needs (most importantly the
    range growth rate F); they are derived with default settings when not
    given.
    """
    model, cert = config.model, config.cert
    if params is None:
        params = bounds_mod.derive(model, cert, config.budget, config.delta,
                                   config.X, phi_grid=phi_grid, phi_step=config.h)
    if isinstance(config.attack, AttackSpec):
        attack = dos_mod.generate(config.budget, config.delta, config.horizon,
                                  seed=config.attack.seed, style=config.attack.style)
    else:
        attack = config.attack
    attack_valid = dos_mod.validate(attack, config.budget).valid

    n, m = model.n, model.m
    h = config.h
    spd = round(config.delta / h)
    n_steps = round(config.horizon / h)
    log = dos_mod.resolve_transmissions(attack, config.delta, config.horizon)
    z0_t = log.successes[0] if log.successes else None
    pre_end = z0_t if z0_t is not None else config.horizon
    profile = phi_max_profile(model, config.X, pre_end, grid=phi_grid, h=h)

    scalar = model.scalar_ok and cert.scalar_ok and n == 1 and m == 1
    F, O = params.F, params.O
    diverge_at = 10.0 * O

    t_arr = np.empty(n_steps + 1)
    x_arr = np.empty((n_steps + 1, n))
    xh_arr = np.empty((n_steps + 1, n))
    L_arr = np.empty(n_steps + 1)
    u_arr = np.empty((n_steps + 1, m))
    events: list[str] = []

    state = codec_mod.init(config.X, config.R, n)
    successes: list[float] = []
    status = "ok"
    fault_time: Optional[float] = None
    fault_detail = ""

    if scalar:
        x_s: float | np.ndarray = config.x0[0]
        u_s: float | np.ndarray = 0.0
    else:
        x_s = np.asarray(config.x0, dtype=float)
        u_s = np.zeros(m)

    def record(j: int, t: float, event: str) -> None:
        t_arr[j] = t
        if scalar:
            x_arr[j, 0] = x_s
            u_arr[j, 0] = u_s
        else:
            x_arr[j] = x_s
            u_arr[j] = u_s
        xh_arr[j] = state.xhat
        L_arr[j] = state.L
        events.append(event)

    def control() -> float | np.ndarray:
        if scalar:
            return cert.k(state.xhat[0])
        return np.atleast_1d(np.asarray(cert.k(np.asarray(state.xhat)), dtype=float))

    rows = n_steps + 1
    j = 0
    while j <= n_steps:
        t = j * h
        event = ""
        try:
            # advance plant and codec from the previous step
            if j > 0:
                t_prev = (j - 1) * h
                if scalar:
                    x_s = integrate_step_scalar(model.f, x_s, u_s, h, t_prev)
                    escaped = not math.isfinite(x_s) or abs(x_s) > diverge_at
                else:
                    x_s = integrate_step(model, x_s, u_s, h, t_prev)
                    escaped = bool(np.max(np.abs(x_s)) > diverge_at)
                if escaped:
                    status, fault_time = "divergence", t
                    fault_detail = f"|x| exceeded 10*O = {diverge_at!r} at t = {t!r}"
                    rows = j
                    break
                if state.phase == codec_mod.PHASE_PRE:
                    state = codec_mod.evolve_pre(state, t, float(profile[j]))
                else:
                    state = codec_mod.evolve_post(state, h, F, model, cert, h)
                    u_s = control()
            # transmission attempt on the sampling grid
            if j % spd == 0:
                t_i = (j // spd) * config.delta
                if attack.in_dos(t_i):
                    event = "attempt-fail"
                else:
                    try:
                        idx, enc_next = codec_mod.encode(state, x_s)
                    except CodecOverflowError as exc:
                        status, fault_time = "overflow", t_i
                        fault_detail = str(exc)
                        record(j, t, "overflow")
                        rows = j + 1
                        break
                    dec_next = codec_mod.decode(state, idx)
                    if enc_next != dec_next:
                        raise RuntimeError(
                            f"encoder/decoder desynchronized at t = {t_i!r}")
                    state = enc_next
                    successes.append(t_i)
                    u_s = control()
                    event = f"success:{idx.packed}"
        except IntegrationFault as exc:
            status, fault_time = "divergence", t
            fault_detail = f"integration fault: {exc}"
            rows = j
            break
        # the estimate is bounded by O under a sufficient rate; well beyond
        # that the run has demonstrably diverged even if the plant is bounded
        if max(abs(v) for v in state.xhat) > diverge_at:
            status, fault_time = "divergence", t
            fault_detail = (f"|xhat| exceeded 10*O = {diverge_at!r} at t = {t!r}")
            rows = j
            break
        record(j, t, event)
        j += 1

    theta = None
    if successes:
        mg = params.M * params.gamma
        theta = successes[0] + (params.delta / mg if mg > 0 else math.inf)
    return SimTrace(
        config=config, params=params, attack=attack, attack_valid=attack_valid,
        t=t_arr[:rows], x=x_arr[:rows], xhat=xh_arr[:rows], L=L_arr[:rows],
        u=u_arr[:rows], events=events[:rows], attempts=log.attempts,
        successes=tuple(successes), status=status, fault_time=fault_time,
        fault_detail=fault_detail, theta=theta,
    )


# ---------------------------------------------------------------------------
# auditing


@dataclass
class ClauseResult:
    passed: bool
    violations: int
    worst_margin: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"passed": self.passed, "violations": self.violations,
                "worst_margin": self.worst_margin, "detail": self.detail}


@dataclass
class AuditReport:
    clauses: dict[str, ClauseResult] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.clauses.values())

    def passed_count(self) -> int:
        return sum(1 for c in self.clauses.values() if c.passed)

    def to_dict(self) -> dict:
        return {name: c.to_dict() for name, c in self.clauses.items()}


def _clause(ok: np.ndarray, margins: np.ndarray, detail: str = "") -> ClauseResult:
    viol = int(np.size(ok) - np.count_nonzero(ok))
    worst = float(np.min(margins)) if np.size(margins) else math.inf
    return ClauseResult(passed=(viol == 0), violations=viol,
                        worst_margin=worst, detail=detail)


def audit(trace: SimTrace, params: bounds_mod.DerivedParams,
          R: int | None = None) -> AuditReport:
    """Check every recorded step against the six guarantees.

    (i)   estimation error within half the quantization range
    (ii)  before the first success, error below the open-loop worst case,
          itself strictly below W
    (iii) error under gamma*lambda^(ell+1) between successes ell and ell+1
    (iv)  error under the time envelope c*exp(-omega t)
    (v)   Lyapunov value inside the target level set l + delta
    (vi)  realized success times within the worst-case transmission bounds

    Error comparisons carry an absolute slack of a few ulps of the state
    scale: once the range contracts to the resolution of the floats, the
    exact-arithmetic inequalities only hold to representation noise.
    The envelope clauses recompute lambda, c and omega at the run's rate.
    """
    if trace.status != "ok":
        raise ValueError(f"cannot audit an incomplete trace (status={trace.status!r})")
    if R is None:
        R = trace.config.R

    e = np.max(np.abs(trace.xhat - trace.x), axis=1)
    scale = np.maximum(1.0, np.maximum(np.max(np.abs(trace.x), axis=1),
                                       np.max(np.abs(trace.xhat), axis=1)))
    atol = codec_mod.containment_slack(1.0, 1.0) * scale
    half_L = 0.5 * trace.L
    report = AuditReport()

    margins = half_L + atol - e
    report.clauses["i_containment"] = _clause(margins >= 0, margins)

    z = np.asarray(trace.successes)
    z0 = trace.z0
    pre = trace.t < (z0 if z0 is not None else math.inf)
    if np.any(pre):
        m_err = half_L[pre] + atol[pre] - e[pre]
        m_w = params.W - half_L[pre]
        ok = (m_err >= 0) & (m_w > 0)
        report.clauses["ii_pre_first_success"] = _clause(
            ok, np.minimum(m_err, m_w),
            "error below the zoom-out range, range strictly below W")
    else:
        report.clauses["ii_pre_first_success"] = _clause(
            np.ones(0, bool), np.empty(0), "no pre-success samples")

    lam = bounds_mod.lambda_factor(params.F, params.delta_period, params.sigma, R)
    post = ~pre
    if z0 is not None and np.any(post):
        ell = np.searchsorted(z, trace.t[post], side="right") - 1
        env = params.gamma * lam ** (ell + 1.0)
        margins = env + atol[post] - e[post]
        detail = "" if lam < 1 else f"lambda = {lam:.6g} >= 1: envelope does not contract"
        report.clauses["iii_success_envelope"] = _clause(margins >= 0, margins, detail)
    else:
        report.clauses["iii_success_envelope"] = _clause(
            np.ones(0, bool), np.empty(0), "no successful transmissions")

    c, omega = bounds_mod.time_envelope_coeffs(
        params.W, params.F, params.kappa, params.eta, params.delta_period,
        params.sigma, R)
    env_t = c * np.exp(-omega * trace.t)
    margins = env_t + atol - e
    detail = "" if omega > 0 else f"omega = {omega:.6g} <= 0: envelope does not decay"
    report.clauses["iv_time_envelope"] = _clause(margins >= 0, margins, detail)

    V = np.array([trace.config.cert.V(row) for row in trace.x])
    margins = (params.l + params.delta + _LEVEL_TOL) - V
    report.clauses["v_level_set"] = _clause(margins >= 0, margins)

    if len(z):
        zb0, _ = dos_mod.lemma1_bounds(trace.config.budget, params.delta_period, 0)
        offs = z - z[0]
        allowed = (np.arange(len(z)) * params.delta_period
                   + params.kappa + params.eta * params.delta_period) / params.sigma
        m0 = zb0 + 1e-12 - z[0]
        m_off = allowed + 1e-12 - offs
        ok = np.concatenate(([m0 >= 0], m_off >= 0))
        report.clauses["vi_success_times"] = _clause(
            ok, np.concatenate(([m0], m_off)))
    else:
        report.clauses["vi_success_times"] = _clause(
            np.ones(0, bool), np.empty(0), "no successful transmissions")
    return report


# ---------------------------------------------------------------------------
# sweeps and serialization


@dataclass
class SweepRow:
    R: int
    stabilized: bool
    final_x_inf: float
    status: str
    audit_passed: int
    audit_total: int


@dataclass
class SweepResult:
    rows: list[SweepRow]
    R_thm: int

    def minimal_stabilizing(self) -> Optional[int]:
        ok = [r.R for r in self.rows if r.stabilized]
        return min(ok) if ok else None


def sweep_R(config: SimConfig, R_values, params: bounds_mod.DerivedParams | None = None,
            phi_grid: int = 9) -> SweepResult:
    """Re-run the same scenario (same seeds, same attack) across rates."""
    R_values = list(R_values)
    if not R_values:
        raise ValueError("empty rate range")
    base = config
    if params is None:
        params = bounds_mod.derive(base.model, base.cert, base.budget, base.delta,
                                   base.X, phi_grid=phi_grid, phi_step=base.h)
    rows = []
    for R in R_values:
        cfg = SimConfig(base.model, base.cert, base.budget, base.attack,
                        base.delta, int(R), base.X, base.x0, base.horizon, base.h)
        trace = run(cfg, params=params, phi_grid=phi_grid)
        if trace.status == "ok":
            rep = audit(trace, params, R=int(R))
            passed, total = rep.passed_count(), len(rep.clauses)
            final = trace.final_state_inf()
            stab = final <= STABILIZATION_TOL
        else:
            passed, total = 0, 0
            final = trace.final_state_inf() if len(trace.x) else math.inf
            stab = False
        rows.append(SweepRow(int(R), stab, final, trace.status, passed, total))
    return SweepResult(rows, params.R_thm)


def trace_to_csv(trace: SimTrace, path) -> None:
    """Plot-ready per-step dump, full float precision."""
    n, m = trace.config.model.n, trace.config.model.m
    header = (["t"] + [f"x_{i + 1}" for i in range(n)]
              + [f"xhat_{i + 1}" for i in range(n)] + ["L"]
              + [f"u_{i + 1}" for i in range(m)] + ["event"])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for j in range(len(trace.t)):
            cells = [repr(float(trace.t[j]))]
            cells += [repr(float(v)) for v in trace.x[j]]
            cells += [repr(float(v)) for v in trace.xhat[j]]
            cells.append(repr(float(trace.L[j])))
            cells += [repr(float(v)) for v in trace.u[j]]
            cells.append(trace.events[j])
            fh.write(",".join(cells) + "\n")


def audit_to_json(report: AuditReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
