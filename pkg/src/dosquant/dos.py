"""Time-constrained denial-of-service: budgets, attack sequences, resolution.

An attack is a list of disjoint intervals [h_k, h_k + tau_k[ together with
the onset itself, so a zero-length entry is a pulse that blocks exactly its
instant (closed on the left, open on the right). A budget constrains every
window [tau, t]: the number of onsets inside it is at most
eta + (t - tau)/tau_d and the blocked duration inside it is at most
kappa + (t - tau)/T.
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np


class FeasibilityError(RuntimeError):
    """The budget leaves no room for the requested operation (sigma <= 0)."""


@dataclass(frozen=True)
class DoSBudget:
    """Duration offset kappa, onset-count offset eta, and the two slopes.

    T divides window length in the duration constraint, tau_d in the onset
    frequency constraint.
    """

    kappa: float
    eta: float
    T: float
    tau_d: float

    def __post_init__(self) -> None:
        if self.kappa < 0 or self.eta < 0:
            raise ValueError("kappa and eta must be nonnegative")
        if self.T <= 0 or self.tau_d <= 0:
            raise ValueError("T and tau_d must be positive")


@dataclass(frozen=True)
class DoSSequence:
    """Ordered, disjoint attack intervals (start, length) within [0, horizon]."""

    intervals: tuple[tuple[float, float], ...]
    horizon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals",
                           tuple((float(h), float(tau)) for h, tau in self.intervals))
        prev_end = -math.inf
        prev_start = -math.inf
        for h, tau in self.intervals:
            if not (math.isfinite(h) and math.isfinite(tau)):
                raise ValueError(f"non-finite interval ({h}, {tau})")
            if h < 0:
                raise ValueError(f"interval start {h} is negative")
            if tau < 0:
                raise ValueError(f"interval length {tau} is negative")
            if h <= prev_start:
                raise ValueError(f"interval starts must strictly increase (at {h})")
            if h < prev_end:
                raise ValueError(f"interval starting at {h} overlaps the previous one")
            if h > self.horizon:
                raise ValueError(f"interval start {h} is beyond the horizon {self.horizon}")
            prev_start, prev_end = h, h + tau

    @property
    def starts(self) -> tuple[float, ...]:
        return tuple(h for h, _ in self.intervals)

    def in_dos(self, t: float) -> bool:
        """True when a transmission at ``t`` is blocked (closed-left intervals)."""
        starts = [h for h, _ in self.intervals]
        i = bisect_right(starts, t) - 1
        if i < 0:
            return False
        h, tau = self.intervals[i]
        return t == h or (h <= t < h + tau)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "tau"])
            for h, tau in self.intervals:
                w.writerow([repr(h), repr(tau)])

    @classmethod
    def from_csv(cls, path, horizon: float | None = None) -> "DoSSequence":
        rows: list[tuple[float, float]] = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, start=1):
                if lineno == 1:
                    if [c.strip() for c in row] != ["h", "tau"]:
                        raise ValueError(f"row 1: expected header 'h,tau', got {row!r}")
                    continue
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 2:
                    raise ValueError(f"row {lineno}: expected two fields, got {len(row)}")
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError as exc:
                    raise ValueError(f"row {lineno}: {exc}") from None
        if horizon is None:
            horizon = max((h + tau for h, tau in rows), default=0.0)
        return cls(tuple(rows), horizon)


@dataclass(frozen=True)
class TransmissionLog:
    """Periodic attempts and the subsequence that got through the attack."""

    attempts: tuple[float, ...]
    successes: tuple[float, ...]
    success_indices: tuple[int, ...]


@dataclass(frozen=True)
class Violation:
    kind: str  # "frequency" or "duration"
    tau: float
    t: float
    observed: float
    allowed: float


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...] = ()
    pairs_checked: int = 0

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "pairs_checked": self.pairs_checked,
            "violations": [
                {"kind": v.kind, "tau": v.tau, "t": v.t,
                 "observed": v.observed, "allowed": v.allowed}
                for v in self.violations
            ],
        }


def duration_measure(seq: DoSSequence, tau: float, t: float) -> float:
    """Lebesgue length of the attacked part of the window [tau, t]."""
    if not (0 <= tau <= t):
        raise ValueError(f"need 0 <= tau <= t, got tau={tau}, t={t}")
    total = 0.0
    for h, ln in seq.intervals:
        total += max(0.0, min(h + ln, t) - max(h, tau))
    return total


def frequency_count(seq: DoSSequence, tau: float, t: float) -> int:
    """Number of attack onsets falling in the closed window [tau, t]."""
    if not (0 <= tau <= t):
        raise ValueError(f"need 0 <= tau <= t, got tau={tau}, t={t}")
    starts = [h for h, _ in seq.intervals]
    return bisect_right(starts, t) - bisect_left(starts, tau)


def _critical_points(seq: DoSSequence) -> np.ndarray:
    pts = {0.0, seq.horizon}
    for h, tau in seq.intervals:
        pts.add(h)
        pts.add(h + tau)
    return np.array(sorted(pts))


def validate(seq: DoSSequence, budget: DoSBudget) -> ValidationReport:
    """Check both budget constraints over every critical window pair.

    The blocked-duration measure is piecewise linear and the onset count
    piecewise constant, with breakpoints only at interval endpoints, so the
    worst windows start and end on the critical set
    {0, every onset, every interval end, horizon}.
    """
    pts = _critical_points(seq)
    starts = np.array([h for h, _ in seq.intervals])
    # cumulative blocked duration from 0 up to each critical point
    cum = np.array([duration_measure(seq, 0.0, p) for p in pts]) if len(pts) else np.zeros(0)
    onsets_le = np.searchsorted(starts, pts, side="right")
    onsets_lt = np.searchsorted(starts, pts, side="left")

    violations: list[Violation] = []
    n = len(pts)
    pairs = 0
    for i in range(n):  # tau index
        tau = pts[i]
        for j in range(i, n):  # t index
            t = pts[j]
            pairs += 1
            win = t - tau
            k_obs = int(onsets_le[j] - onsets_lt[i])
            k_allow = budget.eta + win / budget.tau_d
            if k_obs > k_allow + 1e-12:
                violations.append(Violation("frequency", float(tau), float(t),
                                            float(k_obs), float(k_allow)))
            d_obs = float(cum[j] - cum[i])
            d_allow = budget.kappa + win / budget.T
            if d_obs > d_allow + 1e-12:
                violations.append(Violation("duration", float(tau), float(t),
                                            d_obs, float(d_allow)))
    return ValidationReport(valid=not violations, violations=tuple(violations),
                            pairs_checked=pairs)


def resolve_transmissions(seq: DoSSequence, delta: float, horizon: float) -> TransmissionLog:
    """Which periodic attempts i*delta survive the attack.

    An attempt fails exactly when it lies inside some closed-left interval;
    the instant h + tau itself is open and therefore clear.
    """
    if not (delta > 0):
        raise ValueError("sampling period must be positive")
    count = int(math.floor(horizon / delta + 1e-9)) + 1
    attempts = tuple(i * delta for i in range(count))
    succ = []
    idx = []
    for i, t in enumerate(attempts):
        if not seq.in_dos(t):
            succ.append(t)
            idx.append(i)
    return TransmissionLog(attempts, tuple(succ), tuple(idx))


def sigma(budget: DoSBudget, delta: float) -> float:
    """Feasibility margin 1 - 1/T - delta/tau_d (may be nonpositive)."""
    if not (delta > 0):
        raise ValueError("sampling period must be positive")
    return 1.0 - 1.0 / budget.T - delta / budget.tau_d


def lemma1_bounds(budget: DoSBudget, delta: float, ell: int = 0) -> tuple[float, float]:
    """Worst-case first-success time and ell-th success offset.

    Returns ((kappa + eta*delta)/sigma, (ell*delta + kappa + eta*delta)/sigma).
    """
    s = sigma(budget, delta)
    if s <= 0:
        raise FeasibilityError(f"sigma = {s} is not positive; bounds do not apply")
    base = (budget.kappa + budget.eta * delta) / s
    return base, (ell * delta + budget.kappa + budget.eta * delta) / s


# ---------------------------------------------------------------------------
# generation

@dataclass
class _SeqBuilder:
    """Incremental feasibility bookkeeping for append-only construction.

    Appending an interval can only violate windows that end inside it, so a
    candidate is checked against every critical left endpoint with the two
    new right endpoints. Arrays mirror the interval list for vectorized
    checks.
    """

    budget: DoSBudget
    starts: list[float] = field(default_factory=list)
    lengths: list[float] = field(default_factory=list)
    # critical left endpoints and cumulative blocked duration at each
    lefts: list[float] = field(default_factory=lambda: [0.0])
    cum_at_left: list[float] = field(default_factory=lambda: [0.0])
    total_dur: float = 0.0

    def end(self) -> float:
        if not self.starts:
            return 0.0
        return self.starts[-1] + self.lengths[-1]

    def feasible(self, h: float, tau: float) -> bool:
        if self.starts and (h <= self.starts[-1] or h < self.end()):
            return False
        lefts = np.array(self.lefts + [h])
        cums = np.array(self.cum_at_left + [self.total_dur])
        starts = np.array(self.starts + [h])
        onsets_lt = np.searchsorted(starts, lefts, side="left")
        k_total = len(starts)
        for t, cum_t in ((h, self.total_dur), (h + tau, self.total_dur + tau)):
            k_obs = k_total - onsets_lt  # onsets in [left, t]; every onset is <= t here
            k_allow = self.budget.eta + (t - lefts) / self.budget.tau_d
            if np.any(k_obs > k_allow + 1e-12):
                return False
            d_obs = cum_t - cums
            d_allow = self.budget.kappa + (t - lefts) / self.budget.T
            if np.any(d_obs > d_allow + 1e-12):
                return False
        return True

    def append(self, h: float, tau: float) -> None:
        self.starts.append(h)
        self.lengths.append(tau)
        self.lefts.append(h)
        self.cum_at_left.append(self.total_dur)
        self.total_dur += tau
        self.lefts.append(h + tau)
        self.cum_at_left.append(self.total_dur)

    def build(self, horizon: float) -> DoSSequence:
        return DoSSequence(tuple(zip(self.starts, self.lengths)), horizon)


def _max_single_length(budget: DoSBudget, horizon: float) -> float:
    # One interval of length L alone must satisfy L <= kappa + L/T.
    if budget.T <= 1.0:
        return horizon
    return min(horizon, budget.kappa * budget.T / (budget.T - 1.0))


def generate(budget: DoSBudget, delta: float, horizon: float, seed: int = 0,
             style: str = "random") -> DoSSequence:
    """Produce an attack sequence that provably satisfies the budget.

    random:     exponential inter-arrivals (mean tau_d) with uniform lengths,
                each proposal accepted only if the augmented sequence still
                validates.
    worst-case: onsets aligned to sampling instants, greedily stretching each
                interval over as many consecutive attempts as the budget
                allows, placed as early as possible.
    """
    if style not in ("random", "worst-case"):
        raise ValueError(f"unknown attack style {style!r}")
    if style == "worst-case" and sigma(budget, delta) <= 0:
        raise FeasibilityError(
            f"worst-case generation needs sigma > 0, got {sigma(budget, delta)}")

    builder = _SeqBuilder(budget)
    # Any onset at all needs eta >= 1: the zero-length window at the onset
    # already counts one occurrence.
    if budget.eta < 1.0:
        return builder.build(horizon)

    if style == "random":
        rng = np.random.default_rng(seed)
        maxlen = _max_single_length(budget, horizon)
        cursor = 0.0
        misses = 0
        while True:
            h = cursor + float(rng.exponential(budget.tau_d))
            if h > horizon:
                break
            tau = float(rng.uniform(0.0, maxlen)) if maxlen > 0 else 0.0
            tau = min(tau, max(0.0, horizon - h))
            if builder.feasible(h, tau):
                builder.append(h, tau)
                cursor = h + tau
                misses = 0
            else:
                misses += 1
                if misses >= 50:
                    cursor += budget.tau_d
                    misses = 0
                if cursor > horizon:
                    break
        return builder.build(horizon)

    # worst-case: block runs of consecutive attempts
    maxlen = _max_single_length(budget, horizon)
    c_cap = max(1, int(math.ceil(maxlen / delta)) + 1)
    i = 0
    n_attempts = int(math.floor(horizon / delta + 1e-9))
    while i <= n_attempts:
        h = i * delta
        placed = False
        for c in range(c_cap, 0, -1):
            # tau = (c - 1/2)*delta covers attempts i .. i+c-1 and leaves the
            # next one clear; a single attempt is cheapest as a pulse.
            tau = 0.0 if c == 1 else (c - 0.5) * delta
            if h + tau > horizon:
                continue
            if builder.feasible(h, tau):
                builder.append(h, tau)
                i += c
                placed = True
                break
        if not placed:
            i += 1
    return builder.build(horizon)
