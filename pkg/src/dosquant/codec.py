"""Dynamic-quantization encoder/decoder pair.

Both endpoints hold the same state: an estimate ``xhat``, a range ``L``
bounding twice the estimation error, and a phase flag. Before the first
successful transmission the estimate is pinned at the origin and the range
tracks twice the worst open-loop excursion (zoom-out). Afterwards the
estimate integrates the nominal closed loop, the range grows by the exact
exponential exp(F dt) between successes, and every success splits each edge
of the range box into 2^R cells, reconstructs at the cell centroid, and
divides the range by 2^R (zoom-in).

Because the protocol is acknowledgment based, encoder and decoder fed the
same event sequence stay exactly equal; both sides run the identical
centroid arithmetic (one shared code path), so equality is bitwise.

Wire format: the per-dimension cell digits are packed little-endian by
dimension into one unsigned integer of n*R bits, which must fit 64 bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    LyapunovCertificate,
    PlantModel,
    integrate_step,
    integrate_step_scalar,
)

PHASE_PRE = "pre-first-success"
PHASE_POST = "post-first-success"

# Containment checks tolerate representation noise: exact-arithmetic
# invariants survive only down to a handful of ulps once the range shrinks
# toward the spacing of the floats carrying the state.
_CONTAINMENT_RTOL = 1e-12


class PhaseError(RuntimeError):
    """Operation invoked in the wrong codec phase."""


class CodecOverflowError(RuntimeError):
    """The state left the quantization region: the rate condition failed."""


class ProtocolError(RuntimeError):
    """Received index is outside the agreed wire range."""


@dataclass(frozen=True)
class CodecState:
    xhat: tuple[float, ...]
    L: float
    phase: str
    R: int
    n: int


@dataclass(frozen=True)
class QuantizationIndex:
    digits: tuple[int, ...]
    packed: int


def pack_digits(digits: tuple[int, ...], R: int) -> int:
    """Pack per-dimension digits, dimension 0 in the least significant bits."""
    packed = 0
    for j, d in enumerate(digits):
        if not (0 <= d < (1 << R)):
            raise ValueError(f"digit {d} out of range for R={R}")
        packed |= d << (R * j)
    return packed


def unpack_digits(packed: int, R: int, n: int) -> tuple[int, ...]:
    if not (0 <= packed < (1 << (R * n))):
        raise ProtocolError(f"packed index {packed} outside [0, 2^{R * n})")
    mask = (1 << R) - 1
    return tuple((packed >> (R * j)) & mask for j in range(n))


def init(X: float, R: int, n: int) -> CodecState:
    """Fresh synchronized state: origin estimate, range 2X, zoom-out phase.

    X = 0 is the degenerate exactly-known-origin case; the range stays zero
    and encoding reduces to the midpoint digit.
    """
    if X < 0:
        raise ValueError("initial radius X must be nonnegative")
    if R < 1 or n < 1:
        raise ValueError("R and n must be positive integers")
    if R * n > 64:
        raise ValueError(f"n*R = {R * n} exceeds the 64-bit wire format")
    return CodecState(xhat=(0.0,) * n, L=2.0 * X, phase=PHASE_PRE, R=R, n=n)


def containment_slack(x_inf: float, xhat_inf: float) -> float:
    """Absolute tolerance added to |x - xhat| <= L/2 checks."""
    return _CONTAINMENT_RTOL * max(1.0, x_inf, xhat_inf)


def evolve_pre(state: CodecState, t: float, phimax_at_t: float) -> CodecState:
    """Zoom-out update: range tracks twice the open-loop worst case at ``t``."""
    if state.phase != PHASE_PRE:
        raise PhaseError(f"evolve_pre at t={t} requires the zoom-out phase")
    if phimax_at_t < 0:
        raise ValueError("phimax must be nonnegative")
    return CodecState(state.xhat, 2.0 * phimax_at_t, PHASE_PRE, state.R, state.n)


def evolve_post(state: CodecState, dt: float, F: float, model: PlantModel,
                cert: LyapunovCertificate, h: float) -> CodecState:
    """Between-success update: the estimate integrates the nominal loop and
    the range grows by the closed-form factor exp(F dt).

    The estimate advances with RK4 in substeps of (about) ``h``. Within a
    substep the control is held at k(xhat) evaluated at the substep start,
    the same zero-order hold the plant sees, so the control cancels exactly
    from the error dynamics and the quantization region keeps its
    containment guarantee. The range uses the exact exponential per substep,
    never a numerical ODE solve.
    """
    if state.phase != PHASE_POST:
        raise PhaseError("evolve_post requires the zoom-in phase")
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0.0:
        return state
    steps = max(1, round(dt / h))
    sub = dt / steps
    growth = math.exp(F * sub)
    L = state.L
    if model.scalar_ok and cert.scalar_ok and state.n == 1:
        x = state.xhat[0]
        for _ in range(steps):
            x = integrate_step_scalar(model.f, x, cert.k(x), sub)
            L *= growth
        return CodecState((x,), L, PHASE_POST, state.R, state.n)
    x = np.asarray(state.xhat, dtype=float)
    for _ in range(steps):
        u = np.atleast_1d(np.asarray(cert.k(x), dtype=float))
        x = integrate_step(model, x, u, sub)
        L *= growth
    return CodecState(tuple(float(v) for v in x), L, PHASE_POST, state.R, state.n)


def _apply_digits(state: CodecState, digits: tuple[int, ...]) -> CodecState:
    """Shared centroid reconstruction; the single code path that keeps the
    encoder and decoder bitwise identical."""
    L = state.L
    cell = L / float(1 << state.R)
    if cell == 0.0:
        # Range already below the float floor: the estimate is exact to
        # machine resolution and stays put.
        return CodecState(state.xhat, L / float(1 << state.R), PHASE_POST,
                          state.R, state.n)
    half = 0.5 * L
    new_xhat = tuple((xj - half) + (d + 0.5) * cell
                     for xj, d in zip(state.xhat, digits))
    return CodecState(new_xhat, cell, PHASE_POST, state.R, state.n)


def encode(state: CodecState, x) -> tuple[QuantizationIndex, CodecState]:
    """Quantize the measured state and contract the range by 2^R.

    Each coordinate is binned by flooring against the cell width; a point
    exactly on the upper face clamps into the top cell (any consistent
    boundary rule preserves the half-cell error bound). Raises
    CodecOverflowError when the state lies outside the quantization region
    beyond representation noise.
    """
    xs = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
    if len(xs) != state.n:
        raise ValueError(f"state has dimension {len(xs)}, codec expects {state.n}")
    err = max(abs(a - b) for a, b in zip(xs, state.xhat))
    x_inf = max(abs(a) for a in xs)
    xh_inf = max(abs(b) for b in state.xhat)
    half = 0.5 * state.L
    if err > half + containment_slack(x_inf, xh_inf):
        raise CodecOverflowError(
            f"state outside quantization region: |x - xhat| = {err!r} > L/2 = {half!r}")
    top = (1 << state.R) - 1
    cell = state.L / float(1 << state.R)
    if cell == 0.0:
        digits = (1 << (state.R - 1),) * state.n
    else:
        digits = tuple(
            min(top, max(0, int(math.floor((xj - (xhj - half)) / cell))))
            for xj, xhj in zip(xs, state.xhat)
        )
    new_state = _apply_digits(state, digits)
    return QuantizationIndex(digits, pack_digits(digits, state.R)), new_state


def decode(state: CodecState, index: QuantizationIndex) -> CodecState:
    """Apply a received index; byte-for-byte the encoder's post-state.

    Only the packed integer is trusted (it is what the wire carries); the
    digits are unpacked from it.
    """
    digits = unpack_digits(index.packed, state.R, state.n)
    return _apply_digits(state, digits)
