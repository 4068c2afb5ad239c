"""Built-in plant/certificate catalog.

Systems are registered under a string key so scenario files can refer to
them by name. Custom systems are registered programmatically; there is no
file format for plants.
"""
from __future__ import annotations

import math
from typing import Callable

from .dynamics import LyapunovCertificate, PlantModel


def _cubic_example() -> tuple[PlantModel, LyapunovCertificate]:
    # Scalar benchmark: dx/dt = x^2 - x^3 + u, stabilized by u = -(5/4) x
    # with V = x^2/2. Vdot = x^3 - x^4 - (5/4)x^2 <= -x^2, so alpha(s) = s^2
    # and alpha1 = alpha2 = s^2/2.
    model = PlantModel(
        n=1, m=1,
        f=lambda x, u: x * x - x * x * x + u,
        name="paper-example",
        scalar_ok=True,
    )
    cert = LyapunovCertificate(
        k=lambda x: -1.25 * x,
        V=lambda x: 0.5 * float(x[0]) ** 2,
        gradV=lambda x: x,
        alpha1=lambda s: 0.5 * s * s,
        alpha2=lambda s: 0.5 * s * s,
        alpha=lambda s: s * s,
        alpha1_inv=lambda v: math.sqrt(2.0 * v),
        alpha2_inv=lambda v: math.sqrt(2.0 * v),
        scalar_ok=True,
    )
    return model, cert


def _linear_contracting() -> tuple[PlantModel, LyapunovCertificate]:
    # dx/dt = -x + u is already contracting; the zero law certifies it.
    model = PlantModel(
        n=1, m=1,
        f=lambda x, u: -x + u,
        name="linear-contracting",
        scalar_ok=True,
    )
    cert = LyapunovCertificate(
        k=lambda x: 0.0 * x,
        V=lambda x: 0.5 * float(x[0]) ** 2,
        gradV=lambda x: x,
        alpha1=lambda s: 0.5 * s * s,
        alpha2=lambda s: 0.5 * s * s,
        alpha=lambda s: s * s,
        alpha1_inv=lambda v: math.sqrt(2.0 * v),
        alpha2_inv=lambda v: math.sqrt(2.0 * v),
        scalar_ok=True,
    )
    return model, cert


_REGISTRY: dict[str, Callable[[], tuple[PlantModel, LyapunovCertificate]]] = {
    "paper-example": _cubic_example,
    "linear-contracting": _linear_contracting,
}


def register(name: str,
             factory: Callable[[], tuple[PlantModel, LyapunovCertificate]]) -> None:
    _REGISTRY[name] = factory


def get_system(name: str) -> tuple[PlantModel, LyapunovCertificate]:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise KeyError(f"unknown system {name!r}; available: {known}") from None
    return factory()


def available() -> list[str]:
    return sorted(_REGISTRY)
