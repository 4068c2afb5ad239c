"""Quantized state-feedback control over a rate-limited channel under DoS.

The package couples a deterministic closed-loop simulator (dynamic
quantization codec, periodic transmissions filtered by an attack sequence)
with the derived-constant pipeline that lower-bounds the per-dimension bit
rate needed for stabilization.
"""
from .bounds import (
    DerivedParams,
    derive,
    error_envelope_by_success,
    error_envelope_by_time,
    rate_bound_lemma5,
    rate_bound_prop1,
    rate_bound_thm,
)
from .catalog import available, get_system, register
from .codec import CodecOverflowError, CodecState, QuantizationIndex
from .dos import (
    DoSBudget,
    DoSSequence,
    FeasibilityError,
    TransmissionLog,
    generate,
    lemma1_bounds,
    resolve_transmissions,
    sigma,
    validate,
)
from .dynamics import (
    Box,
    LyapunovCertificate,
    PlantModel,
    SamplingPlan,
    gain_bound_M,
    input_bound_U,
    integrate_step,
    lipschitz_estimate,
    phi_max,
)
from .sim import AttackSpec, AuditReport, SimConfig, SimTrace, audit, run, sweep_R

__version__ = "0.1.0"
