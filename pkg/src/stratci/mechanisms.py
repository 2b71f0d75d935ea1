"""Sensitivity computation and the Gaussian mechanism."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .core import StratumDesign, ValidationError
from .randomness import RandomStream, gaussian


class MechanismOutput(NamedTuple):
    """A private release together with the noise variance that produced it."""

    value: float
    noise_variance: float


def gaussian_mechanism(
    stream: RandomStream, true_value: float, sensitivity: float, rho: float
) -> MechanismOutput:
    """Release true_value + N(0, sensitivity^2 / (2 rho)).

    Satisfies rho-zCDP for a sensitivity-``sensitivity`` query under the
    adjacency the sensitivity was computed for.
    """
    if not sensitivity > 0.0:
        raise ValidationError(f"sensitivity must be positive, got {sensitivity}")
    if not rho > 0.0:
        raise ValidationError(f"rho must be positive, got {rho}")
    noise_variance = sensitivity * sensitivity / (2.0 * rho)
    return MechanismOutput(gaussian(stream, true_value, noise_variance), noise_variance)


@dataclass(frozen=True)
class SensitivityReport:
    """Sensitivities of the stratified estimator under substitute-one adjacency.

    Computed from the public design only (weights and sample sizes), never
    from observed counts, so the report itself is releasable without privacy
    cost.
    """

    proportion: float                        # max_h w_h / n_h
    variance: float                          # max_h (C_h / n_h)(1 - 1/n_h)
    stratum_constants: tuple[float, ...]     # C_h = w_h^2 ((N_h-n_h)/N_h) / (n_h-1)


def sensitivities(design: Sequence[StratumDesign]) -> SensitivityReport:
    """Sensitivity of the overall proportion and of its variance estimate.

    Substituting one record within stratum h moves p_hat by at most w_h/n_h,
    and moves the variance estimate by at most (C_h/n_h)(1 - 1/n_h) where
    C_h scales the p_hat_h(1-p_hat_h) term.
    """
    if not design:
        raise ValidationError("design must contain at least one stratum")
    delta_p = max(s.weight / s.sample_size for s in design)
    constants = tuple(
        s.weight**2 * ((s.population_size - s.sample_size) / s.population_size) / (s.sample_size - 1)
        for s in design
    )
    delta_v = max(
        (C / s.sample_size) * (1.0 - 1.0 / s.sample_size)
        for C, s in zip(constants, design)
    )
    return SensitivityReport(delta_p, delta_v, constants)
