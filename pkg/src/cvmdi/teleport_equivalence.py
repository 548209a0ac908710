"""Heterodyne detection versus MDI-style detection with a Bob-held relay.

Four schemes map a single-mode Gaussian input to the classical law of a
heterodyne-type outcome:

1. direct heterodyne;
2. teleportation through a TMSV resource, then heterodyne of the output;
3. heterodyne of the TMSV arm first, then classical displacement by the
   Bell outcome;
4. the TMSV arm replaced by a Gaussian-modulated coherent state.

All maps are computed exactly at the level of means and covariances in
shot-noise units. Mode order inside the three-mode vectors is
``(input, resource arm 1, resource arm 2)`` with ``(Q, P)`` per mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import ValidationError
from .gaussian_core import CovarianceMatrix, validate_cm

STATE_TOL = 1e-9
_I2 = np.eye(2)
_Z2 = np.diag([1.0, -1.0])
_SQ2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class GaussianInputState:
    mean: np.ndarray
    cov: CovarianceMatrix

    def __post_init__(self):
        cov = validate_cm(self.cov)
        if cov.dim != 2:
            raise ValidationError("single-mode state needs a 2x2 covariance")
        mean = np.array(self.mean, dtype=float)
        if mean.shape != (2,):
            raise ValidationError("single-mode state needs a 2-vector mean")
        w = np.linalg.eigvalsh(cov.entries)
        if w[0] < 1 - STATE_TOL or np.linalg.det(cov.entries) < 1 - STATE_TOL:
            raise ValidationError(f"covariance {cov.entries.tolist()} is below the vacuum level")
        mean.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)

    @classmethod
    def vacuum(cls) -> "GaussianInputState":
        return cls(np.zeros(2), _I2)

    @classmethod
    def coherent(cls, q: float, p: float) -> "GaussianInputState":
        return cls(np.array([q, p]), _I2)

    @classmethod
    def thermal(cls, variance: float, q: float = 0.0, p: float = 0.0) -> "GaussianInputState":
        return cls(np.array([q, p]), variance * _I2)


@dataclass(frozen=True)
class TeleportConfig:
    squeezing_r: float = 0.0
    gain: float = 1.0
    V_B_mod: float = 0.0

    def __post_init__(self):
        for name in ("squeezing_r", "gain", "V_B_mod"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.squeezing_r < 0 or self.V_B_mod < 0:
            raise ValidationError("squeezing_r and V_B_mod must be >= 0")

    @classmethod
    def matched(cls, r: float, gain: float = 1.0) -> "TeleportConfig":
        """Config whose modulation variance reproduces squeezing ``r``."""
        return cls(squeezing_r=r, gain=gain, V_B_mod=modulation_for_squeezing(r))


@dataclass(frozen=True, eq=False)
class OutcomeLaw:
    mean: np.ndarray
    cov: CovarianceMatrix

    def __post_init__(self):
        object.__setattr__(self, "cov", validate_cm(self.cov))
        m = np.array(self.mean, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "mean", m)

    def max_abs_diff(self, other: "OutcomeLaw") -> float:
        return float(
            max(np.max(np.abs(self.mean - other.mean)), np.max(np.abs(self.cov.entries - other.cov.entries)))
        )

    def cov_diff(self, other: "OutcomeLaw") -> float:
        return float(np.max(np.abs(self.cov.entries - other.cov.entries)))


def tmsv_cm(r: float) -> np.ndarray:
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    return np.block([[c * _I2, s * _Z2], [s * _Z2, c * _I2]])


def tmsv_factor(r: float) -> np.ndarray:
    """``A`` with ``A @ A.T == tmsv_cm(r)``: two squeezed vacua on a beamsplitter.

    Columns are the four unit-variance vacuum noises. Working with factors
    instead of covariances keeps ``cosh(2r) - sinh(2r)`` from cancelling
    catastrophically at large ``r``.
    """
    e, ie = math.exp(r) / _SQ2, math.exp(-r) / _SQ2
    return np.array(
        [
            [e, 0.0, ie, 0.0],
            [0.0, ie, 0.0, e],
            [e, 0.0, -ie, 0.0],
            [0.0, ie, 0.0, -e],
        ]
    )


def modulation_for_squeezing(r: float) -> float:
    """Modulation variance left on arm 1 after heterodyning arm 2 of a TMSV."""
    return math.cosh(2 * r) - 1.0


def squeezing_for_modulation(V: float) -> float:
    return 0.5 * math.acosh(V + 1.0)


def added_noise(r: float) -> float:
    """Extra per-quadrature variance of unit-gain teleportation, ``2 e^{-2r}``."""
    if r < 0:
        raise ValidationError(f"squeezing must be >= 0, got {r}")
    return 2.0 * math.exp(-2.0 * r)


def _bell_beamsplitter() -> np.ndarray:
    # balanced beamsplitter on (input, arm 1): a = (in - 1)/sqrt2, b = (in + 1)/sqrt2
    s = np.zeros((6, 6))
    s[0:2, 0:2] = _I2 / _SQ2
    s[0:2, 2:4] = -_I2 / _SQ2
    s[2:4, 0:2] = _I2 / _SQ2
    s[2:4, 2:4] = _I2 / _SQ2
    s[4:6, 4:6] = _I2
    return s


def _three_mode_state(state: GaussianInputState, r: float, extra_noise: int = 0):
    """Mean and noise factor of (input, arm 1, arm 2) after the Bell beamsplitter.

    ``extra_noise`` appends unused vacuum columns for later couplings.
    """
    mean = np.concatenate([state.mean, np.zeros(4)])
    factor = block_diag(np.linalg.cholesky(state.cov.entries), tmsv_factor(r), np.zeros((0, extra_noise)))
    s = _bell_beamsplitter()
    return s @ mean, s @ factor


def _law(mean, factor) -> OutcomeLaw:
    return OutcomeLaw(mean, factor @ factor.T)


def scheme1_direct(state: GaussianInputState) -> OutcomeLaw:
    """Heterodyne outcome: mean unchanged, one shot-noise unit added."""
    return OutcomeLaw(state.mean.copy(), state.cov.entries + _I2)


def scheme2_teleport_then_heterodyne(state: GaussianInputState, cfg: TeleportConfig) -> OutcomeLaw:
    """Teleport onto arm 2 by Bell detection and feed-forward, then heterodyne.

    Feed-forward displaces arm 2 by ``gain * sqrt2 * (Q_a, P_b)``, where
    ``Q_a`` and ``P_b`` are the homodyne outcomes on the beamsplitter ports.
    Heterodyne of the teleported mode adds one shot-noise unit.
    """
    mean, factor = _three_mode_state(state, cfg.squeezing_r)
    ff = cfg.gain * _SQ2
    out_mean = mean[4:6] + ff * mean[[0, 3]]
    out_factor = factor[4:6] + ff * factor[[0, 3]]
    law = _law(out_mean, out_factor)
    return OutcomeLaw(law.mean, law.cov.entries + _I2)


def scheme3_heterodyne_then_displace(state: GaussianInputState, cfg: TeleportConfig) -> OutcomeLaw:
    """Heterodyne arm 2 first, then displace the classical outcome.

    Heterodyne is modelled explicitly: arm 2 meets a vacuum mode on a
    balanced beamsplitter, ``Q`` is read on one port and ``P`` on the other,
    both rescaled by ``sqrt2``.
    """
    mean, factor = _three_mode_state(state, cfg.squeezing_r, extra_noise=2)
    vac = np.zeros((2, factor.shape[1]))
    vac[:, -2:] = _I2
    port_c_q = (factor[4] + vac[0]) / _SQ2
    port_d_p = (factor[5] - vac[1]) / _SQ2
    het_factor = _SQ2 * np.vstack([port_c_q, port_d_p])
    het_mean = mean[4:6]
    ff = cfg.gain * _SQ2
    return _law(het_mean + ff * mean[[0, 3]], het_factor + ff * factor[[0, 3]])


def scheme4_mdi_prepare_and_measure(state: GaussianInputState, cfg: TeleportConfig) -> OutcomeLaw:
    """Bob prepares a modulated coherent state instead of holding a TMSV.

    Bob's classical variable ``y`` has variance ``V_B_mod + 2`` per quadrature
    (the law of a heterodyne outcome on the TMSV arm). He prepares a coherent
    state with quadrature means ``t (y_q, -y_p)``, ``t = sqrt(V/(V+2))``, so
    the prepared amplitudes have variance ``V_B_mod``. His output is ``y``
    displaced by ``gain * sqrt2`` times the Bell outcome.
    """
    v = cfg.V_B_mod
    t = math.sqrt(v / (v + 2.0))
    sd_y = math.sqrt(v + 2.0)
    # noise columns: (y_q, y_p, input (2), vacuum of the prepared coherent state (2))
    in_factor = np.linalg.cholesky(state.cov.entries)
    y = np.zeros((2, 6))
    y[:, 0:2] = sd_y * _I2
    arm1 = np.zeros((2, 6))
    arm1[:, 0:2] = t * sd_y * _Z2
    arm1[:, 4:6] = _I2
    inp = np.zeros((2, 6))
    inp[:, 2:4] = in_factor
    q_a = (inp[0] - arm1[0]) / _SQ2
    p_b = (inp[1] + arm1[1]) / _SQ2
    ff = cfg.gain * _SQ2
    out_factor = y + ff * np.vstack([q_a, p_b])
    if cfg.gain == 1.0:
        # y_q - t y_q without cancellation: 1 - t = (2/(v+2)) / (1 + t)
        rem = sd_y * (2.0 / (v + 2.0)) / (1.0 + t)
        out_factor[0, 0] = rem
        out_factor[1, 1] = rem
    out_mean = ff * np.array([state.mean[0], state.mean[1]]) / _SQ2
    return _law(out_mean, out_factor)
