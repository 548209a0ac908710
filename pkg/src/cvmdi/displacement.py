"""Conditional displacements of the local variables.

Each party subtracts ``g(gamma) = u q_Z + v p_Z`` from each of its two local
variables, with ``(u, v)`` chosen so the displaced raw key is uncorrelated
with the announcement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel_relay import RoundVariables
from .errors import DegenerateAnnouncement
from .estimation import StructuredCM
from .gaussian_core import CovarianceMatrix, moment_stderr, second_moments, validate_cm

VARIABLES = ("q'_A", "p'_A", "q'_B", "p'_B")
KEY_COLUMNS = ("q_A", "p_A", "q_B", "p_B")
_SHORT = ("qA", "pA", "qB", "pB")

DET_RTOL = 1e-12
DECORRELATION_SIGMAS = 5.0


@dataclass(frozen=True, eq=False)
class DisplacementGains:
    """Gains as a 4x2 array: row per local variable, columns ``(u, v)``."""

    matrix: np.ndarray

    def __post_init__(self):
        g = np.array(self.matrix, dtype=float)
        if g.shape != (4, 2):
            raise ValueError(f"gain matrix must be 4x2, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("gains must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "matrix", g)

    def u(self, var: str) -> float:
        return float(self.matrix[VARIABLES.index(var), 0])

    def v(self, var: str) -> float:
        return float(self.matrix[VARIABLES.index(var), 1])

    def as_dict(self) -> dict:
        out = {}
        for name, (u, v) in zip(_SHORT, self.matrix):
            out[f"u_{name}"] = float(u)
            out[f"v_{name}"] = float(v)
        return out


def _check_vz(vz: np.ndarray) -> float:
    qq, pp, qp = vz[0, 0], vz[1, 1], vz[0, 1]
    det = qq * pp - qp * qp
    if not det > DET_RTOL * qq * pp:
        raise DegenerateAnnouncement(
            f"announcement covariance is degenerate: det={det:.3e}, <q_Z^2>={qq:.3e}, <p_Z^2>={pp:.3e}"
        )
    return det


def solve_gains(cm: StructuredCM) -> DisplacementGains:
    """Gains that zero every cross moment between displaced keys and ``(q_Z, p_Z)``.

    For each local variable ``s``::

        u = (<s q_Z><p_Z^2> - <s p_Z><q_Z p_Z>) / det(v_Z)
        v = (<s p_Z><q_Z^2> - <s q_Z><q_Z p_Z>) / det(v_Z)

    Raises
    ------
    DegenerateAnnouncement
        if ``det(v_Z) <= 1e-12 <q_Z^2><p_Z^2>``.
    """
    vz = cm.v_Z.entries
    det = _check_vz(vz)
    qq, pp, qp = vz[0, 0], vz[1, 1], vz[0, 1]
    c = cm.cross()
    sq, sp = c[:, 0], c[:, 1]
    u = (sq * pp - sp * qp) / det
    v = (sp * qq - sq * qp) / det
    return DisplacementGains(np.column_stack([u, v]))


@dataclass(frozen=True, eq=False)
class DisplacedKeys:
    """Raw keys ``X = (q_A, p_A)`` and ``Y = (q_B, p_B)`` per round."""

    data: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def alice(self) -> np.ndarray:
        return self.data[:, 0:2]

    @property
    def bob(self) -> np.ndarray:
        return self.data[:, 2:4]


def apply_displacements(rounds: RoundVariables, gains: DisplacementGains) -> DisplacedKeys:
    primes = rounds.primes
    z = rounds.announcements
    if primes.shape[0] != z.shape[0]:
        raise ValueError("round count mismatch between local variables and announcements")
    keys = primes - z @ gains.matrix.T
    keys.setflags(write=False)
    return DisplacedKeys(keys)


def conditional_cm(cm: StructuredCM) -> CovarianceMatrix:
    """4x4 covariance of the displaced keys, ``V_A'B' - C v_Z^{-1} C^T``."""
    g = solve_gains(cm).matrix
    c = cm.cross()
    v_ab = cm.matrix()[0:4, 0:4]
    out = v_ab - g @ c.T
    return validate_cm(0.5 * (out + out.T))


def analytic_cross_moments(cm: StructuredCM, gains: DisplacementGains) -> np.ndarray:
    """Exact ``<displaced (q_Z, p_Z)>`` moments (4x2) under the model ``cm``."""
    return cm.cross() - gains.matrix @ cm.v_Z.entries


@dataclass(frozen=True, eq=False)
class DecorrelationReport:
    """Empirical cross moments between displaced keys and announcements.

    ``moments[i, j]`` is ``<key_i z_j>`` with ``key = (q_A, p_A, q_B, p_B)`` and
    ``z = (q_Z, p_Z)``.
    """

    moments: np.ndarray
    stderr: np.ndarray
    sigmas: float = DECORRELATION_SIGMAS

    @property
    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.moments) / self.stderr
        return np.where(self.stderr > 0, z, np.where(self.moments == 0, 0.0, np.inf))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.z_scores <= self.sigmas))

    def as_dict(self) -> dict:
        out = {}
        for i, k in enumerate(KEY_COLUMNS):
            for j, z in enumerate(("q_Z", "p_Z")):
                out[f"<{k} {z}>"] = float(self.moments[i, j])
                out[f"<{k} {z}>.stderr"] = float(self.stderr[i, j])
        out["passed"] = self.passed
        return out


def verify_decorrelation(keys: DisplacedKeys, announcements: np.ndarray, sigmas: float = DECORRELATION_SIGMAS) -> DecorrelationReport:
    z = np.asarray(announcements, dtype=float)
    if z.shape != (keys.n, 2):
        raise ValueError(f"announcements shape {z.shape} does not match {keys.n} rounds")
    n = keys.n
    moments = second_moments(keys.data, z)
    kk = np.mean(keys.data**2, axis=0)
    zz = np.mean(z**2, axis=0)
    stderr = np.sqrt((np.outer(kk, zz) + moments**2) / n)
    return DecorrelationReport(moments, stderr, sigmas)


def empirical_key_cm(keys: DisplacedKeys):
    """Empirical 4x4 moment matrix of the raw keys and its standard errors."""
    m = second_moments(keys.data)
    m = 0.5 * (m + m.T)
    return validate_cm(m), moment_stderr(m, keys.n)
