"""Party-local covariance estimation, communication accounting and the
discrete-variable marginal counterexample.

Alice estimates ``c_AZ`` and ``v_Z`` from her own columns plus the public
announcement; Bob does the same for ``c_BZ``. Together with the declared
modulation variances this fills every entry of the 6x6 joint matrix without
any extra public message.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Dict

import numpy as np
from scipy.stats import norm

from .channel_relay import LocalView, ProtocolParams
from .errors import IncompatibleVZ, NotPSD, TooFewSamples
from .gaussian_core import (
    PSD_RTOL,
    CovarianceMatrix,
    GaussianModel,
    moment_stderr,
    second_moments,
    validate_cm,
)

#: bytes per relay announcement: two float64 values
ANNOUNCEMENT_BYTES = 16
VZ_COMPAT_SIGMAS = 6.0


@dataclass(frozen=True, eq=False)
class PartialEstimate:
    party: str
    cross_block: np.ndarray
    v_Z_est: np.ndarray
    n_used: int


def _local_estimate(view: LocalView, party: str) -> PartialEstimate:
    if not isinstance(view, LocalView):
        raise TypeError(
            f"{party} estimator takes a LocalView holding only {party}'s columns, got {type(view).__name__}"
        )
    if view.party != party:
        raise PermissionError(f"{party} estimator received {view.party}'s data")
    if view.n < 2:
        raise TooFewSamples(f"need at least 2 rounds, got {view.n}")
    cross = second_moments(view.local, view.announcement)
    vz = second_moments(view.announcement)
    return PartialEstimate(party, cross, 0.5 * (vz + vz.T), view.n)


def alice_local_estimate(view: LocalView) -> PartialEstimate:
    """``c_AZ = <(q'_A, p'_A) (q_Z, p_Z)^T>`` and ``v_Z`` from Alice's view."""
    return _local_estimate(view, "alice")


def bob_local_estimate(view: LocalView) -> PartialEstimate:
    """``c_BZ`` and ``v_Z`` from Bob's view."""
    return _local_estimate(view, "bob")


@dataclass(frozen=True, eq=False)
class StructuredCM:
    """The 6x6 joint matrix split into declared and estimated blocks.

    ``V_A_declared`` and ``V_B_declared`` are fixed by the protocol; the
    ``A'B'`` block is zero because the two modulations are independent.
    """

    V_A_declared: float
    V_B_declared: float
    v_Z: CovarianceMatrix
    c_AZ: np.ndarray
    c_BZ: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v_Z", validate_cm(self.v_Z))
        for name in ("c_AZ", "c_BZ"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (2, 2):
                raise ValueError(f"{name} must be 2x2, got {a.shape}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def matrix(self) -> np.ndarray:
        m = np.zeros((6, 6))
        m[0:2, 0:2] = self.V_A_declared * np.eye(2)
        m[2:4, 2:4] = self.V_B_declared * np.eye(2)
        m[4:6, 4:6] = self.v_Z.entries
        m[0:2, 4:6] = self.c_AZ
        m[2:4, 4:6] = self.c_BZ
        m[4:6, 0:2] = self.c_AZ.T
        m[4:6, 2:4] = self.c_BZ.T
        return m

    def cross(self) -> np.ndarray:
        """``c_AZ`` stacked over ``c_BZ`` (4x2)."""
        return np.vstack([self.c_AZ, self.c_BZ])

    def to_model(self) -> GaussianModel:
        return GaussianModel.zero_mean(validate_cm(self.matrix()))

    @classmethod
    def from_matrix(cls, m) -> "StructuredCM":
        m = np.asarray(m, dtype=float)
        return cls(
            V_A_declared=0.5 * (m[0, 0] + m[1, 1]),
            V_B_declared=0.5 * (m[2, 2] + m[3, 3]),
            v_Z=m[4:6, 4:6],
            c_AZ=m[0:2, 4:6],
            c_BZ=m[2:4, 4:6],
        )


def _repair_psd(cm: StructuredCM) -> StructuredCM:
    """Clip the Schur complement ``v_Z - C^T D^+ C`` at zero.

    Declared blocks ``D`` and the cross blocks ``C`` are kept; only ``v_Z``
    is raised, by the smallest amount that makes the whole matrix PSD.
    """
    d = np.diag([cm.V_A_declared] * 2 + [cm.V_B_declared] * 2)
    c = cm.cross()
    explained = c.T @ np.linalg.pinv(d) @ c
    w, u = np.linalg.eigh(cm.v_Z.entries - explained)
    vz = explained + (u * np.clip(w, 0.0, None)) @ u.T
    return StructuredCM(cm.V_A_declared, cm.V_B_declared, 0.5 * (vz + vz.T), cm.c_AZ, cm.c_BZ)


def assemble_cm(
    alice: PartialEstimate, bob: PartialEstimate, V_A_declared: float, V_B_declared: float
) -> StructuredCM:
    """Combine the two local estimates into the full structured matrix.

    Both parties estimate ``v_Z`` from the same announcements, so their
    estimates are averaged; a difference beyond 6 combined standard errors
    means the two announcement logs are out of sync.
    """
    if alice.party != "alice" or bob.party != "bob":
        raise ValueError("assemble_cm expects Alice's estimate first and Bob's second")
    if alice.n_used != bob.n_used:
        raise IncompatibleVZ(f"round counts differ: alice {alice.n_used}, bob {bob.n_used}")
    n = alice.n_used
    vz = 0.5 * (alice.v_Z_est + bob.v_Z_est)
    se = moment_stderr(vz, n) * math.sqrt(2.0)
    diff = np.abs(alice.v_Z_est - bob.v_Z_est)
    if np.any(diff > VZ_COMPAT_SIGMAS * se):
        raise IncompatibleVZ(
            f"v_Z estimates differ by {diff.max():.3e}, beyond {VZ_COMPAT_SIGMAS:g} standard errors"
        )
    cm = StructuredCM(V_A_declared, V_B_declared, vz, alice.cross_block, bob.cross_block)
    m = cm.matrix()
    if np.linalg.eigvalsh(m)[0] < -PSD_RTOL * np.trace(m):
        cm = _repair_psd(cm)
        try:
            validate_cm(cm.matrix())
        except NotPSD as exc:
            raise NotPSD(f"assembled estimate is not repairable: {exc}") from exc
    return cm


# per-entry halfwidth methods: (StructuredCM, n) -> 6x6 standard errors
_STDERR_METHODS: Dict[str, Callable[[StructuredCM, int], np.ndarray]] = {}


def register_stderr_method(name: str):
    def deco(fn):
        _STDERR_METHODS[name] = fn
        return fn

    return deco


@register_stderr_method("gaussian")
def _gaussian_stderr(est: StructuredCM, n: int) -> np.ndarray:
    # asymptotic variance of uncentered Gaussian second moments
    m = est.matrix()
    se = moment_stderr(m, n)
    estimated = np.zeros((6, 6), dtype=bool)
    estimated[4:6, :] = True
    estimated[:, 4:6] = True
    return np.where(estimated, se, 0.0)


def confidence_halfwidths(est: StructuredCM, n: int, confidence: float = 0.95, method: str = "gaussian") -> np.ndarray:
    """Two-sided confidence halfwidth for each entry of the 6x6 matrix.

    Declared entries (the ``A'`` and ``B'`` blocks) get halfwidth 0. The
    default ``gaussian`` method uses ``Var(<xy>) = (<x^2><y^2> + <xy>^2)/n``
    with plug-in moments; other methods can be added with
    :func:`register_stderr_method`.
    """
    if n < 30:
        raise TooFewSamples(f"confidence intervals need n >= 30, got {n}")
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    try:
        fn = _STDERR_METHODS[method]
    except KeyError:
        raise ValueError(f"unknown halfwidth method {method!r}") from None
    z = norm.ppf(0.5 + 0.5 * confidence)
    return z * fn(est, n)


@dataclass(frozen=True)
class CommLedger:
    """Byte counts per message class on the public channel."""

    n_rounds: int
    relay_announcement_bytes: int
    pe_extra_bytes: int
    error_correction_bytes: int
    baseline_f: float
    baseline_pe_bytes: int

    @property
    def key_fraction_mdi_local(self) -> float:
        return 1.0

    @property
    def key_fraction_baseline(self) -> float:
        return 1.0 - self.baseline_f


def baseline_pe_bytes(n_rounds: int, f: float) -> int:
    """Bytes revealed by a protocol that discloses a fraction ``f`` of rounds."""
    # round() guards against 0.1 * 10**6 = 100000.00000000001 style drift
    return math.ceil(round(f * n_rounds, 9)) * ANNOUNCEMENT_BYTES


def build_ledger(params: ProtocolParams, baseline_f: float, error_correction_bytes: int = 0) -> CommLedger:
    if not 0 <= baseline_f <= 1:
        raise ValueError(f"baseline_f must lie in [0, 1], got {baseline_f}")
    n = params.n_rounds
    return CommLedger(
        n_rounds=n,
        relay_announcement_bytes=ANNOUNCEMENT_BYTES * n,
        pe_extra_bytes=0,
        error_correction_bytes=int(error_correction_bytes),
        baseline_f=float(baseline_f),
        baseline_pe_bytes=baseline_pe_bytes(n, baseline_f),
    )


@dataclass(frozen=True, eq=False)
class JointPMF:
    """Probability table ``P[x, y, z]``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 3:
            raise ValueError("JointPMF needs a 3-axis table indexed [x, y, z]")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def shape(self):
        return self.probs.shape

    def marginal_xz(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def marginal_yz(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def prob_x_equals_y(self) -> float:
        nx, ny, _ = self.shape
        return float(sum(self.probs[i, i, :].sum() for i in range(min(nx, ny))))

    def total_variation(self, other: "JointPMF") -> float:
        return 0.5 * float(np.abs(self.probs - other.probs).sum())


def dv_marginal_counterexample():
    """Two laws over ``X, Y in {0,1}``, ``Z in {0..3}`` with equal (X,Z) and
    (Y,Z) marginals but different joints.

    ``P1``: Z uniform, X = Y uniform. ``P2``: Z uniform, X and Y independent
    uniform bits.
    """
    p1 = np.zeros((2, 2, 4))
    p2 = np.zeros((2, 2, 4))
    for x, y, z in product(range(2), range(2), range(4)):
        p1[x, y, z] = 0.25 * (0.5 if x == y else 0.0)
        p2[x, y, z] = 0.25 * 0.25
    return JointPMF(p1), JointPMF(p2)
