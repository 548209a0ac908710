"""Coherent-state preparation, lossy links and the relay's Bell detection.

Conventions (shot-noise units):

* Alice's local variables ``(q'_A, p'_A)`` are the quadrature means of her
  coherent state, so the mode quadratures are ``Q_A = q'_A + vacuum``.
* Each link maps ``Q -> sqrt(eta) Q + sqrt(1 - eta) vacuum`` and then adds
  thermal noise of variance ``excess_noise`` per quadrature.
* The honest relay announces ``q_Z = (Q_B - Q_A)/sqrt(2)`` and
  ``p_Z = (P_A + P_B)/sqrt(2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnknownStrategy, ValidationError
from .gaussian_core import GaussianModel, SampleBatch, blockwise_normals, validate_cm

COLUMNS = ("q'_A", "p'_A", "q'_B", "p'_B", "q_Z", "p_Z")
ALICE_COLUMNS = ("q'_A", "p'_A")
BOB_COLUMNS = ("q'_B", "p'_B")
ANNOUNCEMENT_COLUMNS = ("q_Z", "p_Z")

STRATEGIES = ("honest", "announce_noise", "rescaled")

# RNG streams; each is keyed independently by block index
_MODE_STREAM = 1
_RELAY_STREAM = 2


@dataclass(frozen=True)
class ProtocolParams:
    V_A: float
    V_B: float
    eta_A: float
    eta_B: float
    excess_noise: float = 0.0
    n_rounds: int = 100_000
    seed: int = 0

    def __post_init__(self):
        for name in ("V_A", "V_B", "excess_noise"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {val}")
        for name in ("eta_A", "eta_B"):
            val = getattr(self, name)
            if not (math.isfinite(val) and 0 <= val <= 1):
                raise ValidationError(f"{name} must lie in [0, 1], got {val}")
        if int(self.n_rounds) != self.n_rounds or self.n_rounds < 1:
            raise ValidationError(f"n_rounds must be a positive integer, got {self.n_rounds}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @classmethod
    def symmetric(cls, N: float, eta: float, **kw) -> "ProtocolParams":
        """Symmetric setting with ``V_A = V_B = 2N`` and equal links."""
        return cls(V_A=2 * N, V_B=2 * N, eta_A=eta, eta_B=eta, **kw)


@dataclass(frozen=True, eq=False)
class LocalView:
    """What one party holds: its own two columns and the public announcement.

    Estimators accept only this type, so they cannot see the other party's
    variables.
    """

    party: str
    local: np.ndarray
    announcement: np.ndarray

    def __post_init__(self):
        if self.party not in ("alice", "bob"):
            raise ValueError(f"unknown party {self.party!r}")
        loc = np.asarray(self.local, dtype=float)
        ann = np.asarray(self.announcement, dtype=float)
        if loc.ndim != 2 or loc.shape[1] != 2 or ann.shape != loc.shape:
            raise ValueError(
                f"local view needs two local and two announcement columns, got {loc.shape} and {ann.shape}"
            )
        loc.setflags(write=False)
        ann.setflags(write=False)
        object.__setattr__(self, "local", loc)
        object.__setattr__(self, "announcement", ann)

    @property
    def n(self) -> int:
        return self.local.shape[0]


class RoundVariables(SampleBatch):
    """Per-round ``(q'_A, p'_A, q'_B, p'_B, q_Z, p_Z)``, in that order."""

    def __init__(self, data):
        super().__init__(columns=COLUMNS, data=data)

    @property
    def alice(self) -> np.ndarray:
        return self.data[:, 0:2]

    @property
    def bob(self) -> np.ndarray:
        return self.data[:, 2:4]

    @property
    def announcements(self) -> np.ndarray:
        return self.data[:, 4:6]

    @property
    def primes(self) -> np.ndarray:
        return self.data[:, 0:4]

    def alice_view(self, announcement=None) -> LocalView:
        ann = self.announcements if announcement is None else announcement
        return LocalView("alice", self.alice, ann)

    def bob_view(self, announcement=None) -> LocalView:
        ann = self.announcements if announcement is None else announcement
        return LocalView("bob", self.bob, ann)


@dataclass(frozen=True, eq=False)
class ModeBatch:
    """Local modulations and the mode quadratures arriving at the relay.

    ``relay_inputs`` columns are ``(Q_A, P_A, Q_B, P_B)`` after loss and noise.
    """

    primes: np.ndarray
    relay_inputs: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.primes.shape[0]


def analytic_joint_cm(params: ProtocolParams) -> GaussianModel:
    """Exact joint law of ``(q'_A, p'_A, q'_B, p'_B, q_Z, p_Z)`` for an honest relay."""
    va, vb = params.V_A, params.V_B
    ea, eb = params.eta_A, params.eta_B
    xi = params.excess_noise

    # relay-input quadrature variance per arm: eta V + 1 + xi
    vz = 0.5 * (ea * va + eb * vb) + 1.0 + xi
    ca = math.sqrt(ea / 2) * va
    cb = math.sqrt(eb / 2) * vb

    v = np.zeros((6, 6))
    v[0, 0] = v[1, 1] = va
    v[2, 2] = v[3, 3] = vb
    v[4, 4] = v[5, 5] = vz
    v[0, 4] = v[4, 0] = -ca
    v[1, 5] = v[5, 1] = ca
    v[2, 4] = v[4, 2] = cb
    v[3, 5] = v[5, 3] = cb
    return GaussianModel.zero_mean(validate_cm(v))


def _sqrt_weights(params: ProtocolParams):
    return (
        math.sqrt(params.eta_A),
        math.sqrt(1 - params.eta_A),
        math.sqrt(params.eta_B),
        math.sqrt(1 - params.eta_B),
        math.sqrt(params.excess_noise),
    )


def simulate_modes(params: ProtocolParams) -> ModeBatch:
    """Sample local modulations and propagate the coherent states to the relay."""
    sa, la, sb, lb, sx = _sqrt_weights(params)
    sd_a, sd_b = math.sqrt(params.V_A), math.sqrt(params.V_B)

    def physics(z):
        # z columns: 4 modulation, 4 preparation vacuum, 4 loss vacuum, 4 excess noise
        out = np.empty((z.shape[0], 8))
        mod = z[:, 0:4] * np.array([sd_a, sd_a, sd_b, sd_b])
        out[:, 0:4] = mod
        prep = mod + z[:, 4:8]
        t = np.array([sa, sa, sb, sb])
        loss = np.array([la, la, lb, lb])
        out[:, 4:8] = t * prep + loss * z[:, 8:12] + sx * z[:, 12:16]
        return out

    raw = blockwise_normals(params.n_rounds, 16, params.seed, _MODE_STREAM, physics, out_width=8)
    return ModeBatch(primes=raw[:, 0:4], relay_inputs=raw[:, 4:8], seed=params.seed)


def bell_detection(relay_inputs: np.ndarray) -> np.ndarray:
    """Ideal CV Bell detection: ``((Q_B - Q_A)/sqrt2, (P_A + P_B)/sqrt2)``."""
    r = np.asarray(relay_inputs)
    q = (r[:, 2] - r[:, 0]) / math.sqrt(2)
    p = (r[:, 1] + r[:, 3]) / math.sqrt(2)
    return np.column_stack([q, p])


def adversarial_relay(modes: ModeBatch, strategy: str = "honest", k: float = 2.0) -> np.ndarray:
    """Announcement columns ``(q_Z, p_Z)`` produced by a relay strategy.

    ``honest`` performs the Bell detection; ``announce_noise`` broadcasts
    Gaussian noise with the honest announcement's variance but independent of
    the inputs; ``rescaled`` multiplies the honest announcement by ``k``.
    """
    if strategy == "honest":
        return bell_detection(modes.relay_inputs)
    if strategy == "rescaled":
        if not math.isfinite(k) or k == 0:
            raise ValidationError(f"rescale factor must be finite and nonzero, got {k}")
        return k * bell_detection(modes.relay_inputs)
    if strategy == "announce_noise":
        honest = bell_detection(modes.relay_inputs)
        sd = np.sqrt(np.mean(honest**2, axis=0))
        return blockwise_normals(modes.n, 2, modes.seed, _RELAY_STREAM) * sd
    raise UnknownStrategy(f"unknown relay strategy {strategy!r}; expected one of {STRATEGIES}")


def simulate_rounds(params: ProtocolParams, strategy: str = "honest", k: float = 2.0) -> RoundVariables:
    """Run steps 1-2 of the protocol for ``params.n_rounds`` rounds."""
    if strategy not in STRATEGIES:
        raise UnknownStrategy(f"unknown relay strategy {strategy!r}; expected one of {STRATEGIES}")
    modes = simulate_modes(params)
    ann = adversarial_relay(modes, strategy, k)
    return RoundVariables(np.hstack([modes.primes, ann]))
