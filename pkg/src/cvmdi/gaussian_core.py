"""Zero-mean multivariate Gaussian kernel: validation, conditioning, sampling
and empirical second moments.

All variances are in shot-noise units (vacuum quadrature variance = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NotPSD, NotSymmetric, SingularBlock, TooFewSamples

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10
SINGULAR_RTOL = 1e-12

#: rounds per RNG block; sampling streams are keyed by (seed, stream, block)
BLOCK_SIZE = 1 << 16


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric positive-semidefinite second-moment matrix.

    Construction validates the input: the matrix is symmetrized, checked for
    a minimum eigenvalue of at least ``-1e-10 * trace`` and small negative
    eigenvalues are clipped to zero.
    """

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"covariance matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NotPSD("covariance matrix has non-finite entries")
        scale = np.max(np.abs(m)) if m.size else 0.0
        asym = np.max(np.abs(m - m.T)) if m.size else 0.0
        if asym > SYMMETRY_RTOL * scale:
            raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {SYMMETRY_RTOL:g} x {scale:.3e}")
        m = 0.5 * (m + m.T)
        if m.size:
            w, u = np.linalg.eigh(m)
            floor = -PSD_RTOL * np.trace(m)
            if w[0] < floor:
                raise NotPSD(f"minimum eigenvalue {w[0]:.6g} below tolerance {floor:.3g}")
            if w[0] < 0:
                m = (u * np.clip(w, 0.0, None)) @ u.T
                m = 0.5 * (m + m.T)
        object.__setattr__(self, "entries", _readonly(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.entries, dtype=dtype)

    def block(self, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
        return self.entries[np.ix_(list(rows), list(cols))]

    def __repr__(self):
        return f"CovarianceMatrix(dim={self.dim}, entries={self.entries.tolist()!r})"


def validate_cm(entries) -> CovarianceMatrix:
    """Validate a square real matrix as a covariance matrix.

    Raises
    ------
    NotSymmetric
        if the asymmetry exceeds 1e-12 relative to the largest entry.
    NotPSD
        if an eigenvalue is below ``-1e-10 * trace``.
    """
    if isinstance(entries, CovarianceMatrix):
        return entries
    return CovarianceMatrix(entries)


@dataclass(frozen=True, eq=False)
class GaussianModel:
    cov: CovarianceMatrix
    mean: np.ndarray = field(default=None)

    def __post_init__(self):
        cov = validate_cm(self.cov)
        object.__setattr__(self, "cov", cov)
        mean = np.zeros(cov.dim) if self.mean is None else np.asarray(self.mean, dtype=float)
        if mean.shape != (cov.dim,):
            raise ValueError(f"mean has shape {mean.shape}, expected ({cov.dim},)")
        object.__setattr__(self, "mean", _readonly(mean))

    @property
    def dim(self) -> int:
        return self.cov.dim

    @classmethod
    def zero_mean(cls, cov) -> "GaussianModel":
        return cls(cov=validate_cm(cov))


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``n`` realizations of ``len(columns)`` labelled scalar variables."""

    columns: tuple
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        cols = tuple(self.columns)
        if data.ndim != 2 or data.shape[1] != len(cols):
            raise ValueError(f"data shape {data.shape} does not match {len(cols)} columns")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample batch contains non-finite values")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "data", _readonly(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def select(self, labels: Sequence[str]) -> np.ndarray:
        idx = [self.columns.index(c) for c in labels]
        return self.data[:, idx]


def _as_index_list(idx, dim: int) -> list:
    out = sorted({int(i) for i in np.atleast_1d(idx)})
    if not out:
        raise ValueError("index set must be nonempty")
    if out[0] < 0 or out[-1] >= dim:
        raise ValueError(f"indices {out} out of range for dimension {dim}")
    return out


def condition_on(model: GaussianModel, conditioned_vars, values=None) -> GaussianModel:
    """Law of the remaining variables given ``conditioned_vars``.

    The covariance is the Schur complement ``V_k - C V_c^{-1} C^T``. The mean
    is evaluated at the observed ``values`` (default: the conditioned block's
    own mean, which for zero-mean models gives a zero conditional mean).

    Raises
    ------
    SingularBlock
        if the conditioned block has an eigenvalue below 1e-12 of its trace.
    """
    dim = model.dim
    cond = _as_index_list(conditioned_vars, dim)
    kept = [i for i in range(dim) if i not in cond]
    if not kept:
        raise ValueError("cannot condition on every variable")

    v = model.cov.entries
    vc = v[np.ix_(cond, cond)]
    w = np.linalg.eigvalsh(vc)
    tr = np.trace(vc)
    if tr <= 0 or w[0] < SINGULAR_RTOL * tr:
        raise SingularBlock(f"conditioned block is singular (eigenvalues {w})")

    c = v[np.ix_(kept, cond)]
    gain = np.linalg.solve(vc, c.T).T
    cov = v[np.ix_(kept, kept)] - gain @ c.T

    mc = model.mean[cond]
    obs = mc if values is None else np.asarray(values, dtype=float)
    mean = model.mean[kept] + gain @ (obs - mc)
    return GaussianModel(cov=validate_cm(0.5 * (cov + cov.T)), mean=mean)


def psd_sqrt(cov: CovarianceMatrix) -> np.ndarray:
    """Factor ``L`` with ``L @ L.T == cov``; valid for singular matrices."""
    w, u = np.linalg.eigh(cov.entries)
    return u * np.sqrt(np.clip(w, 0.0, None))


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    """Counter-based generator for one block of rounds.

    Keying by block index makes every draw a function of (seed, stream,
    round index) only, so results do not depend on how rounds are chunked.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def blockwise_normals(
    n: int,
    width: int,
    seed: int,
    stream: int = 0,
    transform: Callable[[np.ndarray], np.ndarray] | None = None,
    out_width: int | None = None,
) -> np.ndarray:
    """Standard normals of shape ``(n, width)`` drawn block by block.

    ``transform`` is applied per block (to keep peak memory bounded) and must
    map ``(m, width)`` to ``(m, out_width)``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    out = np.empty((n, width if out_width is None else out_width))
    for b, start in enumerate(range(0, n, BLOCK_SIZE)):
        stop = min(start + BLOCK_SIZE, n)
        z = block_rng(seed, stream, b).standard_normal((stop - start, width))
        out[start:stop] = z if transform is None else transform(z)
    return out


def sample(model: GaussianModel, n: int, seed: int, columns=None) -> SampleBatch:
    """Draw ``n`` i.i.d. realizations of ``model``; deterministic in ``seed``."""
    if columns is None:
        columns = tuple(f"x{i}" for i in range(model.dim))
    factor = psd_sqrt(model.cov)
    mean = model.mean
    data = blockwise_normals(n, model.dim, seed, transform=lambda z: z @ factor.T + mean)
    return SampleBatch(columns=columns, data=data)


def second_moments(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Uncentered moment matrix ``(1/n) x^T y``."""
    y = x if y is None else y
    return (x.T @ y) / x.shape[0]


def empirical_cm(batch: SampleBatch) -> CovarianceMatrix:
    """Uncentered empirical second moments ``<x_i x_j>`` of a batch.

    The protocol variables are zero-mean by construction, so no centering is
    applied.
    """
    if batch.n < 2:
        raise TooFewSamples(f"need at least 2 rounds, got {batch.n}")
    m = second_moments(batch.data)
    return validate_cm(0.5 * (m + m.T))


def moment_stderr(cm: np.ndarray, n: int) -> np.ndarray:
    """Asymptotic standard error of each empirical second moment.

    For zero-mean Gaussian ``x, y``: ``Var(<xy>_emp) = (<x^2><y^2> + <xy>^2) / n``.
    """
    cm = np.asarray(cm, dtype=float)
    d = np.diag(cm)
    return np.sqrt((np.outer(d, d) + cm**2) / n)


def gaussian_mutual_information(model: GaussianModel, part_a, part_b) -> float:
    """Mutual information in nats between two disjoint groups of variables."""
    a = _as_index_list(part_a, model.dim)
    b = _as_index_list(part_b, model.dim)
    if set(a) & set(b):
        raise ValueError("part_a and part_b must be disjoint")
    v = model.cov.entries

    def logdet(idx):
        sign, ld = np.linalg.slogdet(v[np.ix_(idx, idx)])
        if sign <= 0 or not np.isfinite(ld):
            raise SingularBlock(f"block {idx} is singular")
        return ld

    mi = 0.5 * (logdet(a) + logdet(b) - logdet(a + b))
    return max(mi, 0.0)
