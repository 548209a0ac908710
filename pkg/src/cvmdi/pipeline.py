"""End-to-end experiment driver.

``run_experiment`` executes prepare -> relay -> local estimation -> displacement
and collects everything into a flat :class:`Report`. The only object shared
between the parties is :class:`PublicChannel`, which carries relay
announcements and nothing else.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, fields
from typing import Iterable

import numpy as np

from . import channel_relay as cr
from . import displacement as dsp
from . import estimation as est
from . import teleport_equivalence as tel
from .errors import CVMDIError, ValidationError
from .gaussian_core import GaussianModel, gaussian_mutual_information

REPORT_FORMATS = ("json", "csv")


@dataclass(frozen=True)
class ExperimentConfig:
    V_A: float = 2.0
    V_B: float = 2.0
    eta_A: float = 0.5
    eta_B: float = 0.5
    excess_noise: float = 0.0
    n_rounds: int = 100_000
    seed: int = 0
    relay_strategy: str = "honest"
    rescale_k: float = 2.0
    baseline_f: float = 0.1
    confidence: float = 0.95
    output_path: str = "-"
    report_format: str = "json"

    def __post_init__(self):
        self.params()  # range checks on the physical parameters
        if self.relay_strategy not in cr.STRATEGIES:
            raise ValidationError(f"relay_strategy must be one of {cr.STRATEGIES}, got {self.relay_strategy!r}")
        if not (math.isfinite(self.rescale_k) and self.rescale_k != 0):
            raise ValidationError(f"rescale_k must be finite and nonzero, got {self.rescale_k}")
        if not 0 <= self.baseline_f <= 1:
            raise ValidationError(f"baseline_f must lie in [0, 1], got {self.baseline_f}")
        if not 0 < self.confidence < 1:
            raise ValidationError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.report_format not in REPORT_FORMATS:
            raise ValidationError(f"report_format must be one of {REPORT_FORMATS}, got {self.report_format!r}")
        if self.n_rounds < 30:
            raise ValidationError("n_rounds must be at least 30 for confidence intervals")

    def params(self) -> cr.ProtocolParams:
        return cr.ProtocolParams(
            V_A=self.V_A,
            V_B=self.V_B,
            eta_A=self.eta_A,
            eta_B=self.eta_B,
            excess_noise=self.excess_noise,
            n_rounds=self.n_rounds,
            seed=self.seed,
        )

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        """Build from string or typed values keyed by field name."""
        kwargs = {}
        known = {f.name: f for f in fields(cls)}
        for key, raw in values.items():
            if key not in known:
                raise ValidationError(f"unknown config field {key!r}")
            typ = known[key].type
            try:
                if typ == "int":
                    kwargs[key] = int(raw)
                elif typ == "float":
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = str(raw)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"bad value for {key}: {raw!r}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        """Read flat ``key = value`` text; ``overrides`` take precedence."""
        with open(path) as fh:
            text = fh.read()
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string("[experiment]\n" + text)
        except configparser.Error as exc:
            raise ValidationError(f"cannot parse config {path}: {exc}") from exc
        values = dict(parser["experiment"])
        values.update(overrides or {})
        return cls.from_mapping(values)


class PublicChannel:
    """Authenticated broadcast channel with a byte-level trace.

    Only relay announcements can be sent. Every message is serialized to
    float64 bytes and the parties read back the decoded copy.
    """

    ANNOUNCEMENT = "relay_announcement"
    PARAMETER_ESTIMATION = "parameter_estimation"

    def __init__(self):
        self.trace: list[tuple[str, bytes]] = []

    def broadcast_announcements(self, announcements: np.ndarray) -> np.ndarray:
        z = np.ascontiguousarray(announcements, dtype="<f8")
        if z.ndim != 2 or z.shape[1] != 2:
            raise ValueError("the public channel only carries (q_Z, p_Z) announcement pairs")
        payload = z.tobytes()
        self.trace.append((self.ANNOUNCEMENT, payload))
        return np.frombuffer(payload, dtype="<f8").reshape(-1, 2)

    def bytes_by_class(self) -> dict:
        out = {self.ANNOUNCEMENT: 0, self.PARAMETER_ESTIMATION: 0}
        for kind, payload in self.trace:
            out[kind] = out.get(kind, 0) + len(payload)
        return out

    @property
    def total_bytes(self) -> int:
        return sum(len(p) for _, p in self.trace)


@dataclass
class RunArtifacts:
    """Intermediate objects of one run, kept for inspection and tests."""

    rounds: cr.RoundVariables
    received: np.ndarray
    channel: PublicChannel
    alice: est.PartialEstimate
    bob: est.PartialEstimate
    cm: est.StructuredCM
    halfwidths: np.ndarray
    gains: dsp.DisplacementGains
    keys: dsp.DisplacedKeys
    v_ab: np.ndarray
    decorrelation: dsp.DecorrelationReport
    mutual_information: float
    ledger: est.CommLedger


class Report(dict):
    """Flat mapping of scalar fields in a fixed order."""

    VOLATILE = ("wall_clock_s",)

    def without_volatile(self) -> dict:
        return {k: v for k, v in self.items() if k not in self.VOLATILE}


def _fmt(value) -> str:
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if not math.isfinite(x):
        raise ValueError(f"non-finite report value {x}")
    s = "%.17g" % x
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def to_json(report: dict) -> str:
    lines = [f"  {json.dumps(k)}: {_fmt(v)}" for k, v in report.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def to_csv(reports: Iterable[dict]) -> str:
    reports = list(reports)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(reports[0].keys()))
    for rep in reports:
        writer.writerow([v if isinstance(v, str) else _fmt(v) for v in rep.values()])
    return buf.getvalue()


def from_json(text: str) -> Report:
    return Report(json.loads(text))


def serialize(report: dict, fmt: str) -> str:
    if fmt == "json":
        return to_json(report)
    if fmt == "csv":
        return to_csv([report])
    raise ValidationError(f"unknown report format {fmt!r}")


def execute(cfg: ExperimentConfig) -> RunArtifacts:
    params = cfg.params()
    rounds = cr.simulate_rounds(params, cfg.relay_strategy, cfg.rescale_k)

    channel = PublicChannel()
    received = channel.broadcast_announcements(rounds.announcements)

    alice = est.alice_local_estimate(rounds.alice_view(received))
    bob = est.bob_local_estimate(rounds.bob_view(received))
    cm = est.assemble_cm(alice, bob, params.V_A, params.V_B)
    halfwidths = est.confidence_halfwidths(cm, params.n_rounds, cfg.confidence)

    gains = dsp.solve_gains(cm)
    keys = dsp.apply_displacements(rounds, gains)
    v_ab = dsp.conditional_cm(cm)
    decor = dsp.verify_decorrelation(keys, received)
    mi = gaussian_mutual_information(GaussianModel.zero_mean(v_ab), [0, 1], [2, 3])

    ledger = est.build_ledger(params, cfg.baseline_f)
    sent = channel.bytes_by_class()
    # transport boundary: the trace must match the ledger exactly
    if sent[PublicChannel.PARAMETER_ESTIMATION] != ledger.pe_extra_bytes or channel.total_bytes != (
        ledger.relay_announcement_bytes
    ):
        raise AssertionError(f"public channel trace {sent} disagrees with ledger {ledger}")

    return RunArtifacts(
        rounds, received, channel, alice, bob, cm, halfwidths, gains, keys, v_ab.entries, decor, mi, ledger
    )


_CM_LABELS = ("qA'", "pA'", "qB'", "pB'", "qZ", "pZ")
_KEY_LABELS = ("qA", "pA", "qB", "pB")


def build_report(cfg: ExperimentConfig, art: RunArtifacts, wall_clock: float) -> Report:
    rep = Report()
    for k, v in asdict(cfg).items():
        rep[f"config.{k}"] = v
    m = art.cm.matrix()
    for i in range(6):
        for j in range(i, 6):
            rep[f"cm.{_CM_LABELS[i]}.{_CM_LABELS[j]}"] = float(m[i, j])
    for i in range(6):
        for j in range(i, 6):
            rep[f"cm_halfwidth.{_CM_LABELS[i]}.{_CM_LABELS[j]}"] = float(art.halfwidths[i, j])
    for k, v in art.gains.as_dict().items():
        rep[f"gains.{k}"] = v
    for i in range(4):
        for j in range(i, 4):
            rep[f"V_AB.{_KEY_LABELS[i]}.{_KEY_LABELS[j]}"] = float(art.v_ab[i, j])
    for k, v in art.decorrelation.as_dict().items():
        rep[f"decorrelation.{k}"] = v
    rep["mutual_information_nats"] = float(art.mutual_information)
    led = art.ledger
    rep["ledger.relay_announcement_bytes"] = led.relay_announcement_bytes
    rep["ledger.pe_extra_bytes"] = led.pe_extra_bytes
    rep["ledger.error_correction_bytes"] = led.error_correction_bytes
    rep["ledger.error_correction_note"] = "not simulated"
    rep["ledger.privacy_amplification_note"] = "not simulated"
    rep["ledger.baseline_f"] = led.baseline_f
    rep["ledger.baseline_pe_bytes"] = led.baseline_pe_bytes
    rep["comparison.key_fraction_mdi_local"] = led.key_fraction_mdi_local
    rep["comparison.key_fraction_baseline"] = led.key_fraction_baseline
    rep["wall_clock_s"] = float(wall_clock)
    rep["seed"] = cfg.seed
    return rep


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Run one seeded experiment and return its flat report."""
    t0 = time.perf_counter()
    try:
        art = execute(cfg)
    except CVMDIError as exc:
        raise type(exc)(f"{exc} [config: {asdict(cfg)}]") from exc
    return build_report(cfg, art, time.perf_counter() - t0)


SWEEP_COLUMNS = ("r", "V_B_mod", "added_noise", "scheme4_vs_scheme1", "scheme2_vs_scheme3", "scheme4_vs_scheme3")


def run_equivalence_sweep(r_grid=None, V_grid=None, state: tel.GaussianInputState | None = None) -> list:
    """Tabulate scheme differences of the teleportation chain over a squeezing grid.

    Either ``r_grid`` or ``V_grid`` (modulation variances, mapped to ``r``)
    must be given. Rows come out sorted by increasing ``r``.
    """
    if (r_grid is None) == (V_grid is None):
        raise ValidationError("give exactly one of r_grid and V_grid")
    if r_grid is None:
        r_grid = [tel.squeezing_for_modulation(v) for v in V_grid]
    grid = sorted({float(r) for r in r_grid})
    if not grid:
        raise ValidationError("sweep grid is empty")
    if grid[0] < 0:
        raise ValidationError("squeezing values must be >= 0")
    state = tel.GaussianInputState.vacuum() if state is None else state
    direct = tel.scheme1_direct(state)
    rows = []
    for r in grid:
        cfg = tel.TeleportConfig.matched(r)
        s2 = tel.scheme2_teleport_then_heterodyne(state, cfg)
        s3 = tel.scheme3_heterodyne_then_displace(state, cfg)
        s4 = tel.scheme4_mdi_prepare_and_measure(state, cfg)
        rows.append(
            dict(
                zip(
                    SWEEP_COLUMNS,
                    (r, cfg.V_B_mod, tel.added_noise(r), s4.cov_diff(direct), s2.max_abs_diff(s3), s4.max_abs_diff(s3)),
                )
            )
        )
    return rows
