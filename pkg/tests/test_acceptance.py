"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (visible even
without ``-s``) before asserting. Run on its own with::

    pytest tests/test_acceptance.py -v
"""

import math
import time

import numpy as np
import pytest

from cvmdi.channel_relay import ProtocolParams, analytic_joint_cm, simulate_rounds
from cvmdi.displacement import (
    analytic_cross_moments,
    apply_displacements,
    conditional_cm,
    empirical_key_cm,
    solve_gains,
    verify_decorrelation,
)
from cvmdi.estimation import (
    StructuredCM,
    alice_local_estimate,
    assemble_cm,
    bob_local_estimate,
    dv_marginal_counterexample,
)
from cvmdi.gaussian_core import condition_on, moment_stderr
from cvmdi.pipeline import ExperimentConfig, PublicChannel, execute, run_equivalence_sweep
from cvmdi.teleport_equivalence import (
    GaussianInputState,
    TeleportConfig,
    modulation_for_squeezing,
    scheme1_direct,
    scheme2_teleport_then_heterodyne,
    scheme3_heterodyne_then_displace,
    scheme4_mdi_prepare_and_measure,
)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


def analytic_structured(p):
    return StructuredCM.from_matrix(analytic_joint_cm(p).cov.entries)


def test_criterion_1_closed_form_gains(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for N in (0.5, 1.0, 4.0):
        for eta in (0.1, 0.5, 0.9):
            g = solve_gains(analytic_structured(ProtocolParams.symmetric(N, eta))).matrix
            x = N * math.sqrt(eta / 2) / (eta * N + 0.5)
            expected = np.array([[-x, 0], [0, x], [x, 0], [0, x]])
            worst = max(worst, float(np.max(np.abs(g - expected))))
    elapsed = time.perf_counter() - t0
    verdict(1, worst <= 1e-12 and elapsed < 1.0, f"max gain error {worst:.2e} over 9 (N, eta), {elapsed:.3f} s")


def test_criterion_2_decorrelation(verdict):
    grid = [ProtocolParams(2, 2, 0.5, 0.5), ProtocolParams(1, 8, 0.1, 0.9, 0.2), ProtocolParams(6, 0.5, 0.8, 0.3)]
    analytic_worst = max(
        float(np.max(np.abs(analytic_cross_moments(cm, solve_gains(cm)))))
        for cm in map(analytic_structured, grid)
    )

    # gains are estimated on one batch and applied to an independent batch;
    # in-sample the residuals vanish identically and prove nothing
    n, runs = 10**6, 100
    passed = 0
    in_sample_worst = 0.0
    for s in range(runs):
        fit = simulate_rounds(ProtocolParams(2, 2, 0.5, 0.5, n_rounds=n, seed=20_000 + 2 * s))
        test = simulate_rounds(ProtocolParams(2, 2, 0.5, 0.5, n_rounds=n, seed=20_001 + 2 * s))
        cm = assemble_cm(alice_local_estimate(fit.alice_view()), bob_local_estimate(fit.bob_view()), 2, 2)
        gains = solve_gains(cm)
        passed += verify_decorrelation(apply_displacements(test, gains), test.announcements, sigmas=5).passed
        if s < 5:
            own = verify_decorrelation(apply_displacements(fit, gains), fit.announcements)
            in_sample_worst = max(in_sample_worst, float(np.max(np.abs(own.moments))))
    frac = passed / runs
    ok = analytic_worst <= 1e-12 and frac >= 0.95 and in_sample_worst <= 1e-12
    verdict(
        2,
        ok,
        f"analytic residual {analytic_worst:.2e}; out-of-sample within 5 SE in {passed}/{runs} runs; "
        f"in-sample residual {in_sample_worst:.2e}",
    )


def test_criterion_3_no_extra_communication(verdict):
    ns = [10**3, 10**4, 10**5, 10**6]
    seeds = 4
    trace_ok = True
    slopes = {}
    for eta in (0.1, 0.5, 0.9):
        for V in (1.0, 2.0, 8.0):
            rms = []
            for n in ns:
                errs = []
                for j in range(seeds):
                    cfg = ExperimentConfig(V_A=V, V_B=V, eta_A=eta, eta_B=eta, n_rounds=n, seed=1000 * j + int(math.log10(n)))
                    art = execute(cfg)
                    sent = art.channel.bytes_by_class()
                    trace_ok &= art.channel.total_bytes == 16 * n
                    trace_ok &= sent[PublicChannel.PARAMETER_ESTIMATION] == 0
                    truth = analytic_joint_cm(cfg.params()).cov.entries
                    errs.append(np.linalg.norm(art.cm.matrix() - truth))
                rms.append(math.sqrt(np.mean(np.square(errs))))
            slopes[(eta, V)] = float(np.polyfit(np.log10(ns), np.log10(rms), 1)[0])
    lo, hi = min(slopes.values()), max(slopes.values())
    ok = trace_ok and all(-0.6 <= s <= -0.4 for s in slopes.values())
    verdict(3, ok, f"trace 16n bytes and 0 PE bytes: {trace_ok}; error slopes in [{lo:.3f}, {hi:.3f}] over 9 settings")


def test_criterion_4_conditional_cm(verdict):
    rng = np.random.default_rng(4)
    identity_worst = 0.0
    z_worst = 0.0
    for k in range(10):
        p = ProtocolParams(
            V_A=float(rng.uniform(0.5, 8)),
            V_B=float(rng.uniform(0.5, 8)),
            eta_A=float(rng.uniform(0.05, 1)),
            eta_B=float(rng.uniform(0.05, 1)),
            excess_noise=float(rng.uniform(0, 0.3)),
            n_rounds=10**6,
            seed=400 + k,
        )
        cm = analytic_structured(p)
        v_ab = conditional_cm(cm).entries
        generic = condition_on(analytic_joint_cm(p), [4, 5]).cov.entries
        identity_worst = max(identity_worst, float(np.max(np.abs(v_ab - generic))))
        emp, se = empirical_key_cm(apply_displacements(simulate_rounds(p), solve_gains(cm)))
        z_worst = max(z_worst, float(np.max(np.abs(emp.entries - v_ab) / se)))
    ok = identity_worst <= 1e-12 and z_worst <= 6
    verdict(4, ok, f"vs Schur conditioning {identity_worst:.2e}; empirical keys max |z| {z_worst:.2f} (limit 6)")


def test_criterion_5_teleport_chain(verdict):
    rng = np.random.default_rng(5)
    s23 = 0.0
    s43 = 0.0
    for _ in range(50):
        a = rng.standard_normal((2, 2))
        state = GaussianInputState(rng.normal(0, 3, 2), np.eye(2) + a @ a.T)
        r = float(rng.uniform(0, 3))
        gain = float(rng.uniform(0, 1.5))
        cfg = TeleportConfig(squeezing_r=r, gain=gain)
        s23 = max(s23, scheme2_teleport_then_heterodyne(state, cfg).max_abs_diff(scheme3_heterodyne_then_displace(state, cfg)))
        matched = TeleportConfig(squeezing_r=r, V_B_mod=modulation_for_squeezing(r))
        s43 = max(
            s43,
            scheme4_mdi_prepare_and_measure(state, matched).max_abs_diff(scheme3_heterodyne_then_displace(state, matched)),
        )
    coherent = GaussianInputState.coherent(1.0, -0.5)
    big = scheme4_mdi_prepare_and_measure(coherent, TeleportConfig(V_B_mod=1e6)).cov_diff(scheme1_direct(coherent))
    rows = run_equivalence_sweep(r_grid=[0, 0.25, 0.5, 1, 2, 4, 10])
    diffs = [row["scheme4_vs_scheme1"] for row in rows]
    monotone = all(x > y for x, y in zip(diffs, diffs[1:]))
    ok = s23 <= 1e-12 and s43 <= 1e-12 and big < 1e-5 and monotone
    verdict(
        5,
        ok,
        f"s2 vs s3 {s23:.2e}; s4 vs s3 {s43:.2e}; s4 vs s1 at V_B_mod=1e6 {big:.2e}; sweep monotone {monotone}",
    )


def test_criterion_6_dv_counterexample(verdict):
    p1, p2 = dv_marginal_counterexample()
    xz = yz = True
    tv = 0.0
    for x in range(2):
        for z in range(4):
            xz &= sum(p1.probs[x, y, z] for y in range(2)) == sum(p2.probs[x, y, z] for y in range(2))
    for y in range(2):
        for z in range(4):
            yz &= sum(p1.probs[x, y, z] for x in range(2)) == sum(p2.probs[x, y, z] for x in range(2))
    outcomes = 0
    for x in range(2):
        for y in range(2):
            for z in range(4):
                tv += abs(p1.probs[x, y, z] - p2.probs[x, y, z])
                outcomes += 1
    tv *= 0.5
    ok = xz and yz and tv == 0.5 and outcomes == 16
    verdict(6, ok, f"(X,Z) equal {xz}, (Y,Z) equal {yz}, TV {tv} over {outcomes} outcomes")


def test_criterion_7_coverage(verdict):
    reps, n = 1000, 10**4
    base = ExperimentConfig(n_rounds=n)
    truth = analytic_joint_cm(base.params()).cov.entries
    # estimated entries: every pair touching (q_Z, p_Z), upper triangle
    idx = [(i, j) for i in range(6) for j in range(i, 6) if j >= 4]
    hits = np.zeros(len(idx))
    for s in range(reps):
        art = execute(ExperimentConfig(n_rounds=n, seed=10_000 + s, confidence=0.95))
        m, hw = art.cm.matrix(), art.halfwidths
        hits += [abs(m[i, j] - truth[i, j]) <= hw[i, j] for i, j in idx]
    cov = hits / reps
    ok = bool(np.all((cov >= 0.93) & (cov <= 0.97)))
    verdict(7, ok, f"per-entry coverage in [{cov.min():.3f}, {cov.max():.3f}] over {len(idx)} estimated entries")


def test_criterion_8_negative_controls(verdict):
    n = 10**6
    honest = execute(ExperimentConfig(n_rounds=n, seed=8))
    noise = execute(ExperimentConfig(n_rounds=n, seed=8, relay_strategy="announce_noise"))
    rescaled = execute(ExperimentConfig(n_rounds=n, seed=8, relay_strategy="rescaled", rescale_k=2.0))

    m = noise.cm.matrix()
    # standard errors under independence of modulation and announcement
    se = moment_stderr(np.diag(np.diag(m)), n)
    cross_z = float(np.max(np.abs(m[0:4, 4:6]) / se[0:4, 4:6]))
    vz = m[4, 4]
    gain_tol = 5 * math.sqrt(2 * vz / n) / vz
    gain_max = float(np.max(np.abs(noise.gains.matrix)))
    # cross estimates are O(n^-1/2), so the induced A-B correlation and MI are O(1/n^2)
    mi_ok = noise.mutual_information < 1.0 / n

    halved = float(np.max(np.abs(rescaled.gains.matrix - honest.gains.matrix / 2)))
    vab = float(np.max(np.abs(rescaled.v_ab - honest.v_ab)))
    ok = cross_z <= 5 and gain_max <= gain_tol and mi_ok and halved == 0.0 and vab <= 1e-12
    verdict(
        8,
        ok,
        f"noise relay: cross max |z| {cross_z:.2f}, max |gain| {gain_max:.1e} (tol {gain_tol:.1e}), "
        f"MI {noise.mutual_information:.1e} vs honest {honest.mutual_information:.3f}; "
        f"rescaled: gain halving error {halved:.1e}, V_AB change {vab:.1e}",
    )
