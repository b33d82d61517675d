"""Acceptance suite: one PASS/FAIL line per criterion, at fixed seeds.

Run ``pytest tests/test_acceptance.py -v`` (lines are printed live) or
``python3 tests/test_acceptance.py`` for the bare summary.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ergoproc.cocycle import forward_cocycle, perron_sequence, stopping_times
from ergoproc.drivers import deterministic_driver, iid_driver, markov_driver, rotation_driver, sample_path
from ergoproc.experiments import load_config, run
from ergoproc.families import amplitude_damping, depolarizing, diag_kraus
from ergoproc.maps import apply, compose, op_norm, perron_right, random_kraus_map, v_of
from ergoproc.matrices import random_density, trace_norm
from ergoproc.metric import contraction_coeff, dist, m_coeff, projective_action
from ergoproc.stats import clt_gate, lyapunov

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"


@pytest.fixture
def emit(capsys):
    def _emit(n, ok, detail, t0):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail} [{time.perf_counter() - t0:.3g}s]"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return _emit


def _run(name, tmp):
    cfg = load_config(CONFIGS / name)
    return run(cfg, tmp, jobs=2)


def _report_detail(report):
    return "; ".join(v.line() for v in report.verdicts)


def test_criterion_01_metric_exactness(emit):
    t0 = time.perf_counter()
    A, B = np.diag([0.7, 0.3]), np.eye(2) / 2
    d, mab, mba = dist(A, B).d, m_coeff(A, B), m_coeff(B, A)
    err = max(abs(d - 0.4), abs(mab - 0.6), abs(mba - 5 / 7))
    emit(1, err <= 1e-12, f"d={d:.15g} m_ab={mab:.15g} m_ba={mba:.15g} max err={err:.1e} (<=1e-12)", t0)


def test_criterion_02_metric_bounds_and_triangle(emit):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = -math.inf
    for _ in range(1000):
        A, B, C = random_density(rng, 2, rank=2, size=3)
        ab, bc, ac = dist(A, B).d, dist(B, C).d, dist(A, C).d
        worst = max(worst, 0.5 * trace_norm(A - B) - ab, ab - 1, ac - ab - bc)
    emit(2, worst <= 1e-9, f"1000 pairs, worst violation {worst:.2e} (<=1e-9)", t0)


def test_criterion_03_mean_value_and_log_ratio(emit):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_mv = -math.inf
    for _ in range(1000):
        D = int(rng.integers(2, 4))
        phi = random_kraus_map(rng, D, int(rng.integers(1, D * D + 1)))
        X, Y = random_density(rng, D, rank=D, size=2)
        lhs = abs(math.log(trace_norm(apply(phi, X))) - math.log(trace_norm(apply(phi, Y))))
        worst_mv = max(worst_mv, lhs - 2 * op_norm(phi) / v_of(phi) * dist(X, Y).d)
    worst_lr, exhaustive, current = -math.inf, True, {}
    for i in range(1000):
        r = (0.3, 0.6, 0.9)[i % 3]
        if i % 30 < 3:  # a fresh phi for this r every 30 instances
            t_r = (1 - math.sqrt(1 - r * r)) / r
            phi = compose(depolarizing(1 - t_r * rng.uniform(0.2, 1.0)), random_kraus_map(rng, 2, 2))
            c = contraction_coeff(phi)
            exhaustive &= c.exhaustive and c.lower <= r
            current[r] = (phi, c.lower)
        phi, c_val = current[r]
        psi = random_kraus_map(rng, 2, int(rng.integers(1, 5)))
        A, B = random_density(rng, 2, size=2)
        lhs = abs(math.log(trace_norm(apply(psi, projective_action(phi, A))))
                  - math.log(trace_norm(apply(psi, projective_action(phi, B)))))
        worst_lr = max(worst_lr, lhs - c_val * (2 / r) * math.log(1 / (1 - r)))
    ok = worst_mv <= 1e-9 and worst_lr <= 1e-9 and exhaustive
    emit(3, ok, f"mean-value worst {worst_mv:.2e}, log-ratio worst {worst_lr:.2e} (<=1e-9), c exhaustive={exhaustive}", t0)


def test_criterion_04_perron_consistency(emit):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(50):
        D = 2 + i % 2
        phi = compose(depolarizing(rng.uniform(0.1, 0.5), dim=D), random_kraus_map(rng, D, int(rng.integers(1, 5))))
        rho = np.max(np.abs(np.linalg.eigvals(phi.matrix)))
        worst = max(worst, abs(perron_right(phi).eigenvalue - rho))
    gap = 0.0
    d = iid_driver([compose(depolarizing(0.2), random_kraus_map(np.random.default_rng(k), 2, 2)) for k in range(3)])
    for seed in range(10):
        for e in perron_sequence(sample_path(d, seed, 0, 32), [1, 2, 4, 8, 16, 32]):
            gap = max(gap, e.identity_gap)
    ok = worst <= 1e-8 and gap <= 1e-8
    emit(4, ok, f"|Lambda - rho| max {worst:.1e}, Lambda_n identity gap max {gap:.1e} (<=1e-8)", t0)


def test_criterion_05_exact_lyapunov(emit):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    tp = iid_driver([random_kraus_map(rng, 2, 2, trace_preserving=True) for _ in range(3)])
    zero = lyapunov(tp, 0, 500, 20).time_average
    diag = lyapunov(deterministic_driver(diag_kraus(0.9, 0.4)), 0, 200, 4, depth=200).l_hat
    err = abs(diag - math.log(0.81))
    emit(5, zero == 0.0 and err <= 1e-8, f"TP time-average {zero!r}; diag l_hat err {err:.1e} (<=1e-8)", t0)


def test_criterion_06_lln(tmp_path, emit):
    t0 = time.perf_counter()
    rep = _run("lln_two_channel.json", tmp_path)
    emit(6, rep.passed, _report_detail(rep), t0)


def test_criterion_07_kappa(tmp_path, emit):
    t0 = time.perf_counter()
    reps = [_run(f"spectral_depolarizing_{p}.json", tmp_path / p) for p in ("0.3", "0.6")]
    emit(7, all(r.passed for r in reps), " | ".join(_report_detail(r) for r in reps), t0)


def test_criterion_08_clt_scalar(tmp_path, emit):
    t0 = time.perf_counter()
    rep = _run("clt_scalar.json", tmp_path)
    emit(8, rep.passed, _report_detail(rep), t0)


def test_criterion_09_clt_degenerate(tmp_path, emit):
    t0 = time.perf_counter()
    rep = _run("clt_degenerate.json", tmp_path)
    emit(9, rep.passed, _report_detail(rep), t0)


def test_criterion_10_gate(emit):
    t0 = time.perf_counter()
    maps = [depolarizing(0.5), compose(depolarizing(0.2), amplitude_damping(0.4))]
    a = clt_gate(iid_driver(maps))
    b = clt_gate(markov_driver(maps, [[0.7, 0.3], [0.1, 0.9]]), p=3)
    c = clt_gate(rotation_driver(maps, 2**0.5 - 1))
    ok = (a.applicable and a.alpha_partial_sums[-1] == 0 and b.applicable and b.cauchy_gap <= 1e-9
          and c.verdict == "not_applicable")
    emit(10, ok, f"iid {a.verdict}, markov {b.verdict} gap {b.cauchy_gap:.1e} (<=1e-9), rotation {c.verdict}", t0)


def test_criterion_11_telescoping(emit):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        d = iid_driver([random_kraus_map(rng, 2, int(rng.integers(1, 5))) for _ in range(3)])
        path = sample_path(d, seed, 0, 12)
        X = random_density(rng, 2)
        sp = forward_cocycle(path, X, 12)[-1]
        M = np.eye(4, dtype=complex)
        for k in range(1, 13):
            M = path[k].matrix @ M
        direct = (M @ X.T.ravel()).reshape(2, 2).T
        got = math.exp(sp.log_norm) * sp.state
        worst = max(worst, np.linalg.norm(got - direct) / np.linalg.norm(direct))
    emit(11, worst <= 1e-9, f"20 paths, worst relative error {worst:.1e} (<=1e-9)", t0)


def test_criterion_12_tau_r(emit):
    t0 = time.perf_counter()
    d = iid_driver([depolarizing(0.5)])
    taus = [stopping_times(sample_path(d, s, -10, 10), 10, r=0.5, bound="submultiplicative").tau_r for s in range(10)]
    emit(12, all(t == 4 for t in taus), f"tau_r over 10 seeds {sorted(set(taus))} (all 4)", t0)


@pytest.mark.parametrize("name", ["simulate_markov.json"])
def test_criterion_13_determinism(tmp_path, name, emit):
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / name)
    a = run(cfg, tmp_path / "a", jobs=1).manifest
    b = run(cfg, tmp_path / "b", jobs=3).manifest
    emit(13, a == b and len(a) > 0, f"{len(a)} files, manifests equal={a == b}", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
