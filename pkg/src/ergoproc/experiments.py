"""Seeded batch experiments: config parsing, ensemble runs, CSV/JSON artifacts and verdicts.

Every experiment writes its data files into the output directory and returns
an :class:`ExperimentReport`. Data files are fully determined by the config:
floats are written with 17 significant digits and replica work split across
processes is merged in seed order.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .cocycle import estimate_Z, forward_cocycle, perron_sequence, stopping_times
from .drivers import driver_from_config, replica_seeds, sample_path
from .errors import ConfigError, ExperimentError
from .families import depolarizing
from .matrices import random_density, trace_norm
from .metric import contraction_coeff, dist, hilbert_metric
from .stats import (
    _check_drops,
    choose_depth,
    clt_gate,
    clt_rows,
    kappa,
    ks_normality,
    lln_curves,
    lyapunov_rows,
    sigma_batch_means,
    sigma_direct,
    sigma_martingale,
    summarize_lyapunov,
)

EXPERIMENTS = ("simulate", "lln", "clt", "spectral", "metric-selftest")
SIGMA_METHODS = ("direct", "batch_means", "martingale_series")

DEFAULT_TOLERANCES = {
    "ks_alpha": 0.01,
    "sigma_rel": 0.05,
    "sigma_abs": 0.0,
    "lyapunov_abs": 1e-8,
    "kappa_rel": 0.02,
    "window_rel": 0.05,
    "perron_gap": 1e-8,
    "metric_exact": 1e-12,
    "metric_slack": 1e-9,
    "lln_fraction": 0.9,
    "q_abs": 1e-6,
    "tau_fraction": 0.8,
}


# --- config -------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """One experiment run. ``seeds[0]`` is the master seed for ensembles.

    ``simulate``, ``lln`` and ``spectral`` follow one path per entry of
    ``seeds``; ``clt`` and the Lyapunov ensembles derive replica seeds from
    ``seeds[0]``.
    """

    experiment: str
    driver: Optional[dict] = None
    n: int = 2000
    n_replicas: int = 200
    seeds: list = field(default_factory=lambda: [0])
    probes: str = "basis"
    tolerances: dict = field(default_factory=dict)
    out: str = "out"
    n_grid: Optional[list] = None
    n_probe_pairs: int = 8
    l_replicas: int = 200
    depth: Optional[int] = None
    l_oracle: Optional[float] = None
    sigma_oracle: Optional[float] = None
    kappa_oracle: Optional[float] = None
    sigma_methods: list = field(default_factory=lambda: list(SIGMA_METHODS))
    batch_total: int = 250_000
    n_batches: Optional[int] = None
    k_max: int = 50
    mc_inner: int = 32
    n_outer: int = 400
    alpha: Optional[float] = 0.5
    r: Optional[float] = 0.5
    horizon: int = 50
    gate_p: float = 3.0
    n_pairs: int = 1000
    override: bool = False

    def tol(self, key):
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "") from exc
        return cls.from_dict(obj)

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object", "")
        known = {f.name for f in fields(cls)}
        for key in sorted(obj):
            if key not in known:
                raise ConfigError(f"unknown key {key!r}", "/" + key)
        if "experiment" not in obj:
            raise ConfigError("missing experiment", "/experiment")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {list(EXPERIMENTS)}",
                              "/experiment")
        ints = ("n", "n_replicas", "n_probe_pairs", "l_replicas", "batch_total", "k_max", "mc_inner",
                "n_outer", "horizon", "n_pairs")
        for name in ints:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer", "/" + name)
        for name in ("depth", "n_batches"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ConfigError(f"{name} must be a positive integer or null", "/" + name)
        for name in ("l_oracle", "sigma_oracle", "kappa_oracle", "alpha", "r", "gate_p"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, (int, float)) or isinstance(v, bool)):
                raise ConfigError(f"{name} must be a number", "/" + name)
        if not isinstance(self.seeds, list) or not self.seeds:
            raise ConfigError("seeds must be a nonempty list", "/seeds")
        for i, s in enumerate(self.seeds):
            if not isinstance(s, int) or isinstance(s, bool) or s < 0:
                raise ConfigError("seeds must be nonnegative integers", f"/seeds/{i}")
        if self.probes not in ("basis", "random"):
            raise ConfigError("probes must be 'basis' or 'random'", "/probes")
        if not isinstance(self.tolerances, dict):
            raise ConfigError("tolerances must be an object", "/tolerances")
        for key, v in self.tolerances.items():
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {key!r}", "/tolerances/" + key)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError("tolerance must be a number", "/tolerances/" + key)
        if self.n_grid is not None:
            if not isinstance(self.n_grid, list) or not self.n_grid:
                raise ConfigError("n_grid must be a nonempty list", "/n_grid")
            for i, v in enumerate(self.n_grid):
                if not isinstance(v, int) or v < 1:
                    raise ConfigError("n_grid entries must be positive integers", f"/n_grid/{i}")
        for i, m in enumerate(self.sigma_methods):
            if m not in SIGMA_METHODS:
                raise ConfigError(f"unknown sigma method {m!r}", f"/sigma_methods/{i}")
        if self.mc_inner % 2:
            raise ConfigError("mc_inner must be even", "/mc_inner")
        if not isinstance(self.out, str):
            raise ConfigError("out must be a string", "/out")
        if self.experiment != "metric-selftest":
            if self.driver is None:
                raise ConfigError("driver is required", "/driver")
            self.build_driver()

    def build_driver(self):
        return driver_from_config(self.driver, "/driver")

    def grid(self):
        if self.n_grid is not None:
            return sorted(set(self.n_grid))
        g = [2**k for k in range(int(math.log2(self.n)) + 1)]
        return sorted(set(g + [self.n]))


def load_config(path):
    with open(path) as fh:
        return ExperimentConfig.from_json(fh.read())


# --- report -------------------------------------------------------------------


@dataclass
class Verdict:
    """One acceptance check: ``invariant`` names what is being tested."""

    name: str
    passed: bool
    observed: str
    tolerance: str
    invariant: str

    def line(self):
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} {self.observed} ({self.tolerance})"


@dataclass
class ExperimentReport:
    config: dict
    estimates: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["config"], d.get("estimates", {}), d.get("manifest", {}),
                   [Verdict(**v) for v in d.get("verdicts", [])], d.get("wall_clock", 0.0))


def report_render(report):
    """Header plus one line per verdict, in the order the checks were made."""
    head = f"ergoproc report: {report.config.get('experiment', '?')}"
    return "\n".join([head] + [v.line() for v in report.verdicts]) + "\n"


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _clean(x):
    """JSON-safe copy of estimates: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# --- parallel helpers ---------------------------------------------------------


def _call(fn, args):
    return fn(*args)


def sharded_rows(fn, driver, seeds, jobs, *args):
    """Run ``fn(driver, seeds_chunk, *args)`` over contiguous seed chunks.

    ``fn`` returns a tuple of per-row arrays; chunks are concatenated in seed
    order, so the result does not depend on ``jobs``.
    """
    seeds = list(seeds)
    if jobs <= 1 or len(seeds) < 2:
        return fn(driver, seeds, *args)
    chunks = [list(c) for c in np.array_split(np.array(seeds, dtype=object), min(jobs, len(seeds)))]
    with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
        parts = list(ex.map(_call, [fn] * len(chunks), [(driver, c) + args for c in chunks]))
    return tuple(np.concatenate(p) for p in zip(*parts))


def per_seed(fn, items, jobs):
    """``[fn(x) for x in items]``, optionally in a process pool; order preserved."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def _lyapunov(cfg, driver, jobs, n=None, n_replicas=None, block=0, depth=None):
    n = cfg.n if n is None else n
    R = cfg.n_replicas if n_replicas is None else n_replicas
    depth = depth or cfg.depth or n
    seeds = replica_seeds(cfg.seeds[0], R, block)
    a, b, keep = sharded_rows(lyapunov_rows, driver, seeds, jobs, n, depth)
    return summarize_lyapunov(a, b, keep, n, driver.dim, depth)


def _lyapunov_verdicts(cfg, est, out):
    out.append(Verdict(
        "lyapunov_agreement", bool(est.agree),
        f"|a-b|={abs(est.time_average - est.l_hat):.3g}", f"<={est.tolerance:.3g}",
        "time-average and path-average Lyapunov estimators agree"))
    if cfg.l_oracle is not None:
        err = abs(est.l_hat - cfg.l_oracle)
        tol = cfg.tol("lyapunov_abs") + 3 * est.stderr
        out.append(Verdict(
            "lyapunov_oracle", err <= tol, f"l_hat={est.l_hat:.10g} oracle={cfg.l_oracle:.10g}",
            f"|diff|<={tol:.3g}", "Lyapunov exponent matches its closed form"))


# --- experiments --------------------------------------------------------------


class _SimulateSeed:
    def __init__(self, cfg, driver):
        self.cfg, self.driver = cfg, driver

    def __call__(self, seed):
        cfg, driver = self.cfg, self.driver
        D = driver.dim
        n = cfg.n
        grid = [g for g in cfg.grid() if g <= n]
        depth = cfg.depth or choose_depth(driver)
        path = sample_path(driver, seed, -cfg.horizon, n + depth)
        fwd = forward_cocycle(path, np.eye(D, dtype=complex) / D, n)
        z1 = estimate_Z(path, 1, depth=depth, residual=False).Z
        perron = {e.n: e for e in perron_sequence(path, grid)}
        rec = stopping_times(path, cfg.horizon, r=cfg.r, two_sided=True, bound="submultiplicative")
        marks = {}
        for name, val in (("tau", rec.tau), ("tau_prime", rec.tau_prime), ("tau_r", rec.tau_r)):
            if val is not None:
                marks.setdefault(val, []).append(name)
        rows = []
        for k in range(1, n + 1):
            e = perron.get(k)
            rows.append((k, fwd[k - 1].log_norm, e.log_lambda if e else None,
                         dist(e.L, z1).d if e else None, "|".join(marks.get(k, []))))
        gap = max(e.identity_gap for e in perron.values())
        return rows, gap, (rec.tau, rec.tau_prime, rec.tau_r)


def run_simulate(cfg, driver, out_dir, jobs):
    files, verdicts, est = [], [], {}
    results = per_seed(_SimulateSeed(cfg, driver), list(cfg.seeds), jobs)
    for seed, (rows, _, _) in zip(cfg.seeds, results):
        name = f"simulate-{seed}.csv"
        write_csv(os.path.join(out_dir, name), ["n", "log_norm", "ln_Lambda_n", "d_Ln_Z", "tau_markers"], rows)
        files.append(name)
    gaps = [r[1] for r in results]
    taus = np.array([[np.nan if t is None else t for t in r[2]] for r in results], dtype=float)
    reached = float(np.mean(np.isfinite(taus[:, 0])))
    est["tau"] = {"mean": float(np.nanmean(taus[:, 0])) if reached else None,
                  "max": float(np.nanmax(taus[:, 0])) if reached else None,
                  "reached_fraction": reached,
                  "tau_r": [None if not np.isfinite(t) else int(t) for t in taus[:, 2]]}
    if reached < cfg.tol("tau_fraction"):
        raise ExperimentError(f"tau not reached within horizon {cfg.horizon} on {1 - reached:.0%} of paths")
    lyap = _lyapunov(cfg, driver, jobs)
    est["lyapunov"] = _lyap_dict(lyap)
    _lyapunov_verdicts(cfg, lyap, verdicts)
    verdicts.append(Verdict("perron_identity", max(gaps) <= cfg.tol("perron_gap"), f"gap={max(gaps):.3g}",
                            f"<={cfg.tol('perron_gap'):g}", "Lambda_n = <L_n, Phi^(n)(I)>"))
    return files, verdicts, est


def _lyap_dict(e):
    return {"l_hat": e.l_hat, "stderr": e.stderr, "time_average": e.time_average,
            "time_average_stderr": e.time_average_stderr, "n": e.n, "n_replicas": e.n_replicas,
            "depth": e.depth, "dropped": e.dropped}


class _LlnSeed:
    def __init__(self, cfg, driver, l_hat):
        self.cfg, self.driver, self.l_hat = cfg, driver, l_hat

    def __call__(self, seed):
        return lln_curves(self.driver, seed, self.cfg.grid(), self.cfg.n_probe_pairs, l_hat=self.l_hat,
                          depth=self.cfg.depth)


def run_lln(cfg, driver, out_dir, jobs):
    verdicts, est = [], {}
    lyap = _lyapunov(cfg, driver, jobs, n=max(cfg.grid()), n_replicas=cfg.l_replicas, block=1)
    est["lyapunov"] = _lyap_dict(lyap)
    curves = per_seed(_LlnSeed(cfg, driver, lyap.l_hat), list(cfg.seeds), jobs)
    rows = []
    for seed, c in zip(cfg.seeds, curves):
        rows += [(seed, n, a, b, s) for n, a, b, s in zip(c.n, c.D_n, c.E_n, c.sup_dev)]
    write_csv(os.path.join(out_dir, "lln.csv"), ["seed", "n", "D_n", "E_n", "sup_dev"], rows)
    grid = np.array(cfg.grid())
    ref = int(grid[np.argmin(np.abs(grid - grid[-1] / 4))])
    j = int(np.flatnonzero(grid == ref)[0])
    wins = [bool(c.sup_dev[-1] < c.sup_dev[j]) for c in curves]
    frac = float(np.mean(wins))
    taus = np.array([c.kendall_tau for c in curves])
    est["lln"] = {"n_ref": ref, "sup_dev_wins": wins, "kendall_tau": taus.tolist(),
                  "excluded": int(sum(c.excluded for c in curves))}
    need = cfg.tol("lln_fraction")
    verdicts.append(Verdict("theorem1_sup_dev", frac >= need, f"fraction={frac:.2f}", f">={need:g}",
                            f"sup deviation at n={int(grid[-1])} below its n={ref} value"))
    mean_tau = float(np.nanmean(taus))
    verdicts.append(Verdict("theorem1_En_trend", mean_tau < 0, f"kendall_tau={mean_tau:.3g}", "<0",
                            "E_n / n decreases in the tail"))
    return ["lln.csv"], verdicts, est


def run_clt(cfg, driver, out_dir, jobs):
    verdicts, est, files = [], {}, []
    gate = clt_gate(driver, p=cfg.gate_p)
    with open(os.path.join(out_dir, "gate.json"), "w") as fh:
        json.dump(_clean({"verdict": gate.verdict, "reason": gate.reason, "p": gate.p,
                          "cauchy_gap": gate.cauchy_gap,
                          "alpha_partial_sums_last": gate.alpha_partial_sums[-1:].tolist()}),
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    files.append("gate.json")
    verdicts.append(Verdict("theorem3_gate", gate.applicable, f"verdict={gate.verdict}", "applicable",
                            "mixing condition for the CLT"))
    if not gate.applicable and not cfg.override:
        return files, verdicts, est
    n = cfg.n
    lyap = _lyapunov(cfg, driver, jobs, n=n, n_replicas=cfg.l_replicas, block=1)
    est["lyapunov"] = _lyap_dict(lyap)
    seeds = replica_seeds(cfg.seeds[0], cfg.n_replicas)
    Q, keep = sharded_rows(clt_rows, driver, seeds, jobs, n, lyap.l_hat, cfg.probes)
    dropped = _check_drops(keep, "clt")
    write_csv(os.path.join(out_dir, "q_samples.csv"), ["seed", "n", "Q"],
              [(s, n, q) for s, q, k in zip(seeds, Q, keep) if k])
    files.append("q_samples.csv")
    Q = Q[keep]
    sig = []
    if "direct" in cfg.sigma_methods:
        sig.append(sigma_direct(Q))
    if "batch_means" in cfg.sigma_methods:
        sig.append(sigma_batch_means(driver, cfg.seeds[0], cfg.batch_total, cfg.n_batches))
    if "martingale_series" in cfg.sigma_methods:
        sig.append(sigma_martingale(driver, cfg.seeds[0], cfg.k_max, cfg.mc_inner, cfg.n_outer))
    write_csv(os.path.join(out_dir, "sigma.csv"), ["method", "value", "stderr", "k_max", "mc_inner", "tail_flag"],
              [(s.method, s.value, s.stderr, s.k_max, s.mc_inner, s.tail_flag) for s in sig])
    files.append("sigma.csv")
    est["sigma2"] = {s.method: {"value": s.value, "stderr": s.stderr, "tail_flag": s.tail_flag} for s in sig}
    est["dropped"] = dropped
    oracle = cfg.sigma_oracle
    sigma_ref = oracle if oracle is not None else (sig[0].value if sig else float(np.var(Q, ddof=1)))
    shift = math.sqrt(n) * lyap.stderr
    ks = ks_normality(Q, math.sqrt(max(sigma_ref, 0.0)), shift_tol=shift, eps=cfg.tol("q_abs"))
    est["ks"] = {"statistic": ks.statistic, "p_value": ks.p_value, "shift": ks.shift, "degenerate": ks.degenerate}
    if ks.degenerate:
        qmax = float(np.max(np.abs(Q)))
        verdicts.append(Verdict("theorem2_degenerate", qmax <= cfg.tol("q_abs"), f"max|Q|={qmax:.3g}",
                                f"<={cfg.tol('q_abs'):g}", "degenerate CLT: Q vanishes"))
    else:
        a = cfg.tol("ks_alpha")
        verdicts.append(Verdict("theorem2_ks", ks.p_value > a, f"p={ks.p_value:.2g}", f">{a:g}",
                                "Q is normal with the reference variance"))
    for s in sig:
        if oracle is None:
            continue
        if oracle == 0:
            ok = s.value <= s.stderr + cfg.tol("sigma_abs")
            tol_txt = f"<=stderr={s.stderr:.3g}"
        else:
            ok = abs(s.value - oracle) <= cfg.tol("sigma_rel") * abs(oracle) + cfg.tol("sigma_abs")
            tol_txt = f"rel<={cfg.tol('sigma_rel'):g}"
        verdicts.append(Verdict(f"sigma_{s.method}", bool(ok), f"value={s.value:.6g} oracle={oracle:.6g}", tol_txt,
                                "sigma^2 estimate matches its closed form"))
    return files, verdicts, est


class _SpectralSeed:
    def __init__(self, cfg, driver):
        self.cfg, self.driver = cfg, driver

    def __call__(self, seed):
        grid = self.cfg.grid()
        path = sample_path(self.driver, seed, 0, max(grid))
        perron = perron_sequence(path, grid)
        k = kappa(self.driver, seed, grid, alpha=self.cfg.alpha)
        return perron, k


def run_spectral(cfg, driver, out_dir, jobs):
    verdicts, est = [], {}
    res = per_seed(_SpectralSeed(cfg, driver), list(cfg.seeds), jobs)
    rows = []
    for seed, (perron, k) in zip(cfg.seeds, res):
        wp = k.window_per_n if k.window_per_n is not None else [None] * len(perron)
        rows += [(seed, e.n, e.log_lambda, e.identity_gap, c, w) for e, c, w in zip(perron, k.c, wp)]
    write_csv(os.path.join(out_dir, "spectral.csv"),
              ["seed", "n", "ln_Lambda_n", "identity_gap", "c_n", "window_log_c_per_n"], rows)
    gap = max(e.identity_gap for perron, _ in res for e in perron)
    khat = [k.kappa_hat for _, k in res]
    wslope = [k.window_slope for _, k in res]
    est["kappa"] = {"kappa_hat": khat, "window_slope": wslope, "exhaustive": [k.exhaustive for _, k in res]}
    verdicts.append(Verdict("perron_identity", gap <= cfg.tol("perron_gap"), f"gap={gap:.3g}",
                            f"<={cfg.tol('perron_gap'):g}", "Lambda_n = <L_n, Phi^(n)(I)>"))
    if cfg.kappa_oracle is not None:
        ko = cfg.kappa_oracle
        err = max(abs(k - ko) / ko for k in khat)
        verdicts.append(Verdict("kappa_oracle", err <= cfg.tol("kappa_rel"),
                                f"kappa_hat={float(np.mean(khat)):.6g} oracle={ko:.6g}",
                                f"rel<={cfg.tol('kappa_rel'):g}", "contraction rate matches its closed form"))
        if cfg.alpha is not None:
            target = cfg.alpha * math.log(ko)
            err_w = max(abs(w - target) / abs(target) for w in wslope)
            verdicts.append(Verdict("kappa_window", err_w <= cfg.tol("window_rel"),
                                    f"slope={float(np.mean(wslope)):.6g} target={target:.6g}",
                                    f"rel<={cfg.tol('window_rel'):g}", "windowed contraction slope alpha ln kappa"))
    return ["spectral.csv"], verdicts, est


def run_metric_selftest(cfg, out_dir):
    verdicts, rows = [], []
    ex, slack = cfg.tol("metric_exact"), cfg.tol("metric_slack")
    A, B = np.diag([0.7, 0.3]).astype(complex), np.eye(2, dtype=complex) / 2
    v = dist(A, B)
    checks = [("d_diag", v.d, 0.4), ("m_ab", v.m_ab, 0.6), ("m_ba", v.m_ba, 5 / 7),
              ("tanh_identity", math.tanh(hilbert_metric(A, B) / 2), 0.4),
              ("c_depolarizing_0.5", contraction_coeff(depolarizing(0.5)).lower, 0.8)]
    for name, got, want in checks:
        rows.append((name, got, want, abs(got - want)))
        verdicts.append(Verdict(f"metric_{name}", abs(got - want) <= ex, f"value={got:.15g} expected={want:.15g}",
                                f"<={ex:g}", "closed-form metric value"))
    rng = np.random.default_rng(cfg.seeds[0])
    S = random_density(rng, 2, size=3 * cfg.n_pairs).reshape(cfg.n_pairs, 3, 2, 2)
    lower = triangle = 0.0
    for X, Y, W in S:
        dxy, dxw, dwy = dist(X, Y).d, dist(X, W).d, dist(W, Y).d
        lower = max(lower, 0.5 * trace_norm(X - Y) - dxy, dxy - 1.0)
        triangle = max(triangle, dxy - dxw - dwy)
    rows += [("axiom_bounds", lower, 0.0, lower), ("axiom_triangle", triangle, 0.0, triangle)]
    verdicts.append(Verdict("metric_bounds", lower <= slack, f"worst={lower:.3g}", f"<={slack:g}",
                            "half trace distance <= d <= 1"))
    verdicts.append(Verdict("metric_triangle", triangle <= slack, f"worst={triangle:.3g}", f"<={slack:g}",
                            "triangle inequality"))
    write_csv(os.path.join(out_dir, "metric.csv"), ["check", "observed", "expected", "error"], rows)
    return ["metric.csv"], verdicts, {}


# --- driver -------------------------------------------------------------------


def run(cfg, out_dir=None, jobs=1):
    """Run ``cfg``, write artifacts and ``report.json`` / ``report.txt``, return the report."""
    t0 = time.perf_counter()
    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    if cfg.experiment == "metric-selftest":
        files, verdicts, est = run_metric_selftest(cfg, out_dir)
    else:
        driver = cfg.build_driver()
        runner = {"simulate": run_simulate, "lln": run_lln, "clt": run_clt, "spectral": run_spectral}
        files, verdicts, est = runner[cfg.experiment](cfg, driver, out_dir, jobs)
    manifest = {name: _sha256(os.path.join(out_dir, name)) for name in sorted(files)}
    report = ExperimentReport(asdict(cfg), _clean(est), manifest, verdicts, time.perf_counter() - t0)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(report_render(report))
    return report


def load_report(out_dir):
    out_dir = os.fspath(out_dir)
    path = out_dir if out_dir.endswith(".json") else os.path.join(out_dir, "report.json")
    with open(path) as fh:
        return ExperimentReport.from_dict(json.load(fh))
