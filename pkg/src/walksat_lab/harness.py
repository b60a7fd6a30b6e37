"""Seeded experiments over random formulas: solving, sweeps, drift, bounds, replay.

Every experiment is a deterministic function of its configuration.  Trial
``t`` draws its formula and walk from ``derive_seed(master, ...)`` so trials
can run in any order or in parallel and still fold into identical output.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib.resources import files
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.stats import binomtest, ks_2samp

from . import RNG_NAME, SWEEP_SCHEMA, TRACE_SCHEMA
from ._rng import derive_seed, make_rng
from .formula import Formula, _literals_from_codes, count_all_negative, generate_uniform, parse_dimacs, unsat_indices
from .pi_process import ProcessParams, Trace, run_instrumented, run_lazy
from .walksat import run

__all__ = [
    "DEFAULT_RHO",
    "ExperimentConfig",
    "ScriptError",
    "SweepRow",
    "TraceMismatch",
    "bounds",
    "clause_count",
    "compare_traces",
    "density",
    "drift",
    "first_flip_breaks",
    "initial_unsat_stats",
    "lazy_equivalence",
    "load_choice_script",
    "replay",
    "solve",
    "sweep",
    "sweep_csv",
    "trace_schema",
    "validate_trace",
    "wilson_interval",
]

DEFAULT_RHO = Fraction(1, 25)
MODES = ("solve", "instrument", "sweep", "drift", "replay", "bounds", "lazy-equivalence")


def density(k: int, r: Fraction | None = None, rho: Fraction | None = None) -> Fraction:
    """Clause density ``r``; given ``rho`` it is ``rho * 2^k / k``."""
    if r is not None and rho is not None:
        raise ValueError("give either r or rho, not both")
    if r is None:
        rho = DEFAULT_RHO if rho is None else Fraction(rho)
        r = rho * Fraction(2 ** k, k)
    r = Fraction(r)
    if r <= 0:
        raise ValueError("density must be > 0")
    return r


def rho_of(k: int, r: Fraction) -> Fraction:
    return Fraction(r) * k / 2 ** k


def clause_count(n: int, r: Fraction) -> int:
    return math.ceil(Fraction(r) * n)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "solve"
    k: int = 5
    n: int = 1000
    densities: tuple[Fraction, ...] = ()
    trials: int = 1
    t_max: int | None = None
    cap: int | None = None
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    formula_path: str | None = None
    script_path: str | None = None
    expected_path: str | None = None
    occurrence_bias: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be >= 1")
        if self.t_max is not None and self.t_max < 0:
            raise ValueError("t_max must be >= 0")
        if any(d <= 0 for d in self.densities):
            raise ValueError("density must be > 0")

    @property
    def r(self) -> Fraction:
        return self.densities[0] if self.densities else density(self.k)

    @property
    def m(self) -> int:
        return clause_count(self.n, self.r)

    def params(self, k: int | None = None, n: int | None = None) -> ProcessParams:
        return ProcessParams.for_instance(k or self.k, n or self.n, **self.overrides)

    def header(self) -> dict:
        return {"rng": RNG_NAME, "k": self.k, "n": self.n, "seed": self.seed, "trials": self.trials}


def _threads() -> int:
    raw = os.environ.get("WALKSAT_LAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def parallel_map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Ordered map over a process pool capped by ``WALKSAT_LAB_THREADS``."""
    threads = threads or _threads()
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def _r_fields(k: int, r: Fraction) -> dict:
    return {"r": float(r), "rho": float(rho_of(k, r))}


# solve ---------------------------------------------------------------------


def _solve_trial(args) -> dict:
    cfg, f, trial = args
    wseed = derive_seed(cfg.seed, 1, trial)
    if f is None:
        fseed = derive_seed(cfg.seed, 0, trial)
        f = generate_uniform(cfg.n, cfg.m, cfg.k, fseed)
    t_max = cfg.n if cfg.t_max is None else cfg.t_max
    res = run(f, t_max, wseed)
    out = {"trial": trial, "seed": wseed, "outcome": res.outcome, "flips": res.flips_used}
    if res.satisfied:
        if unsat_indices(f, res.assignment):
            raise AssertionError(f"trial {trial}: returned assignment does not satisfy the formula")
        if cfg.trials == 1:
            out["assignment"] = "".join("1" if b else "0" for b in res.assignment.values[1:].tolist())
    return out


def load_formula(path: str) -> Formula:
    with open(path, "rb") as fh:
        return parse_dimacs(fh.read())


def solve(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Run Walksat on generated (or loaded) formulas; exit status 0 iff every trial succeeds."""
    f = load_formula(cfg.formula_path) if cfg.formula_path else None
    if f is not None:
        info = {"n": f.n, "m": f.m, "k": f.k, "formula": os.path.basename(cfg.formula_path)}
    else:
        info = {"n": cfg.n, "m": cfg.m, "k": cfg.k, **_r_fields(cfg.k, cfg.r)}
    rows = parallel_map(_solve_trial, [(cfg, f, t) for t in range(cfg.trials)])
    wins = sum(r["outcome"] == "satisfied" for r in rows)
    t_max = (f.n if f is not None else cfg.n) if cfg.t_max is None else cfg.t_max
    out = {"mode": "solve", "rng": RNG_NAME, **info, "seed": cfg.seed, "t_max": t_max,
           "trials": cfg.trials, "successes": wins, "results": rows}
    return (0 if wins == cfg.trials else 1), out


# instrumented trials ---------------------------------------------------------


@dataclass(frozen=True)
class _RunSummary:
    T: int | None
    steps: int
    d0: int
    d_peak: int
    z_peak: int
    increments: tuple[tuple[bool, bool, int, int, int], ...]  # (in_z_prev, fresh, dS', dH', sum)
    rich_failures: int
    rich_checked: int
    rich_violations: tuple[str, ...]


def _instrument_trial(args) -> _RunSummary:
    k, n, m, params, master, trial, cap, within = args
    s = derive_seed(master, 0, trial)
    f = generate_uniform(n, m, k, s)
    tr = run_instrumented(f, params, derive_seed(master, 1, trial), cap=cap, check_rich=True)
    return _summarize(tr, within)


def _summarize(tr: Trace, within: int) -> _RunSummary:
    d_peak, z_peak = tr.d0, 0
    inc = []
    sp = hp = 0
    for rec in tr.records:
        if rec.t > within:
            break
        d_peak = max(d_peak, rec.d_size)
        z_peak = max(z_peak, rec.z_size)
        ds, dh = rec.s_prime - sp, rec.h_prime - hp
        inc.append((rec.in_z_prev, rec.fresh, ds, dh, ds + dh))
        sp, hp = rec.s_prime, rec.h_prime
    return _RunSummary(tr.T, len(tr.records), tr.d0, d_peak, z_peak, tuple(inc),
                       len(tr.final.rich_failures), tr.final.rich_checked, tr.final.rich_violations)


def _instrumented(cfg: ExperimentConfig, k: int, r: Fraction, cap: int, within: int | None = None,
                  key: int = 0) -> list[_RunSummary]:
    n = cfg.n
    params = cfg.params(k, n)
    within = cap if within is None else within
    master = derive_seed(cfg.seed, key)
    jobs = [(k, n, clause_count(n, r), params, master, t, cap, within) for t in range(cfg.trials)]
    return parallel_map(_instrument_trial, jobs)


# sweep ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    k: int
    n: int
    m: int
    r: float
    rho: float
    trials: int
    successes: int
    success_rate: float
    mean_flips: float
    mean_d_peak: float
    mean_z_peak: float
    wilson_low: float
    wilson_high: float


SWEEP_FIELDS = [f for f in SweepRow.__dataclass_fields__]


def sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """Success rate of Walksat with budget ``t_max`` (default ``n``) at each density."""
    if not cfg.densities:
        raise ValueError("sweep needs at least one density")
    t_max = cfg.n if cfg.t_max is None else cfg.t_max
    rows = []
    for idx, r in enumerate(cfg.densities):
        runs = _instrumented(cfg, cfg.k, r, t_max, key=idx)
        wins = sum(s.T is not None for s in runs)
        lo, hi = wilson_interval(wins, cfg.trials)
        rows.append(SweepRow(
            cfg.k, cfg.n, clause_count(cfg.n, r), float(r), float(rho_of(cfg.k, r)), cfg.trials, wins,
            wins / cfg.trials, float(np.mean([s.steps for s in runs])),
            float(np.mean([s.d_peak for s in runs])), float(np.mean([s.z_peak for s in runs])), lo, hi,
        ))
    return rows


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {SWEEP_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    for row in rows:
        w.writerow([_fmt(getattr(row, name)) for name in SWEEP_FIELDS])
    return buf.getvalue()


def _fmt(v: Any) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


# drift -------------------------------------------------------------------------


def drift(cfg: ExperimentConfig) -> dict:
    """One-step increments of ``S' + H'`` over ``t <= min(T, T*)``, split by case."""
    params = cfg.params()
    cap = cfg.cap or params.t_star
    runs = _instrumented(cfg, cfg.k, cfg.r, cap, within=params.t_star)
    inc = [x for s in runs for x in s.increments]
    out = {"mode": "drift", **cfg.header(), "m": cfg.m, **_r_fields(cfg.k, cfg.r),
           "t_star": params.t_star, "steps": len(inc)}
    if not inc:
        out.update(empty=True, reason="no steps recorded: every run stopped at t=0")
        return out
    case1 = [x for x in inc if not x[0]]
    case2 = [x for x in inc if x[0]]
    out.update(
        empty=False,
        mean_increment=float(np.mean([x[4] for x in inc])),
        case1={
            "steps": len(case1),
            "mean_increment": float(np.mean([x[4] for x in case1])) if case1 else None,
            "fresh_fraction": float(np.mean([x[1] for x in case1])) if case1 else None,
        },
        case2={
            "steps": len(case2),
            "mean_increment": float(np.mean([x[4] for x in case2])) if case2 else None,
            "h_decrement_fraction": float(np.mean([x[3] < 0 for x in case2])) if case2 else None,
        },
    )
    return out


# bounds -------------------------------------------------------------------------


def bounds(cfg: ExperimentConfig) -> dict:
    """Per-run peaks of ``|D_t|`` and ``|Z_t|`` over ``t <= T*`` against ``2^(2-k) m`` and ``eps n``."""
    params = cfg.params()
    runs = _instrumented(cfg, cfg.k, cfg.r, params.t_star)
    m = cfg.m
    d_limit = 2.0 ** (2 - cfg.k) * m
    z_limit = params.epsilon * cfg.n
    per_run = []
    for t, s in enumerate(runs):
        per_run.append({
            "trial": t, "T": s.T, "d0": s.d0, "d_peak": s.d_peak, "z_peak": s.z_peak,
            "d_violation": s.d_peak > d_limit, "z_violation": s.z_peak > z_limit,
            "rich_failures": s.rich_failures, "rich_checked": s.rich_checked,
            "rich_violations": list(s.rich_violations),
        })
    n_runs = len(per_run)
    either = sum(r["d_violation"] or r["z_violation"] for r in per_run)
    return {
        "mode": "bounds", **cfg.header(), "m": m, **_r_fields(cfg.k, cfg.r), "t_star": params.t_star,
        "d_limit": d_limit, "z_limit": z_limit,
        "d0_mean": float(np.mean([s.d0 for s in runs])), "d0_expected": m / 2 ** cfg.k,
        "d_violation_rate": sum(r["d_violation"] for r in per_run) / n_runs,
        "z_violation_rate": sum(r["z_violation"] for r in per_run) / n_runs,
        "violation_rate": either / n_runs,
        "z_nonempty_rate": sum(r["z_peak"] > 0 for r in per_run) / n_runs,
        "rich_checked": sum(r["rich_checked"] for r in per_run),
        "rich_violations": sum(len(r["rich_violations"]) for r in per_run),
        "runs": per_run,
    }


# lazy equivalence -----------------------------------------------------------------


def _lazy_pair(args) -> tuple[int, int, int, int]:
    k, n, m, params, master, trial, cap, bias = args
    s = derive_seed(master, 0, trial)
    eager = run_instrumented(generate_uniform(n, m, k, s), params, derive_seed(master, 1, trial), cap=cap)
    lazy = run_lazy(n, m, k, params, derive_seed(master, 2, trial), cap=cap, occurrence_bias=bias)

    def stats(tr: Trace) -> tuple[int, int]:
        t_end = tr.T if tr.T is not None else cap + 1  # censored runs sort last
        d_end = tr.records[-1].d_size if tr.records else tr.d0
        return t_end, d_end

    return (*stats(eager), *stats(lazy))


def lazy_equivalence(cfg: ExperimentConfig) -> dict:
    """Two-sample KS comparison of eager and on-demand formula generation.

    Runs go up to ``t_max`` (default ``n``) so that ``T`` is rarely censored.
    """
    params = cfg.params()
    cap = cfg.cap or (cfg.n if cfg.t_max is None else cfg.t_max)
    m = cfg.m
    master = derive_seed(cfg.seed, 7)
    jobs = [(cfg.k, cfg.n, m, params, master, t, cap, cfg.occurrence_bias) for t in range(cfg.trials)]
    res = np.array(parallel_map(_lazy_pair, jobs), dtype=np.int64).reshape(-1, 4)
    ks_t = ks_2samp(res[:, 0], res[:, 2])
    ks_d = ks_2samp(res[:, 1], res[:, 3])
    return {
        "mode": "lazy-equivalence", **cfg.header(), "m": m, **_r_fields(cfg.k, cfg.r), "cap": cap,
        "occurrence_bias": cfg.occurrence_bias,
        "T": {"ks_statistic": float(ks_t.statistic), "p_value": float(ks_t.pvalue),
              "eager_mean": float(res[:, 0].mean()), "lazy_mean": float(res[:, 2].mean())},
        "terminal_d": {"ks_statistic": float(ks_d.statistic), "p_value": float(ks_d.pvalue),
                       "eager_mean": float(res[:, 1].mean()), "lazy_mean": float(res[:, 3].mean())},
    }


# replay ----------------------------------------------------------------------------


class ScriptError(ValueError):
    pass


def load_choice_script(data: str | bytes) -> list[tuple[int, int]]:
    """Parse a JSON choice script ``[{"t": 1, "i": .., "j": ..}, ...]`` (1-based) to 0-based pairs."""
    try:
        items = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ScriptError(f"choice script is not valid JSON: {exc}") from None
    if not isinstance(items, list):
        raise ScriptError("choice script must be a JSON array")
    out = []
    for pos, item in enumerate(items, 1):
        if not isinstance(item, dict) or not {"t", "i", "j"} <= item.keys():
            raise ScriptError(f"entry {pos}: expected an object with keys t, i, j")
        t, i, j = item["t"], item["i"], item["j"]
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (t, i, j)):
            raise ScriptError(f"entry {pos}: t, i, j must be integers")
        if t != pos:
            raise ScriptError(f"entry {pos}: expected t={pos}, got t={t}")
        if i < 1 or j < 1:
            raise ScriptError(f"step {t}: i and j are 1-based")
        out.append((i - 1, j - 1))
    return out


@dataclass(frozen=True)
class TraceMismatch:
    path: str
    expected: Any
    actual: Any

    def __str__(self) -> str:
        return f"{self.path}: expected {self.expected!r}, got {self.actual!r}"


def compare_traces(actual: Any, expected: Any, path: str = "") -> TraceMismatch | None:
    """First field where ``actual`` departs from ``expected``.

    Only keys present in ``expected`` are compared, so expected traces may be
    partial; lists must match in length.
    """
    if isinstance(expected, dict):
        if not isinstance(actual, dict):
            return TraceMismatch(path or "$", expected, actual)
        for key, val in expected.items():
            sub = f"{path}.{key}" if path else key
            if key not in actual:
                return TraceMismatch(sub, val, None)
            bad = compare_traces(actual[key], val, sub)
            if bad:
                return bad
        return None
    if isinstance(expected, list):
        if not isinstance(actual, list):
            return TraceMismatch(path, expected, actual)
        for idx, (a, e) in enumerate(zip(actual, expected)):
            bad = compare_traces(a, e, f"{path}[{idx}]")
            if bad:
                return bad
        if len(actual) != len(expected):
            return TraceMismatch(f"{path}.length", len(expected), len(actual))
        return None
    if actual != expected or type(actual) is bool and type(expected) is not bool:
        return TraceMismatch(path, expected, actual)
    return None


def trace_schema() -> dict:
    return json.loads(files("walksat_lab").joinpath("data/trace.schema.json").read_text())


def validate_trace(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, trace_schema())


def replay(f: Formula, script: Sequence[tuple[int, int]], params: ProcessParams, seed: int = 0,
           expected: dict | None = None) -> tuple[dict, TraceMismatch | None]:
    """Run the process on ``f`` with the scripted choices; returns the trace JSON and any mismatch."""
    tr = run_instrumented(f, params, seed, cap=len(script), choices=script, record_sets=True)
    doc = tr.to_json()
    validate_trace(doc)
    return doc, compare_traces(doc, expected) if expected is not None else None


def instrument(cfg: ExperimentConfig) -> dict:
    """Trace of one instrumented run on a generated (or loaded) formula."""
    if cfg.formula_path:
        f = load_formula(cfg.formula_path)
    else:
        f = generate_uniform(cfg.n, cfg.m, cfg.k, derive_seed(cfg.seed, 0, 0))
    params = ProcessParams.for_instance(f.k, f.n, **cfg.overrides)
    tr = run_instrumented(f, params, derive_seed(cfg.seed, 1, 0), cap=cfg.cap)
    doc = tr.to_json()
    validate_trace(doc)
    return doc


# desk-scale statistics ---------------------------------------------------------------


def initial_unsat_stats(k: int, n: int, m: int, formulas: int, seed: int) -> dict:
    """Mean and variance of the all-negative clause count over fresh formulas."""
    counts = np.array([count_all_negative(generate_uniform(n, m, k, derive_seed(seed, t)))
                       for t in range(formulas)], dtype=np.float64)
    p = 2.0 ** -k
    return {
        "formulas": formulas, "mean": float(counts.mean()), "variance": float(counts.var(ddof=1)),
        "expected_mean": m * p, "expected_variance": m * p * (1 - p),
        "standard_error": float(counts.std(ddof=1) / math.sqrt(formulas)),
    }


def _first_flip_batch(lits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Clauses newly broken by Walksat's first flip, for a batch of ``(B, m, k)`` formulas.

    Starting from all-true, flipping ``x`` breaks exactly the clauses whose
    positive literals are all ``x`` (at least one) and that contain no ``-x``.
    Formulas with no unsatisfied clause contribute -1.
    """
    b, m, k = lits.shape
    unsat = (lits < 0).all(axis=2)
    n_unsat = unsat.sum(axis=1)
    out = np.full(b, -1, dtype=np.int64)
    for idx in np.flatnonzero(n_unsat):
        cands = np.flatnonzero(unsat[idx])
        i = cands[int(rng.integers(len(cands)))]
        j = int(rng.integers(k))
        x = -int(lits[idx, i, j])
        row = lits[idx]
        pos = row > 0
        has_pos = pos.any(axis=1)
        only_x = np.where(pos, row == x, True).all(axis=1)
        no_neg_x = ~(row == -x).any(axis=1)
        out[idx] = int((has_pos & only_x & no_neg_x).sum())
    return out


def first_flip_breaks(k: int, n: int, m: int, formulas: int, seed: int, batch: int = 500) -> dict:
    """Mean number of clauses broken by the first flip over fresh uniform formulas."""
    rng = make_rng(seed)
    vals = []
    done = 0
    while done < formulas:
        b = min(batch, formulas - done)
        lits = _literals_from_codes(rng.integers(0, 2 * n, size=(b, m, k)))
        got = _first_flip_batch(lits, rng)
        vals.append(got[got >= 0])
        done += b
    v = np.concatenate(vals).astype(np.float64)
    return {
        "formulas": formulas, "used": int(v.size), "mean": float(v.mean()),
        "standard_error": float(v.std(ddof=1) / math.sqrt(v.size)),
        "expected": k * m / (2 ** k * n),
    }
