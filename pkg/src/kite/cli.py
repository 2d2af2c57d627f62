"""Command-line front end.

Every subcommand resolves its options from built-in defaults, an optional
JSON ``--config`` file and command-line flags (flags win), runs, and writes
one result record as JSON or as a long-format CSV table.  The record echoes
every resolved input; ``wall_time`` is only filled in with ``--timing`` so
that repeated runs with the same seed are byte-identical.

Exit codes: 0 when every property check of the run holds, 1 when one fails
(each failure is named on stderr), 2 for configuration or input errors.
"""
from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, checks, estimation, multivariate, varinf
from .errors import KiteError
from .kernels import FiniteGram, FourierFeatureMap, TorusExp
from .quadrature import IntegrationPlan

__all__ = ["main", "COLUMNS", "SCHEMA_PATH", "ConfigError", "run_command", "encode_json", "encode_csv"]

SCHEMA_PATH = Path(__file__).with_name("schema") / "result.schema.json"
LOGPARTITION_TRUTH_RESOLUTION = 8192

# CSV column order per subcommand (the "rows" of the JSON record, in the same order).
COLUMNS: dict[str, list[str]] = {
    "entropy-sample": ["sigma", "n", "replications", "mean", "std", "stderr", "limit", "excess"],
    "entropy-projection": ["sigma", "n", "replications", "mean", "std", "stderr", "limit", "excess",
                           "max_excess", "all_below_limit"],
    "logpartition": ["sigma", "r", "family", "bound", "iterations", "constraint_residual", "truth", "excess"],
    "hypercube": ["d", "draws", "entropy_mean", "excess_quantum_uniform", "excess_quantum_optimized",
                  "excess_logdet"],
    "mi": ["kernel_mi", "shannon_mi", "gap"],
    "sandwich": ["sigma", "r", "d_smoothed", "d_kernel", "d_shannon", "gap", "holds"],
    "check": ["name", "trials", "violations", "worst", "passed"],
}


class ConfigError(KiteError, ValueError):
    """Invalid configuration file or option value."""


# --------------------------------------------------------------------------
# configuration


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


class _Options:
    """Resolves option values (flag > config > default) and records them."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.config = config
        self.inputs: dict[str, Any] = {}

    def get(self, name: str, default=None, convert: Callable | None = None):
        flag = getattr(self.args, name.replace("-", "_"), None)
        if flag is not None:
            value = flag
        elif name in self.config:
            value = self.config[name]
        else:
            value = default
        if convert is not None and value is not None:
            try:
                value = convert(value)
            except (TypeError, ValueError, KiteError) as exc:
                raise ConfigError(f"field {name!r}: {exc}") from None
        self.inputs[name] = _jsonable(value)
        return value


def _float_list(value) -> list:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, str):
        return [float(v) for v in value.split(",") if v.strip()]
    out = [float(v) for v in value]
    if not out:
        raise ValueError("expected at least one value")
    return out


def _int_list(value) -> list:
    vals = _float_list(value)
    if any(v != int(v) for v in vals):
        raise ValueError("expected integers")
    return [int(v) for v in vals]


def _positive_int(value) -> int:
    v = int(value)
    if v != value and not isinstance(value, str):
        raise ValueError(f"expected an integer, got {value!r}")
    if v < 1:
        raise ValueError("must be at least 1")
    return v


def _seed(opts: _Options) -> int:
    seed = opts.get("seed", None, int)
    if seed is None:
        raise ConfigError("field 'seed': a seed is required for stochastic runs (--seed or config)")
    return seed


def _kernel_sigmas(opts: _Options, default: list) -> list:
    """``sigma`` from flags/config, falling back to a ``kernel`` block."""
    kernel = opts.config.get("kernel")
    if kernel is not None:
        if not isinstance(kernel, dict):
            raise ConfigError("field 'kernel': expected an object")
        if kernel.get("type", "torus_exp") != "torus_exp":
            raise ConfigError(f"field 'kernel.type': unsupported kernel {kernel.get('type')!r}")
        if int(kernel.get("dims", 1)) != 1:
            raise ConfigError("field 'kernel.dims': the command-line experiments are one-dimensional")
        opts.inputs["kernel"] = _jsonable(kernel)
        if "sigma" in kernel:
            default = kernel["sigma"]
    sigmas = opts.get("sigma", default, _float_list)
    if any(not s > 0 for s in sigmas):
        raise ConfigError("field 'sigma': kernel widths must be positive")
    return sigmas


def _read_tabulated(path: str) -> estimation.Tabulated:
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read density table ({exc.strerror})") from None
    grid, vals = [], []
    for lineno, row in enumerate(rows, 1):
        try:
            x, v = float(row[0]), float(row[1])
        except (ValueError, IndexError):
            if lineno == 1:
                continue  # header
            raise ConfigError(f"{path}:{lineno}: expected two numeric columns 'x,value'") from None
        grid.append(x)
        vals.append(v)
    try:
        return estimation.Tabulated(grid, vals)
    except KiteError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _density(spec, field: str) -> estimation.DensityOracle:
    """``"triangle"``, ``"uniform"``, a CSV path, or a ``tabulated``/``mixture`` object."""
    try:
        if isinstance(spec, str):
            if spec in estimation.NamedDensity.NAMES:
                return estimation.NamedDensity(spec)
            if spec.endswith(".csv") or os.path.exists(spec):
                return _read_tabulated(spec)
            raise ConfigError(f"field {field!r}: unknown density {spec!r}")
        if isinstance(spec, dict):
            kind = spec.get("type")
            if kind == "tabulated":
                if "path" in spec:
                    return _read_tabulated(spec["path"])
                return estimation.Tabulated(spec["grid"], spec["values"])
            if kind == "mixture":
                parts = [_density(c, f"{field}.components") for c in spec["components"]]
                return estimation.Mixture(parts, spec["weights"])
            if kind in estimation.NamedDensity.NAMES:
                return estimation.NamedDensity(kind)
            raise ConfigError(f"field '{field}.type': unknown density type {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"field {field!r}: missing key {exc.args[0]!r}") from None
    except KiteError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"field {field!r}: {exc}") from None
    raise ConfigError(f"field {field!r}: expected a name, a CSV path or an object")


def _threads() -> int:
    raw = os.environ.get("KITE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"KITE_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _parallel_map(fn: Callable, items: list) -> list:
    """Ordered map over ``items`` using at most ``KITE_THREADS`` threads."""
    workers = min(_threads(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check(name: str, passed: bool, detail: str = "") -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


# --------------------------------------------------------------------------
# subcommands


def _limit(density, sigma: float) -> float:
    fmap = FourierFeatureMap(sigma)
    plan = IntegrationPlan(resolution=max(4096, 8 * fmap.r))
    return estimation.quadrature_negentropy(density, fmap, plan)


def _summary(values: np.ndarray, limit: float) -> dict:
    reps = values.shape[0]
    std = float(values.std(ddof=1)) if reps > 1 else 0.0
    mean = float(values.mean())
    return {"replications": reps, "mean": mean, "std": std, "stderr": std / math.sqrt(reps),
            "limit": limit, "excess": mean - limit}


def _entropy_common(opts: _Options):
    seed = _seed(opts)
    sigmas = _kernel_sigmas(opts, [0.1])
    ns = opts.get("n", [32, 64, 128, 256, 512, 1024], _int_list)
    if any(n < 1 for n in ns):
        raise ConfigError("field 'n': sample sizes must be positive")
    reps = opts.get("replications", 20, _positive_int)
    density = _density(opts.get("density", "triangle"), "density")
    return seed, sigmas, ns, reps, density


def cmd_entropy_sample(opts: _Options) -> dict:
    seed, sigmas, ns, reps, density = _entropy_common(opts)
    rows, per_rep, chk = [], {}, []
    for sigma in sigmas:
        spec = TorusExp(sigma)
        limit = _limit(density, sigma)
        for n in ns:
            def one(rep, n=n, spec=spec):
                pts = density.sample(estimation.replication_rng(seed, rep), n)
                return estimation.empirical_entropy_gram(estimation.SampleSet(pts), spec)

            vals = np.array(_parallel_map(one, list(range(reps))))
            row = {"sigma": sigma, "n": n, **_summary(vals, limit)}
            rows.append(row)
            per_rep[f"sigma={sigma:g},n={n}"] = vals.tolist()
            # Jensen: the expected estimate lies above the limit
            chk.append((row["excess"] + 3.0 * row["stderr"] + 1e-6 >= 0.0, f"sigma={sigma:g} n={n}"))
    checks_out = [_check("sample_mean_above_limit", all(ok for ok, _ in chk),
                         "; ".join(d for ok, d in chk if not ok))]
    results = {"final_excess": {f"{r['sigma']:g}": r["excess"] for r in rows if r["n"] == max(ns)}}
    return {"rows": rows, "replications": per_rep, "results": results, "checks": checks_out}


def cmd_entropy_projection(opts: _Options) -> dict:
    seed, sigmas, ns, reps, density = _entropy_common(opts)
    base = estimation.Uniform()
    rows, per_rep, bad = [], {}, []
    for sigma in sigmas:
        spec = TorusExp(sigma)
        limit = _limit(density, sigma)
        for n in ns:
            def one(rep, n=n, spec=spec):
                marks = base.sample(estimation.replication_rng(seed, rep), n)
                return estimation.projection_estimator(density, base, estimation.SampleSet(marks), spec).entropy_p

            vals = np.array(_parallel_map(one, list(range(reps))))
            below = vals <= limit + 1e-6
            row = {"sigma": sigma, "n": n, **_summary(vals, limit),
                   "max_excess": float(vals.max() - limit), "all_below_limit": bool(below.all())}
            rows.append(row)
            key = f"sigma={sigma:g},n={n}"
            per_rep[key] = vals.tolist()
            per_rep[key + ",below_limit"] = below.tolist()
            if not below.all():
                bad.append(key)
    checks_out = [_check("projection_below_limit", not bad, "; ".join(bad))]
    results = {"final_excess": {f"{r['sigma']:g}": r["excess"] for r in rows if r["n"] == max(ns)}}
    return {"rows": rows, "replications": per_rep, "results": results, "checks": checks_out}


def _fhat_dict(value) -> dict:
    """``[[delta, re, im], ...]`` (or ``{delta: re}``) to ``{delta: complex}``."""
    if isinstance(value, dict):
        return {int(k): complex(v) for k, v in value.items()}
    out = {}
    for item in value:
        if len(item) not in (2, 3):
            raise ValueError("each fhat entry is [delta, re] or [delta, re, im]")
        out[int(item[0])] = complex(float(item[1]), float(item[2]) if len(item) == 3 else 0.0)
    return out


def _solver_options(opts: _Options) -> dict:
    raw = opts.get("solver", {}, dict)
    allowed = {"max_iter": int, "tol": float, "extrapolation": bool}
    out = {}
    for key, val in raw.items():
        if key not in allowed:
            raise ConfigError(f"field 'solver.{key}': unknown solver option")
        out[key] = allowed[key](val)
    if getattr(opts.args, "extrapolation", False):
        out["extrapolation"] = True
        opts.inputs["solver"] = dict(out)
    return out


def _problem_file(path: str) -> dict:
    data = _load_config(path)
    if data.get("domain", "torus") != "torus":
        raise ConfigError(f"{path}: field 'domain': only 'torus' problems are supported")
    for key in ("r", "fhat"):
        if key not in data:
            raise ConfigError(f"{path}: field {key!r} is required")
    return data


def _row_from_report(sigma, r, family, rep, truth) -> dict:
    return {"sigma": sigma, "r": r, "family": family, "bound": rep.bound, "iterations": rep.iterations,
            "constraint_residual": rep.constraint_residual, "truth": truth, "excess": rep.bound - truth}


def cmd_logpartition(opts: _Options) -> dict:
    problem_path = opts.get("problem", None)
    solver_opts = _solver_options(opts)
    learned = bool(opts.get("kernel_learning", False))
    outer = opts.get("outer_iters", 20, _positive_int)
    rows, chk = [], []

    if problem_path is not None:
        data = _problem_file(problem_path)
        try:
            r = int(data["r"])
            prob = varinf.LogPartitionProblem.from_coefficients(
                r, _fhat_dict(data["fhat"]), data.get("eta", "khat"), data.get("sigma"))
        except (KiteError, ValueError, TypeError) as exc:
            raise ConfigError(f"{problem_path}: {exc}") from None
        solver_opts = {**{k: v for k, v in data.get("solver", {}).items()}, **solver_opts}
        truth = varinf.log_partition_quadrature(prob, LOGPARTITION_TRUTH_RESOLUTION)
        rep = varinf.solve(prob, **solver_opts)
        family = "isotropic" if prob.isotropic else "nonisotropic"
        rows.append(_row_from_report(prob.sigma, r, family, rep, truth))
        if learned:
            krep = varinf.solve_logpartition_with_kernel_learning(prob, outer_iters=outer)
            rows.append(_row_from_report(prob.sigma, r, "learned", krep, truth))
            chk.append(_check("learned_le_start", krep.bound <= rep.bound + 1e-9))
        chk.append(_check("bound_above_truth", all(x["excess"] >= -1e-6 for x in rows)))
        opts.inputs["problem_data"] = _jsonable(data)
        return {"rows": rows, "results": {"truth": truth, "bound": rep.bound}, "checks": chk}

    sigmas = _kernel_sigmas(opts, [1.0, 0.5, 0.2])
    rs = opts.get("r", [2, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50], _int_list)
    coeffs = _fhat_dict(opts.get("fhat", [[1, 0.5, 0.0], [-1, 0.5, 0.0]]))
    families = opts.get("families", ["khat-truncated", "khat-normalized"], list)
    rs = sorted(set(rs))
    if rs[0] < 1:
        raise ConfigError("field 'r': truncations must be at least 1")
    band = max((abs(d) for d in coeffs), default=0)
    if band > 2 * rs[0]:
        raise ConfigError(f"field 'r': fhat({band}) needs r >= {math.ceil(band / 2)}")
    probe = varinf.LogPartitionProblem.from_coefficients(rs[-1], coeffs, "uniform")
    truth = varinf.log_partition_quadrature(probe, LOGPARTITION_TRUTH_RESOLUTION)

    fam_spec = {"khat-truncated": ("khat-unnormalized", "nonisotropic"),
                "khat-normalized": ("khat", "isotropic")}
    for fam in families:
        if fam not in fam_spec:
            raise ConfigError(f"field 'families': unknown family {fam!r}; use {sorted(fam_spec)}")
        eta_kind, solver = fam_spec[fam]
        for sigma in sigmas:
            reps = varinf.truncation_sweep(
                lambda r, s=sigma: varinf.LogPartitionProblem.from_coefficients(r, coeffs, eta_kind, s),
                rs, solver=solver, **solver_opts)
            series = [_row_from_report(sigma, r, fam, rep, truth) for r, rep in zip(rs, reps)]
            rows.extend(series)
            if fam == "khat-truncated":
                b = [x["bound"] for x in series]
                worst = max((b[i + 1] - b[i] for i in range(len(b) - 1)), default=0.0)
                chk.append(_check(f"nonincreasing_in_r[sigma={sigma:g}]", worst <= 1e-12,
                                  f"largest increase {worst:.3e}"))

    if learned:
        uni, lrn = [], []
        for r in rs:
            prob = varinf.LogPartitionProblem.from_coefficients(r, coeffs, "uniform")
            u = varinf.solve_logpartition_torus(prob, **solver_opts)
            k = varinf.solve_logpartition_with_kernel_learning(prob, outer_iters=outer)
            uni.append(_row_from_report(None, r, "uniform", u, truth))
            lrn.append(_row_from_report(None, r, "learned", k, truth))
            mono = all(b <= a + 1e-12 for a, b in zip(k.objective_trace, k.objective_trace[1:]))
            chk.append(_check(f"learning_trace_monotone[r={r}]", mono))
        rows.extend(uni + lrn)
        worst = max(lo["bound"] - hi["bound"] for lo, hi in zip(lrn, uni))
        chk.append(_check("learned_le_uniform", worst <= 1e-9, f"largest excess {worst:.3e}"))

    worst = max((truth - x["bound"] for x in rows), default=-math.inf)
    chk.insert(0, _check("bound_above_truth", worst <= 1e-6, f"largest deficit {worst:.3e}"))
    resid = max((x["constraint_residual"] for x in rows), default=0.0)
    chk.insert(1, _check("dual_feasible", resid <= 1e-8, f"largest residual {resid:.3e}"))
    best = {}
    for x in rows:
        key = f"{x['family']}" + ("" if x["sigma"] is None else f"[sigma={x['sigma']:g}]")
        best[key] = x["bound"] if x["r"] == rs[-1] else best.get(key)
    return {"rows": rows, "results": {"truth": truth, "bound_at_max_r": best}, "checks": chk}


def cmd_hypercube(opts: _Options) -> dict:
    seed = _seed(opts)
    max_d = opts.get("max_d", 8, _positive_int)
    draws = opts.get("draws", 50, _positive_int)
    iters = opts.get("eta_iters", 200, _positive_int)
    if max_d > 12:
        raise ConfigError("field 'max_d': exact enumeration is limited to d <= 12")

    def one(task):
        d, k = task
        rng = estimation.replication_rng(seed, d * 100003 + k)
        means = rng.uniform(-1.0, 1.0, size=d)
        probs = np.array([1.0])
        for m in means:
            probs = np.multiply.outer(probs, [0.5 * (1 - m), 0.5 * (1 + m)])
        probs = probs.reshape((2,) * d)
        c = varinf.hypercube_moments(probabilities=probs)
        h = varinf.hypercube_entropy(probabilities=probs)
        uni = varinf.hypercube_entropy_bound(c)
        _, opt = varinf.hypercube_eta_optimize(c, iters=iters)
        return h, uni - h, opt - h, varinf.hypercube_logdet_bound(c) - h

    rows, per_rep = [], {}
    worst_sound, worst_opt, worst_tight = -math.inf, -math.inf, 0.0
    for d in range(1, max_d + 1):
        vals = np.array(_parallel_map(one, [(d, k) for k in range(draws)]))
        rows.append({"d": d, "draws": draws, "entropy_mean": float(vals[:, 0].mean()),
                     "excess_quantum_uniform": float(vals[:, 1].mean()),
                     "excess_quantum_optimized": float(vals[:, 2].mean()),
                     "excess_logdet": float(vals[:, 3].mean())})
        per_rep[f"d={d}"] = {"entropy": vals[:, 0].tolist(), "excess_quantum_uniform": vals[:, 1].tolist(),
                             "excess_quantum_optimized": vals[:, 2].tolist(), "excess_logdet": vals[:, 3].tolist()}
        worst_sound = max(worst_sound, float(-vals[:, 1:].min()))
        worst_opt = max(worst_opt, float((vals[:, 2] - vals[:, 1]).max()))
        if d == 1:
            worst_tight = float(np.abs(vals[:, 1]).max())
    chk = [_check("tight_d1", worst_tight <= 1e-8, f"largest |excess| {worst_tight:.3e}"),
           _check("bounds_above_entropy", worst_sound <= 1e-9, f"largest deficit {worst_sound:.3e}"),
           _check("optimized_le_uniform", worst_opt <= 1e-9, f"largest excess {worst_opt:.3e}")]
    return {"rows": rows, "replications": per_rep, "results": {"max_d": max_d}, "checks": chk}


def _inline_table(text: str):
    """JSON array, also accepting literals such as ``.4`` that JSON rejects."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        try:
            return ast.literal_eval(text)
        except (ValueError, SyntaxError):
            raise exc from None


def _joint_from(value, field: str) -> multivariate.JointDistribution:
    try:
        if isinstance(value, str):
            if os.path.exists(value):
                data = _load_config(value)
            else:
                data = {"table": _inline_table(value)}
        elif isinstance(value, dict):
            data = value
        else:
            data = {"table": value}
        table = np.asarray(data["table"], dtype=float)
        if "shape" in data:
            table = table.reshape([int(s) for s in data["shape"]])
        grams = tuple(FiniteGram(np.asarray(g, dtype=float)) for g in data.get("grams", ()))
        return multivariate.JointDistribution(table, grams)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"field {field!r}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except KeyError as exc:
        raise ConfigError(f"field {field!r}: missing key {exc.args[0]!r}") from None
    except (KiteError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"field {field!r}: {exc}") from None


def cmd_mi(opts: _Options) -> dict:
    value = opts.get("joint", None)
    if value is None:
        value = opts.get("table", None)
    if value is None:
        raise ConfigError("field 'joint': give a joint table (--joint FILE or --table JSON)")
    joint = _joint_from(value, "joint")
    kmi = multivariate.kernel_mutual_information(joint)
    smi = multivariate.shannon_mutual_information(joint.table)
    row = {"kernel_mi": kmi, "shannon_mi": smi, "gap": smi - kmi}
    chk = [_check("kernel_mi_nonnegative", kmi >= -1e-10, f"{kmi:.3e}"),
           _check("kernel_mi_le_shannon", kmi <= smi + 1e-8, f"gap {smi - kmi:.3e}")]
    return {"rows": [row], "results": row, "checks": chk}


def _default_sandwich_p():
    return {"type": "mixture", "components": ["triangle", "uniform"], "weights": [0.9, 0.1]}


def cmd_sandwich(opts: _Options) -> dict:
    sigmas = _kernel_sigmas(opts, [1.0, 0.3, 0.1])
    p = _density(opts.get("p", _default_sandwich_p()), "p")
    q = _density(opts.get("q", "uniform"), "q")
    rows = []
    try:
        for sigma in sigmas:
            res = estimation.sandwich_check(p, q, sigma)
            rows.append({"sigma": sigma, "r": estimation.sandwich_truncation(sigma), "d_smoothed": res.d_smoothed,
                         "d_kernel": res.d_kernel, "d_shannon": res.d_shannon,
                         "gap": res.d_shannon - res.d_kernel, "holds": res.holds})
    except KiteError as exc:
        raise ConfigError(f"fields 'p'/'q': {exc}") from None
    bad = [f"sigma={x['sigma']:g}" for x in rows if not x["holds"]]
    by_sigma = sorted(rows, key=lambda x: -x["sigma"])
    shrink = all(b["gap"] <= a["gap"] for a, b in zip(by_sigma, by_sigma[1:]))
    chk = [_check("sandwich_holds", not bad, "; ".join(bad)),
           _check("gap_decreases_with_sigma", shrink)]
    return {"rows": rows, "results": {"d_shannon": rows[0]["d_shannon"] if rows else None}, "checks": chk}


def cmd_check(opts: _Options) -> dict:
    seed = _seed(opts)
    suites = opts.get("suite", None, lambda v: [v] if isinstance(v, str) else list(v))
    scale = opts.get("scale", 1.0, float)
    if suites is not None:
        unknown = [s for s in suites if s not in checks.SUITES]
        if unknown:
            raise ConfigError(f"field 'suite': unknown suites {unknown}; known: {list(checks.SUITES)}")
    results = checks.run_suites(seed, suites, scale=scale)
    rows = [{"name": c.name, "trials": c.trials, "violations": c.violations, "worst": c.worst,
             "passed": c.passed} for c in results]
    chk = [_check(c.name, c.passed, c.line()) for c in results]
    return {"rows": rows, "results": {"suites": suites or list(checks.SUITES)}, "checks": chk}


COMMANDS: dict[str, Callable[[_Options], dict]] = {
    "entropy-sample": cmd_entropy_sample,
    "entropy-projection": cmd_entropy_projection,
    "logpartition": cmd_logpartition,
    "hypercube": cmd_hypercube,
    "mi": cmd_mi,
    "sandwich": cmd_sandwich,
    "check": cmd_check,
}


# --------------------------------------------------------------------------
# output


def _jsonable(value):
    """Plain JSON types; non-finite floats become the strings ``inf``, ``-inf``, ``nan``."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(value, complex):
        return [_jsonable(value.real), _jsonable(value.imag)]
    return value


def encode_json(record: dict) -> str:
    return json.dumps(_jsonable(record), indent=2, allow_nan=False) + "\n"


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isfinite(v):
            return "%.17g" % v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return str(value)


def encode_csv(record: dict) -> str:
    cols = COLUMNS[record["command"]]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in record["rows"]:
        writer.writerow([_csv_cell(row.get(c)) for c in cols])
    return buf.getvalue()


def run_command(command: str, args: argparse.Namespace, config: dict | None = None) -> dict:
    """Run one subcommand and return its result record."""
    opts = _Options(args, config or {})
    start = time.perf_counter()
    out = COMMANDS[command](opts)
    elapsed = time.perf_counter() - start
    return {
        "command": command,
        "version": __version__,
        "inputs": opts.inputs,
        "columns": COLUMNS[command],
        "results": out.get("results", {}),
        "rows": out["rows"],
        "replications": out.get("replications", {}),
        "checks": out["checks"],
        "passed": all(c["passed"] for c in out["checks"]),
        "wall_time": elapsed if getattr(args, "timing", False) else None,
    }


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (required for stochastic runs)")
    common.add_argument("--output", "-o", help="write the record here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default=None, help="output format (default json)")
    common.add_argument("--config", help="JSON file of options; flags override it")
    common.add_argument("--timing", action="store_true", default=None, help="record wall time (breaks byte-identity)")

    parser = argparse.ArgumentParser(prog="kite", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"kite {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (("entropy-sample", "kernel entropy from i.i.d. samples (Gram path)"),
                      ("entropy-projection", "kernel entropy lower bound by projection onto landmarks")):
        p = sub.add_parser(name, parents=[common], help=doc, description=doc)
        p.add_argument("--density", help="triangle, uniform, or a two-column CSV of x,value")
        p.add_argument("--sigma", help="kernel width(s), comma separated")
        p.add_argument("--n", help="sample sizes, comma separated")
        p.add_argument("--replications", type=int)

    p = sub.add_parser("logpartition", parents=[common], help="log-partition upper bounds on the torus")
    p.add_argument("--sigma", help="kernel width(s), comma separated")
    p.add_argument("--r", help="truncations, comma separated")
    p.add_argument("--problem", help="JSON problem file (domain, sigma, r, fhat, eta, solver)")
    p.add_argument("--kernel-learning", action="store_true", default=None, help="add uniform and learned-eta columns")
    p.add_argument("--outer-iters", type=int, help="kernel-learning alternations")
    p.add_argument("--extrapolation", action="store_true", default=None, help="accelerated projected gradient")

    p = sub.add_parser("hypercube", parents=[common], help="entropy bounds on {-1,1}^d")
    p.add_argument("--max-d", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--eta-iters", type=int)

    p = sub.add_parser("mi", parents=[common], help="kernel versus Shannon mutual information")
    p.add_argument("--joint", help="JSON file with shape, table and optional grams")
    p.add_argument("--table", help="inline JSON table, e.g. '[[.4,.1],[.1,.4]]'")

    p = sub.add_parser("sandwich", parents=[common], help="smoothed <= kernel <= Shannon divergence check")
    p.add_argument("--p", help="first density (name or CSV); default 0.9 triangle + 0.1 uniform")
    p.add_argument("--q", help="second density (name or CSV); default uniform")
    p.add_argument("--sigma", help="kernel width(s), comma separated")

    p = sub.add_parser("check", parents=[common], help="randomized property suites")
    p.add_argument("--suite", action="append", help=f"suite to run (repeatable); one of {list(checks.SUITES)}")
    p.add_argument("--scale", type=float, help="multiply every trial count")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        record = run_command(args.command, args, config)
        fmt = args.format or config.get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigError(f"field 'format': expected 'json' or 'csv', got {fmt!r}")
        text = encode_json(record) if fmt == "json" else encode_csv(record)
        output = args.output or config.get("output")
        if output:
            Path(output).write_text(text)
        else:
            sys.stdout.write(text)
    except KiteError as exc:
        print(f"kite {args.command}: error: {exc}", file=sys.stderr)
        return 2
    failed = [c for c in record["checks"] if not c["passed"]]
    for c in failed:
        print(f"FAIL property {c['name']}" + (f": {c['detail']}" if c["detail"] else ""), file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
