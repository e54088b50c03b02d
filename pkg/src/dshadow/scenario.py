"""Scenario files: validation, dispatch and atomic result writing.

A scenario is a JSON document::

    {"schema": "dshadow/1", "name": "...", "task": "shadow",
     "system": {...}  or  "kernel": {...},
     "params": {...}}

Validation collects every problem before anything is computed. Results are
written into a temporary directory next to the target and renamed into place
only after the task succeeds, so a failed run leaves no output directory.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from dshadow import __version__
from dshadow._io import complex_from_json, csv_text, dumps, split_complex, vector_columns
from dshadow.errors import ValidationError
from dshadow.finite_delay import FiniteDelaySystem, ForcingSequence, Segment, simulate_forced
from dshadow.phase_space import HistorySegment

__all__ = ["SCHEMA", "TASKS", "Scenario", "RunRecord", "validate", "run", "execute"]

SCHEMA = "dshadow/1"
TASKS = ("simulate", "spectrum", "dichotomy", "shadow", "perron", "resonate", "verify-all")

# which model each task accepts
_MODELS = {
    "simulate": ("system", "kernel"),
    "spectrum": ("system", "kernel"),
    "dichotomy": ("system",),
    "shadow": ("system",),
    "perron": ("system",),
    "resonate": ("system", "kernel"),
    "verify-all": (),
}


@dataclass
class Scenario:
    """Validated scenario ready to run."""

    name: str
    task: str
    params: dict
    system: FiniteDelaySystem | None = None
    kernel: object | None = None
    document: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return hashlib.sha256(dumps(self.document).encode()).hexdigest()


@dataclass
class RunRecord:
    scenario_hash: str
    timestamp: str
    version: str
    input: dict
    result_files: list
    duration_s: float
    status: str = "ok"

    def to_json(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "timestamp": self.timestamp,
            "version": self.version,
            "input": self.input,
            "result_files": self.result_files,
            "duration_s": self.duration_s,
            "status": self.status,
        }


# -- parameter checks ---------------------------------------------------------

def _int(params, key, problems, default=None, lo=None, hi=None):
    v = params.get(key, default)
    if v is None:
        problems.append((f"params.{key}", "missing required parameter"))
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        problems.append((f"params.{key}", f"must be an integer, got {v!r}"))
        return None
    if lo is not None and v < lo or hi is not None and v > hi:
        problems.append((f"params.{key}", f"must lie in [{lo}, {hi}], got {v}"))
        return None
    return v


def _float(params, key, problems, default=None, lo=None, positive=False):
    v = params.get(key, default)
    if v is None:
        problems.append((f"params.{key}", "missing required parameter"))
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        problems.append((f"params.{key}", f"must be a finite number, got {v!r}"))
        return None
    if positive and not v > 0:
        problems.append((f"params.{key}", f"must be positive, got {v}"))
        return None
    if lo is not None and v < lo:
        problems.append((f"params.{key}", f"must be >= {lo}, got {v}"))
        return None
    return float(v)


def _array(params, key, ndim, problems, required=False):
    if key not in params:
        if required:
            problems.append((f"params.{key}", "missing required parameter"))
        return None
    try:
        return complex_from_json(params[key], ndim)
    except (ValueError, TypeError) as exc:
        problems.append((f"params.{key}", str(exc)))
        return None


def _prefixed(exc: ValidationError, prefix: str):
    return [(f"{prefix}.{p}" if not p.startswith(prefix) else p, m) for p, m in exc.fields]


def validate(doc, task: str | None = None, seed: int | None = None, tol: float | None = None) -> Scenario:
    """Check a scenario document and return a :class:`Scenario`.

    ``task``, ``seed`` and ``tol`` come from the command line and override
    (or must agree with) the document.

    Raises
    ------
    ValidationError
        Listing every offending field.
    """
    from dshadow.volterra import VolterraKernel

    problems = []
    if doc is None:
        doc = {"schema": SCHEMA, "task": task}
    if not isinstance(doc, dict):
        raise ValidationError([("<root>", "scenario must be a JSON object")])
    doc = dict(doc)
    if doc.get("schema") != SCHEMA:
        problems.append(("schema", f"must be {SCHEMA!r}, got {doc.get('schema')!r}"))
    if task is not None:
        if "task" in doc and doc["task"] != task:
            problems.append(("task", f"scenario task {doc['task']!r} does not match the command {task!r}"))
        doc["task"] = task
    task = doc.get("task")
    if task not in TASKS:
        problems.append(("task", f"must be one of {list(TASKS)}, got {task!r}"))
        raise ValidationError(problems)
    name = doc.get("name", task)
    if not isinstance(name, str):
        problems.append(("name", "must be a string"))
    params = doc.get("params", {})
    if not isinstance(params, dict):
        problems.append(("params", "must be an object"))
        params = {}
    params = dict(params)
    if seed is not None:
        params["seed"] = seed
    if tol is not None:
        params["tol"] = tol
    doc["params"] = params

    models = _MODELS[task]
    system = kernel = None
    present = [m for m in ("system", "kernel") if m in doc]
    if models and not present:
        problems.append((" or ".join(models), "missing: the task needs a model"))
    for m in present:
        if m not in models:
            problems.append((m, f"task {task!r} does not accept a {m}"))
    if "system" in doc and "system" in models:
        try:
            system = FiniteDelaySystem.from_json(doc["system"])
        except ValidationError as exc:
            problems.extend(_prefixed(exc, "system"))
    if "kernel" in doc and "kernel" in models:
        try:
            kernel = VolterraKernel.from_json(doc["kernel"])
        except ValidationError as exc:
            problems.extend(_prefixed(exc, "kernel"))
        except ValueError as exc:
            problems.append(("kernel", str(exc)))

    checked = _check_params(task, params, system, kernel, problems)
    if problems:
        raise ValidationError(problems)
    return Scenario(name, task, checked, system, kernel, doc)


def _check_params(task, params, system, kernel, problems) -> dict:
    out = {}
    if "tol" in params:
        out["tol"] = _float(params, "tol", problems, positive=True)
    seed = params.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        problems.append(("params.seed", "must be an unsigned 64-bit integer"))
    out["seed"] = seed
    d = system.dim_d if system is not None else (kernel.dim_d if kernel is not None else None)
    if task == "simulate":
        out["steps"] = _int(params, "steps", problems, lo=0, hi=10**7)
        init = _array(params, "initial", 2, problems)
        forcing = _array(params, "forcing", 2, problems)
        if init is not None and d is not None:
            if init.shape[1] != d:
                problems.append(("params.initial", f"entries must have dimension {d}"))
            elif system is not None and init.shape[0] != system.delay_r + 1:
                problems.append(("params.initial", f"needs r+1 = {system.delay_r + 1} entries"))
        if forcing is not None and d is not None and forcing.shape[1] != d:
            problems.append(("params.forcing", f"entries must have dimension {d}"))
        out["initial"], out["forcing"] = init, forcing
    elif task == "spectrum":
        out["grid"] = _int(params, "grid", problems, default=64, lo=8, hi=1 << 14)
        ann = params.get("annulus")
        if ann is not None and not (isinstance(ann, list) and len(ann) == 2 and all(isinstance(a, (int, float)) for a in ann)):
            problems.append(("params.annulus", "must be [inner, outer]"))
            ann = None
        out["annulus"] = ann
        out["horizon"] = _int(params, "horizon", problems, default=60, lo=1)
    elif task == "dichotomy":
        out["horizon"] = _int(params, "horizon", problems, default=60, lo=1, hi=10**5)
    elif task == "shadow":
        out["delta"] = _float(params, "delta", problems, positive=True)
        out["trials"] = _int(params, "trials", problems, default=100, lo=1, hi=10**6)
        out["steps"] = _int(params, "steps", problems, default=200, lo=1, hi=10**6)
    elif task == "perron":
        forcing = _array(params, "forcing", 2, problems, required=True)
        if forcing is not None and d is not None and forcing.shape[1] != d:
            problems.append(("params.forcing", f"entries must have dimension {d}"))
        out["forcing"] = forcing
        out["window"] = params.get("window")
        if out["window"] is not None:
            out["window"] = _int(params, "window", problems, lo=0)
    elif task == "resonate":
        out["steps"] = _int(params, "steps", problems, default=10_000, lo=1, hi=10**7)
    elif task == "verify-all":
        sel = params.get("suite", "all")
        from dshadow.suites import SUITES

        names = [s.strip() for s in str(sel).split(",")] if sel != "all" else []
        bad = [n for n in names if n not in SUITES]
        if bad:
            problems.append(("params.suite", f"unknown suite(s) {bad}; choose from {sorted(SUITES)} or 'all'"))
        out["suite"] = sel
    return out


# -- task runners -------------------------------------------------------------
# each returns {file name: text}

def _orbit_csv(values, start, col="x"):
    d = values.shape[1]
    rows = [[start + i] + split_complex(v) for i, v in enumerate(values)]
    return csv_text(["n"] + vector_columns(col, d), rows)


def _run_simulate(sc: Scenario) -> dict:
    p = sc.params
    steps = p["steps"]
    if sc.system is not None:
        sys = sc.system
        init = p["initial"] if p["initial"] is not None else np.zeros((sys.delay_r + 1, sys.dim_d))
        forcing = p["forcing"] if p["forcing"] is not None else np.zeros((0, sys.dim_d))
        z = np.zeros((steps, sys.dim_d), dtype=complex)
        z[: min(steps, len(forcing))] = forcing[:steps]
        orbit = simulate_forced(sys, Segment(init), ForcingSequence(z))
        summary = {"steps": steps, "final": orbit.values[-1], "sup_norm": float(np.max(np.linalg.norm(orbit.values, axis=1)))}
        return {"orbit.csv": orbit.to_csv(), "summary.json": dumps(summary)}
    from dshadow.volterra import forced_recursion

    k = sc.kernel
    init = p["initial"] if p["initial"] is not None else np.zeros((1, k.dim_d))
    forcing = p["forcing"] if p["forcing"] is not None else np.zeros((0, k.dim_d))
    segs = forced_recursion(k, HistorySegment(k.gamma, init), ForcingSequence(forcing), steps)
    heads = np.array([s.values[-1] for s in segs])
    summary = {"steps": steps, "final": heads[-1], "sup_norm": float(np.max(np.linalg.norm(heads, axis=1)))}
    return {"orbit.csv": _orbit_csv(heads, 0), "summary.json": dumps(summary)}


def _run_spectrum(sc: Scenario) -> dict:
    p = sc.params
    if sc.kernel is not None:
        from dshadow.volterra import find_roots

        kw = {"grid": p["grid"]}
        if p.get("tol") is not None:
            kw["tol"] = p["tol"]
        spec = find_roots(sc.kernel, annulus=tuple(p["annulus"]) if p["annulus"] else None, **kw)
        return {"spectrum.json": dumps(spec.to_json())}
    from dshadow.dichotomy import detect, finite_time_diagnostics

    if sc.system.kind == "tabulated":
        return {"diagnostics.json": dumps(finite_time_diagnostics(sc.system))}
    rep, _ = detect(sc.system, tol=p.get("tol") or 1e-8)
    return {"spectrum.json": dumps(rep.to_json())}


def _run_dichotomy(sc: Scenario, full: bool) -> dict:
    from dshadow.dichotomy import detect, verify_dichotomy

    p = sc.params
    rep, dich = detect(sc.system, tol=p.get("tol") or 1e-8, horizon=p["horizon"])
    files = {"gap_report.json": dumps(rep.to_json())}
    if dich is None:
        from dshadow.errors import StateError

        raise StateError(f"system is not hyperbolic (closest multiplier at distance {rep.min_distance_to_unit_circle:.3g})")
    ver = verify_dichotomy(sc.system, dich, horizon=p["horizon"], full=full)
    files["dichotomy.json"] = dumps(dich.to_json())
    files["verification.json"] = dumps(ver.to_json(full))
    return files


def _run_shadow(sc: Scenario) -> dict:
    from dshadow.dichotomy import detect
    from dshadow.errors import StateError
    from dshadow.rng import generator
    from dshadow.shadowing import make_pseudo_orbit, shadow, shadowing_modulus

    p = sc.params
    rep, dich = detect(sc.system, tol=p.get("tol") or 1e-8)
    if dich is None:
        raise StateError("system is not hyperbolic; shadowing needs a dichotomy")
    summary = shadowing_modulus(sc.system, dich, p["trials"], p["delta"], horizon=p["steps"], seed=p["seed"])
    y = make_pseudo_orbit(sc.system, dich, p["delta"], p["steps"], generator(p["seed"], 0))
    example = shadow(sc.system, dich, y)
    return {"shadow_summary.json": dumps(summary), "shadow_trial0.csv": example.to_csv()}


def _run_perron(sc: Scenario) -> dict:
    from dshadow.dichotomy import detect
    from dshadow.errors import StateError
    from dshadow.shadowing import perron_solve

    p = sc.params
    rep, dich = detect(sc.system, tol=p.get("tol") or 1e-8)
    if dich is None:
        raise StateError("system is not hyperbolic; bounded solutions need a dichotomy")
    sol = perron_solve(sc.system, dich, ForcingSequence(p["forcing"]), window=p["window"])
    summary = {
        "sup_norm": sol.sup_norm,
        "control_ratio": sol.control_ratio,
        "truncation_tail_bound": sol.truncation_tail_bound,
        "step_residual": sol.step_residual,
        "horizon": sol.horizon,
        "K_D": dich.K_D,
    }
    return {"perron.csv": sol.orbit.to_csv(), "perron.json": dumps(summary)}


def _run_resonate(sc: Scenario) -> dict:
    p = sc.params
    if sc.kernel is not None:
        from dshadow.volterra import resonate

        spec, dec, rep = resonate(sc.kernel, p["steps"])
        doc = rep.to_json()
        doc["normalization_residual"] = dec.normalization_residual
        return {"growth.csv": rep.to_csv(), "growth.json": dumps(doc)}
    from dshadow.shadowing import resonance_probe

    rep = resonance_probe(sc.system, p["steps"], tol=p.get("tol") or 1e-8)
    return {"growth.csv": rep.to_csv(), "growth.json": dumps(rep.to_json())}


def _run_verify(sc: Scenario) -> dict:
    from dshadow.suites import verify_all

    report = verify_all(sc.params["suite"], sc.params["seed"])
    return {"summary.json": dumps(report)}


def execute(sc: Scenario, full: bool = False) -> dict:
    """Run the scenario's task and return ``{file name: contents}``."""
    runners = {
        "simulate": _run_simulate,
        "spectrum": _run_spectrum,
        "shadow": _run_shadow,
        "perron": _run_perron,
        "resonate": _run_resonate,
        "verify-all": _run_verify,
    }
    if sc.task == "dichotomy":
        return _run_dichotomy(sc, full)
    return runners[sc.task](sc)


def _write_atomic(out_dir: str, files: dict):
    out_dir = os.path.abspath(out_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".dshadow-", dir=parent)
    try:
        for name, text in files.items():
            with open(os.path.join(tmp, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        if os.path.isdir(out_dir):
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def run(sc: Scenario, out_dir: str, full: bool = False) -> RunRecord:
    """Execute ``sc``, write its result files plus ``manifest.json`` into ``out_dir``.

    Nothing is written when the task raises.
    """
    t0 = time.perf_counter()
    files = execute(sc, full)
    record = RunRecord(
        scenario_hash=sc.digest,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        version=__version__,
        input=sc.document,
        result_files=sorted(files),
        duration_s=round(time.perf_counter() - t0, 6),
    )
    if sc.task == "verify-all":
        import json

        record.status = "ok" if json.loads(files["summary.json"])["passed"] else "failed"
    files = dict(files)
    files["manifest.json"] = dumps(record.to_json())
    _write_atomic(out_dir, files)
    return record
