"""Experiment configuration, execution and CSV emission.

An experiment is one JSON document::

    {
      "schema_version": 1,
      "experiment": "quad-opt1",
      "problem":   {"kind": "noisy_quadratic", "m": 16, "n": 8, ...},
      "optimizer": {"variant": "limuon_opt1", "T": 1000, ...},
      "repeats": 10,
      "seed": 0,
      "output": "results/quad.csv",
      "timing": false,
      "sweep": {"optimizer.T": [300, 3000, 30000]}
    }

Unknown keys are rejected.  ``sweep`` maps dotted keys to value lists; the
cartesian product is run and each point is written to its own file.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import itertools
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from limuon.linalg import frobenius_norm, gaussian_matrix, make_rng
from limuon.metrics import fit_power_law
from limuon.objectives import PROBLEMS, ProblemSpec, finite_diff_grad
from limuon.optimizer import VARIANTS, DivergenceError, OptimizerConfig, limuon_run, state_memory

SCHEMA_VERSION = 1
CSV_HEADER = [
    "experiment", "variant", "T", "seed", "t", "loss", "grad_fro",
    "grad_nuc", "est_err", "state_elems", "wall_ms",
]
DIVERGED = "diverged"
GRADCHECK_TOL = 1e-4


class ConfigError(ValueError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass
class ExperimentSpec:
    experiment: str = "experiment"
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    repeats: int = 1
    seed: int = 0
    output: str = "results.csv"
    timing: bool = False
    sweep: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        m, n = self.problem.m, self.problem.n
        if m < 1 or n < 1:
            raise ConfigError("problem dimensions must be positive")
        if self.optimizer.variant == "limuon_opt2" and self.optimizer.r_hat + self.optimizer.s > min(m, n):
            raise ConfigError(
                f"r_hat + s = {self.optimizer.r_hat + self.optimizer.s} exceeds min(m, n) = {min(m, n)}"
            )


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


_TOP_KEYS = {"schema_version"} | _field_names(ExperimentSpec)
_SECTIONS = {"problem": ProblemSpec, "optimizer": OptimizerConfig}


def parse_override(text: str) -> tuple[str, object]:
    """``key.path=value``; the value is read as JSON, falling back to a bare string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _set_dotted(doc: dict, key: str, value) -> None:
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {part!r} is not a section")
    node[parts[-1]] = value


def _check_keys(doc: dict) -> None:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, cls in _SECTIONS.items():
        sub = doc.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"{section!r} must be an object")
        bad = set(sub) - _field_names(cls)
        if bad:
            raise ConfigError(f"unknown {section} keys: {sorted(bad)}")
    for key in doc.get("sweep", {}):
        section, _, name = key.partition(".")
        if section in _SECTIONS:
            if name not in _field_names(_SECTIONS[section]):
                raise ConfigError(f"unknown sweep key {key!r}")
        elif key not in _TOP_KEYS - {"sweep", "schema_version"}:
            raise ConfigError(f"unknown sweep key {key!r}")


def spec_from_dict(doc: dict) -> ExperimentSpec:
    doc = copy.deepcopy(doc)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
    _check_keys(doc)
    doc.pop("schema_version", None)
    try:
        problem = ProblemSpec(**doc.pop("problem", {}))
        if problem.kind not in PROBLEMS:
            raise ConfigError(f"unknown problem {problem.kind!r}; expected one of {PROBLEMS}")
        optimizer = OptimizerConfig(**doc.pop("optimizer", {}))
        spec = ExperimentSpec(problem=problem, optimizer=optimizer, **doc)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    spec.validate()
    return spec


def load_spec(path: str | os.PathLike | None, overrides=()) -> ExperimentSpec:
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    for item in overrides:
        key, value = item if isinstance(item, tuple) else parse_override(item)
        _set_dotted(doc, key, value)
    return spec_from_dict(doc)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    doc = dataclasses.asdict(spec)
    doc["schema_version"] = SCHEMA_VERSION
    return doc


def expand_sweep(spec: ExperimentSpec) -> list[tuple[str, ExperimentSpec]]:
    """One (label, spec) per sweep point; the label is empty without a sweep."""
    if not spec.sweep:
        return [("", spec)]
    keys = list(spec.sweep)
    base = spec_to_dict(spec)
    base.pop("sweep")
    points = []
    for values in itertools.product(*(spec.sweep[k] for k in keys)):
        doc = copy.deepcopy(base)
        for k, v in zip(keys, values):
            _set_dotted(doc, k, v)
        label = "__".join(f"{k.split('.')[-1]}={v}" for k, v in zip(keys, values))
        points.append((label, spec_from_dict(doc)))
    return points


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_rows(spec: ExperimentSpec, seed: int) -> tuple[list[list[str]], bool]:
    """Rows for one seed; the flag reports whether the run diverged."""
    oracle = spec.problem.build()
    config = dataclasses.replace(spec.optimizer, seed=seed)
    w0 = np.zeros(oracle.dims)
    diverged = False
    try:
        records, _ = limuon_run(config, oracle, w0, timing=spec.timing)
    except DivergenceError as exc:
        records, diverged = exc.records, True
    prefix = [spec.experiment, config.variant, config.T, seed]
    rows = [
        [_fmt(x) for x in prefix + [r.t, r.loss, r.grad_frobenius, r.grad_nuclear,
                                      r.estimator_error, r.state_elements, r.wall_ms]]
        for r in records
    ]
    if diverged:
        t = records[-1].t + 1 if records else 0
        rows.append([_fmt(x) for x in prefix] + [str(t), DIVERGED, "", "", "", "", ""])
    return rows, diverged


def write_csv_atomic(path: str | os.PathLike, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(buf.getvalue())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def output_path(spec: ExperimentSpec, label: str) -> Path:
    out = Path(spec.output)
    if not label:
        return out
    return out.with_name(f"{out.stem}__{label}{out.suffix or '.csv'}")


def run_experiment(spec: ExperimentSpec) -> tuple[list[Path], bool]:
    """Run every sweep point and seed; returns written paths and a divergence flag."""
    spec.validate()
    written = []
    any_diverged = False
    for label, point in expand_sweep(spec):
        rows = []
        for k in range(point.repeats):
            seed_rows, diverged = run_rows(point, point.seed + k)
            rows.extend(seed_rows)
            any_diverged |= diverged
        path = output_path(spec, label)
        write_csv_atomic(path, rows)
        written.append(path)
    return written, any_diverged


def gradcheck(problem: ProblemSpec, probes: int = 5, h: float = 1e-5) -> dict:
    """Compare exact and central-difference gradients at seeded probe points."""
    oracle = problem.build()
    rng = make_rng(problem.seed + 1)
    errors = []
    for _ in range(probes):
        w = gaussian_matrix(*oracle.dims, rng)
        exact = oracle.full_grad(w)
        approx = finite_diff_grad(oracle, w, h)
        errors.append(frobenius_norm(approx - exact) / max(frobenius_norm(exact), 1e-300))
    worst = max(errors)
    return {
        "problem": problem.kind,
        "dims": list(oracle.dims),
        "probes": probes,
        "h": h,
        "relative_errors": errors,
        "max_relative_error": worst,
        "ok": worst <= GRADCHECK_TOL,
    }


def read_result_rows(paths) -> list[dict]:
    rows = []
    for p in paths:
        with open(p, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_HEADER:
                raise InsufficientData(f"{p}: header does not match the result schema")
            rows.extend(r for r in reader if r["loss"] != DIVERGED)
    return rows


def rate_report(paths) -> dict:
    """Per-horizon mean of the trajectory-averaged nuclear norm and its log-log slope."""
    rows = read_result_rows(paths)
    per_run: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r["experiment"], r["variant"], int(r["T"]), int(r["seed"]))
        per_run.setdefault(key, []).append(float(r["grad_nuc"]))
    by_T: dict[int, list[float]] = {}
    for (_, _, T, _), vals in per_run.items():
        by_T.setdefault(T, []).append(float(np.mean(vals)))
    if len(by_T) < 3:
        raise InsufficientData(f"need >= 3 horizons, found {sorted(by_T)}")
    horizons = sorted(by_T)
    means = [float(np.mean(by_T[T])) for T in horizons]
    if not all(math.isfinite(v) and v > 0 for v in means):
        raise InsufficientData("averaged nuclear norms must be positive to fit a power law")
    slope, intercept, r2 = fit_power_law(horizons, means)
    return {
        "slope": slope,
        "intercept": intercept,
        "r_squared": r2,
        "horizons": [
            {"T": T, "avg_nuclear": mu, "runs": len(by_T[T])} for T, mu in zip(horizons, means)
        ],
    }


def memory_report(m: int, n: int, r_hat: int, s: int = 2) -> dict:
    """Predicted and measured persistent state size for each variant on an m x n problem."""
    oracle = ProblemSpec("noisy_quadratic", m, n, samples=4, seed=0).build()
    out = {"m": m, "n": n, "r_hat": r_hat, "s": s, "variants": {}}
    for variant in VARIANTS:
        config = OptimizerConfig(variant=variant, T=2, r_hat=r_hat, s=s)
        records, _ = limuon_run(config, oracle, np.zeros((m, n)))
        out["variants"][variant] = {
            "predicted": state_memory(config, m, n),
            "measured": records[-1].state_elements,
        }
    return out
