"""File formats: problem files (JSON), result tables (CSV) and configs (INI)."""
import configparser
import csv
import json
import os
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import InvalidInputError, SchemaError
from .mdp import Mdp, Policy

RESULT_FIELDS = ("experiment_id", "algorithm", "seed", "step", "max_value_error", "emsbe", "status")
SIG_DIGITS = 12


def round_sig(x):
    """Value as it reads back from a results file."""
    return float(f"{x:.{SIG_DIGITS}g}")


# ------------------------------------------------------------------ problems


@dataclass(frozen=True, eq=False)
class ProblemFile:
    mdp: Mdp
    phi: np.ndarray
    target: Policy
    behaviour: Optional[Policy] = None
    lam: Optional[np.ndarray] = None
    theta0: Optional[np.ndarray] = None
    start: Optional[np.ndarray] = None
    terminals: tuple = ()


def save_problem(path, problem: ProblemFile):
    doc = {
        "format": "ottd-problem-1",
        "discount": problem.mdp.discount,
        "transition": problem.mdp.transition.tolist(),
        "reward": problem.mdp.reward.tolist(),
        "features": np.asarray(problem.phi).tolist(),
        "target_policy": problem.target.probs.tolist(),
        "terminals": list(problem.terminals),
    }
    for key, value in (("behaviour_policy", problem.behaviour), ("lambda", problem.lam),
                       ("theta0", problem.theta0), ("start", problem.start)):
        if value is not None:
            doc[key] = (value.probs if isinstance(value, Policy) else np.asarray(value)).tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_problem(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not a JSON problem file ({exc})") from exc
    if doc.get("format") != "ottd-problem-1":
        raise SchemaError(f"{path}: unknown problem format {doc.get('format')!r}")
    try:
        mdp = Mdp(np.array(doc["transition"]), np.array(doc["reward"]), doc["discount"])
        arr = lambda key: None if key not in doc else np.array(doc[key], dtype=float)
        return ProblemFile(
            mdp=mdp,
            phi=np.array(doc["features"], dtype=float),
            target=Policy(np.array(doc["target_policy"])),
            behaviour=None if "behaviour_policy" not in doc else Policy(np.array(doc["behaviour_policy"])),
            lam=arr("lambda"),
            theta0=arr("theta0"),
            start=arr("start"),
            terminals=tuple(int(t) for t in doc.get("terminals", ())),
        )
    except KeyError as exc:
        raise SchemaError(f"{path}: missing field {exc}") from exc


# ------------------------------------------------------------------ results


@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    algorithm: str
    seed: int
    step: int
    max_value_error: float
    emsbe: float
    status: str


def rows_from_run(experiment_id, algorithm, seed, result):
    return [
        ResultRow(experiment_id, algorithm, int(seed), int(s), round_sig(e), round_sig(b), result.status)
        for s, e, b in zip(result.steps.tolist(), result.max_value_error.tolist(), result.emsbe.tolist())
    ]


def _fmt(v):
    return f"{v:.{SIG_DIGITS}g}" if isinstance(v, float) else str(v)


def write_results(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in RESULT_FIELDS])


def read_results(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_FIELDS:
            raise SchemaError(f"{path}: expected columns {', '.join(RESULT_FIELDS)}")
        rows = [
            ResultRow(r["experiment_id"], r["algorithm"], int(r["seed"]), int(r["step"]),
                      float(r["max_value_error"]), float(r["emsbe"]), r["status"])
            for r in reader
        ]
    if not rows:
        raise SchemaError(f"{path}: no result rows")
    return rows


def mean_curves(rows):
    """Per (experiment, algorithm): union of steps and the seed-mean of each metric.

    A seed that stopped early contributes its last recorded value afterwards.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.experiment_id, r.algorithm), {}).setdefault(r.seed, []).append(r)
    out = {}
    for key, by_seed in groups.items():
        steps = np.array(sorted({r.step for seed_rows in by_seed.values() for r in seed_rows}))
        cols = {"max_value_error": [], "emsbe": []}
        for seed_rows in by_seed.values():
            s = np.array([r.step for r in seed_rows])
            idx = np.clip(np.searchsorted(s, steps, side="right") - 1, 0, None)
            for name in cols:
                v = np.array([getattr(r, name) for r in seed_rows])
                cols[name].append(v[idx])
        out[key] = (steps, {name: np.mean(v, axis=0) for name, v in cols.items()})
    return out


def write_mean_curves(path, curves):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("experiment_id", "algorithm", "step", "mean_max_value_error", "mean_emsbe"))
        for (exp, alg), (steps, cols) in curves.items():
            for i, s in enumerate(steps.tolist()):
                w.writerow((exp, alg, s, _fmt(float(cols["max_value_error"][i])), _fmt(float(cols["emsbe"][i]))))


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[h]) if isinstance(r[h], float) else r[h] for h in header])


# ------------------------------------------------------------------ configs

PROBLEMS = ("baird", "two_state", "four_room")
CORRECTIONS = ("none", "target_action", "is", "nis")
DATASET_KINDS = ("expected", "iid", "trajectory")


@dataclass
class DatasetConfig:
    kind: Optional[str] = None  # default depends on the problem
    size: int = 300
    horizon: int = 10
    seed: int = 0


@dataclass
class ExperimentConfig:
    experiment_id: str = "experiment"
    problem: str = "baird"
    algorithm: str = "ottd"
    correction_mode: Optional[str] = None
    eta: Optional[float] = None
    eta2: Optional[float] = None
    m: Optional[int] = None
    mix: float = 0.5
    seeds: tuple = (0,)
    max_iters: int = 10_000
    tol: float = 1e-10
    divergence_threshold: float = 1e8
    record_every: int = 1
    gamma: Optional[float] = None
    lam: Optional[tuple] = None
    overparameterized: bool = False
    delta: float = 0.1
    output_dir: str = "results"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    @property
    def algorithms(self):
        """The ``algorithm`` key may list several algorithms, comma separated."""
        return tuple(a.strip() for a in self.algorithm.split(",") if a.strip())

    @property
    def problem_path(self):
        return self.problem[5:] if self.problem.startswith("file:") else None

    def validate(self):
        from .learners import ALGORITHMS

        if self.problem not in PROBLEMS and self.problem_path is None:
            raise InvalidInputError(f"unknown problem {self.problem!r}")
        if self.problem_path is not None and not os.path.exists(self.problem_path):
            raise FileNotFoundError(self.problem_path)
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms:
            raise InvalidInputError(f"unknown algorithm {', '.join(unknown) or self.algorithm!r}")
        if self.correction_mode is not None and self.correction_mode not in CORRECTIONS:
            raise InvalidInputError(f"unknown correction mode {self.correction_mode!r}")
        if self.dataset.kind is not None and self.dataset.kind not in DATASET_KINDS:
            raise InvalidInputError(f"unknown dataset kind {self.dataset.kind!r}")
        if not self.seeds:
            raise InvalidInputError("at least one seed is required")
        if self.record_every < 1 or self.max_iters < 0:
            raise InvalidInputError("record_every must be positive and max_iters nonnegative")
        if not 0 < self.delta <= 1:
            raise InvalidInputError("delta must lie in (0, 1]")
        return self


def _parse_value(raw, kind):
    raw = raw.strip()
    if kind is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    if kind == "floats":
        return tuple(float(x) for x in raw.replace(",", " ").split())
    if kind == "ints":
        return tuple(int(x) for x in raw.replace(",", " ").split())
    return kind(raw)


_EXPERIMENT_KEYS = {
    "id": ("experiment_id", str), "problem": ("problem", str), "algorithm": ("algorithm", str),
    "correction_mode": ("correction_mode", str), "seeds": ("seeds", "ints"), "max_iters": ("max_iters", int),
    "record_every": ("record_every", int), "gamma": ("gamma", float), "lambda": ("lam", "floats"),
    "overparameterized": ("overparameterized", bool), "delta": ("delta", float),
    "output_dir": ("output_dir", str),
}
_LEARNER_KEYS = {
    "eta": ("eta", float), "eta2": ("eta2", float), "m": ("m", int), "mix": ("mix", float),
    "tol": ("tol", float), "divergence_threshold": ("divergence_threshold", float),
}
_DATASET_KEYS = {"kind": str, "size": int, "horizon": int, "seed": int}


def load_config(path):
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise InvalidInputError(f"{path}: {exc}") from exc
    cfg = ExperimentConfig()
    try:
        for section, table in (("experiment", _EXPERIMENT_KEYS), ("learner", _LEARNER_KEYS)):
            if not parser.has_section(section):
                continue
            for key, raw in parser.items(section):
                if key not in table:
                    raise InvalidInputError(f"{path}: unknown key [{section}] {key}")
                name, kind = table[key]
                setattr(cfg, name, _parse_value(raw, kind))
        if parser.has_section("dataset"):
            for key, raw in parser.items("dataset"):
                if key not in _DATASET_KEYS:
                    raise InvalidInputError(f"{path}: unknown key [dataset] {key}")
                setattr(cfg.dataset, key, _parse_value(raw, _DATASET_KEYS[key]))
    except ValueError as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"{path}: {exc}") from exc
    extra = set(parser.sections()) - {"experiment", "learner", "dataset"}
    if extra:
        raise InvalidInputError(f"{path}: unknown sections {sorted(extra)}")
    return cfg.validate()


def dump_config(cfg: ExperimentConfig):
    """INI text that :func:`load_config` reads back to an equal config."""
    lines = ["[experiment]"]
    for key, (name, kind) in _EXPERIMENT_KEYS.items():
        v = getattr(cfg, name)
        if v is None:
            continue
        if kind in ("ints", "floats"):
            v = ", ".join(repr(x) for x in v)
        lines.append(f"{key} = {v}")
    lines.append("\n[learner]")
    for key, (name, _) in _LEARNER_KEYS.items():
        v = getattr(cfg, name)
        if v is not None:
            lines.append(f"{key} = {v!r}")
    lines.append("\n[dataset]")
    for f in fields(DatasetConfig):
        v = getattr(cfg.dataset, f.name)
        if v is not None:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
