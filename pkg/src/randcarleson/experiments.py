"""Config-driven experiment campaigns with resumable, deterministic result files.

A campaign is a TOML file::

    [experiment]
    id = "carleson-d1"
    kind = "CarlesonTrend"
    depths = [8, 10, 12]
    trials = 5
    base_seed = 1

    [profile]
    C = 1.0
    beta = 0.5
    d = 1

    [kernel]          # optional
    family = "szego"

    [params]          # kind-specific, optional

Unknown sections or keys are rejected.  Every (depth, trial) cell gets the
seed ``derive_seed(base_seed, id, depth, trial)``.  Results go to an
append-only JSON-lines file written in (depth, trial) order by a single
writer; an index sidecar records the byte range of each completed cell so an
interrupted campaign resumes with only the missing cells.
"""
from __future__ import annotations

import concurrent.futures as cf
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .carleson import GAMMA_GRID, ALMOST_SURELY, bloch_profile_classifier, onebox_constant
from .errors import InvalidInputError, NumericError, ResourceLimitError
from .gramian import (ChernoffParams, chernoff_bound, expected_frame_diagonal, expected_sq_entry_szego,
                      frame_norm_samples, gram_norm, mc_expected_sq_entry)
from .kernels import KernelSpec
from .occupancy import OccupancyProblem, exact_prob, ratio_check
from .separation import cluster_count, rectangle_collisions
from .sequences import (MIDPOINT, PLACEMENTS, UNIFORM_IN_BAND, CountingProfile, derive_seed, radii_from_profile,
                        sample)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("CarlesonTrend", "SeparationLaw", "OccupancyRatio", "ChernoffTail", "ExpectedEntry",
         "BallTrend", "DirichletTrend", "BlochLaw")
_SEQUENCE_KINDS = ("CarlesonTrend", "SeparationLaw", "BallTrend", "DirichletTrend", "BlochLaw")

_NUM = (int, float)
_EXPERIMENT_KEYS = {"id": str, "kind": str, "depths": list, "trials": int, "base_seed": int, "output": str}
_PROFILE_KEYS = {"C": _NUM, "beta": _NUM, "d": int, "placement": str}
_KERNEL_KEYS = {"family": str, "a": _NUM}
_NORM_PARAMS = {"norm_method": ("lanczos", str), "tol": (1e-8, _NUM), "dense_cap": (10_000, int)}
_PARAMS = {
    "CarlesonTrend": _NORM_PARAMS,
    "BallTrend": _NORM_PARAMS,
    "DirichletTrend": _NORM_PARAMS,
    "SeparationLaw": {"M": (1, int), "l": (2, int), "beyond": (0, int)},
    "OccupancyRatio": {"r": (2, int), "n_exponent": (0.5, _NUM)},
    "ChernoffTail": {"points": (200, int), "radius": (0.5, _NUM), "samples": (1000, int),
                     "deltas": ([1.0, 2.0, 4.0], list)},
    "ExpectedEntry": {"samples": (100_000, int)},
    "BlochLaw": {"M": (2, int), "l": (2, int), "gammas": (list(GAMMA_GRID), list)},
}
_DEFAULT_KERNEL = {"CarlesonTrend": "szego", "BallTrend": "besov_sobolev", "DirichletTrend": "dirichlet"}


class ConfigError(InvalidInputError):
    """Invalid experiment configuration."""


def _check_section(name: str, data, schema: dict) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"unknown key {name}.{key}")
        want = schema[key]
        if isinstance(value, bool) or not isinstance(value, want):
            raise ConfigError(f"{name}.{key} has the wrong type ({type(value).__name__})")
    return dict(data)


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    kind: str
    depths: tuple
    trials: int
    base_seed: int = 0
    profile: dict = field(default_factory=dict)
    kernel: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        depths = tuple(self.depths)
        if not depths or any(not isinstance(v, int) or isinstance(v, bool) or v < 0 for v in depths):
            raise ConfigError("depths must be a nonempty list of nonnegative integers")
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise ConfigError("depths must be strictly increasing")
        object.__setattr__(self, "depths", depths)
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        schema = _PARAMS[self.kind]
        _check_section("params", self.params, {k: t for k, (_, t) in schema.items()})
        merged = {k: default for k, (default, _) in schema.items()}
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        if self.kind in _SEQUENCE_KINDS:
            for key in ("C", "beta", "d"):
                if key not in self.profile:
                    raise ConfigError(f"profile.{key} is required for {self.kind}")
            if self.profile.get("placement", MIDPOINT) not in PLACEMENTS:
                raise ConfigError(f"unknown placement {self.profile['placement']!r}")
        try:
            if self.kind in _DEFAULT_KERNEL:
                self.kernel_spec()
            if self.kind in _SEQUENCE_KINDS:
                self.profile_at(self.depths[0])
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - {"experiment", "profile", "kernel", "params"}
        if unknown:
            raise ConfigError(f"unknown section(s) {sorted(unknown)}")
        exp = _check_section("experiment", data.get("experiment"), _EXPERIMENT_KEYS)
        for key in ("id", "kind", "depths", "trials"):
            if key not in exp:
                raise ConfigError(f"experiment.{key} is required")
        return cls(
            id=exp["id"], kind=exp["kind"], depths=tuple(exp["depths"]), trials=exp["trials"],
            base_seed=exp.get("base_seed", 0),
            profile=_check_section("profile", data.get("profile", {}), _PROFILE_KEYS),
            kernel=_check_section("kernel", data.get("kernel", {}), _KERNEL_KEYS),
            params=data.get("params", {}), output=exp.get("output"),
        )

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_toml(Path(path).read_text())

    @property
    def d(self) -> int:
        return int(self.profile.get("d", 1))

    @property
    def placement(self) -> str:
        return self.profile.get("placement", MIDPOINT)

    def profile_at(self, depth: int) -> CountingProfile:
        return CountingProfile.exponential(self.profile["C"], self.profile["beta"], self.d, depth,
                                           shells=self.kind == "BallTrend")

    def kernel_spec(self) -> KernelSpec:
        family = self.kernel.get("family", _DEFAULT_KERNEL.get(self.kind, "szego"))
        return KernelSpec(family, self.d, self.kernel.get("a", 0.0))

    def cells(self) -> list[tuple[int, int]]:
        return [(depth, t) for depth in self.depths for t in range(self.trials)]

    def seed_for(self, depth: int, trial: int) -> int:
        return derive_seed(self.base_seed, self.id, depth, trial)


@dataclass(frozen=True)
class TrialResult:
    experiment: str
    kind: str
    depth: int
    trial: int
    seed: int
    metrics: dict
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps({"experiment": self.experiment, "kind": self.kind, "depth": self.depth,
                           "trial": self.trial, "seed": self.seed, "metrics": self.metrics,
                           "error": self.error}, sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, line: str) -> "TrialResult":
        row = json.loads(line)
        return cls(row["experiment"], row["kind"], row["depth"], row["trial"], row["seed"],
                   row["metrics"], row.get("error"))


# -- per-kind trial bodies ---------------------------------------------------

def _norm_metrics(cfg: ExperimentConfig, depth: int, seed: int) -> dict:
    seq = sample(cfg.profile_at(depth), cfg.placement, seed)
    p = cfg.params
    est = gram_norm(cfg.kernel_spec(), seq, method=p["norm_method"], tol=p["tol"],
                    dense_cap=p["dense_cap"], seed=derive_seed(seed, "norm"))
    return {"points": len(seq), "norm": est.value, "converged": est.converged}


def _separation_metrics(cfg: ExperimentConfig, depth: int, seed: int) -> dict:
    seq = sample(cfg.profile_at(depth), cfg.placement, seed)
    p = cfg.params
    events = rectangle_collisions(seq, p["M"])
    beyond = sum(1 for e in events if e.region.degree > p["beyond"])
    return {"points": len(seq), "collisions": len(events), "collisions_beyond": beyond,
            "clusters": cluster_count(seq, p["M"], p["l"])}


def _occupancy_metrics(cfg: ExperimentConfig, depth: int, seed: int) -> dict:
    N = 10 ** depth
    n = round(N ** cfg.params["n_exponent"])
    pb = OccupancyProblem(n, N, cfg.params["r"])
    return {"N": N, "n": n, "p_r": pb.p_r, "prob_one": exact_prob(pb, 1), "ratio": ratio_check(pb)}


def _chernoff_metrics(cfg: ExperimentConfig, depth: int, seed: int) -> dict:
    p = cfg.params
    L = depth
    norms = frame_norm_samples(p["radius"], p["points"], L, p["samples"], seed)
    mu = float(expected_frame_diagonal(np.full((p["points"], 1), p["radius"]), L).max())
    out = {"mu": mu, "mean_norm": float(norms.mean())}
    for delta in p["deltas"]:
        tail = float(np.mean(norms >= (1 + delta) * mu))
        out[f"tail_{delta:g}"] = tail
        out[f"bound_{delta:g}"] = chernoff_bound(ChernoffParams(float(delta), mu, L + 1))
    return out


def _entry_metrics(cfg: ExperimentConfig, depth: int, seed: int) -> dict:
    d = cfg.d
    prof = CountingProfile.from_table({(depth,) + (0,) * (d - 1): 2}, d)
    radii = radii_from_profile(prof, UNIFORM_IN_BAND, seed)
    rn = np.array(radii[0][1], dtype=float).reshape(-1)
    rj = np.array(radii[1][1], dtype=float).reshape(-1)
    mean, se = mc_expected_sq_entry(KernelSpec.szego(d), rn, rj, cfg.params["samples"],
                                    derive_seed(seed, "entry"))
    exact = expected_sq_entry_szego(rn, rj)
    return {"mc_mean": mean, "mc_se": se, "exact": exact.value, "displayed": exact.displayed,
            "dyadic": exact.dyadic, "zscore": (mean - exact.value) / se if se > 0 else 0.0}


def _bloch_metrics(cfg: ExperimentConfig, depth: int, seed: int) -> dict:
    prof = cfg.profile_at(depth)
    seq = sample(prof, cfg.placement, seed)
    verdict = bloch_profile_classifier(prof)
    out = {"points": len(seq), "almost_surely": verdict.verdict == ALMOST_SURELY,
           "series_partial": float(verdict.partial_sums[-1]),
           "clusters": cluster_count(seq, cfg.params["M"], cfg.params["l"])}
    for g in cfg.params["gammas"]:
        out[f"onebox_{g:.2f}"] = onebox_constant(seq, float(g))
    return out


_BODIES = {
    "CarlesonTrend": _norm_metrics, "BallTrend": _norm_metrics, "DirichletTrend": _norm_metrics,
    "SeparationLaw": _separation_metrics, "OccupancyRatio": _occupancy_metrics,
    "ChernoffTail": _chernoff_metrics, "ExpectedEntry": _entry_metrics, "BlochLaw": _bloch_metrics,
}


def run_trial(cfg: ExperimentConfig, depth: int, trial: int) -> TrialResult:
    """One cell, reproducible from (config, depth, trial) alone.  Caps become recorded failures."""
    seed = cfg.seed_for(depth, trial)
    try:
        metrics = _BODIES[cfg.kind](cfg, depth, seed)
        return TrialResult(cfg.id, cfg.kind, depth, trial, seed, metrics)
    except (ResourceLimitError, NumericError) as exc:
        return TrialResult(cfg.id, cfg.kind, depth, trial, seed, {}, f"{type(exc).__name__}: {exc}")


# -- persistence -----------------------------------------------------------------

def index_path(path) -> Path:
    return Path(str(path) + ".idx")


def _recover(path: Path) -> dict:
    """Completed cells from the index, after cutting any unindexed tail off the results file."""
    done: dict = {}
    idx = index_path(path)
    if not path.exists():
        idx.unlink(missing_ok=True)
        return done
    data = path.read_bytes()
    end = 0
    if idx.exists():
        for line in idx.read_text().splitlines():
            parts = line.split()
            if len(parts) != 4:
                break
            depth, trial, offset, length = map(int, parts)
            if offset != end or offset + length > len(data):
                break
            try:
                row = TrialResult.from_json(data[offset:offset + length].decode())
            except (ValueError, KeyError):
                break
            done[(depth, trial)] = row
            end = offset + length
    with open(path, "r+b") as fh:
        fh.truncate(end)
    _rewrite_index(path, done)
    return done


def _rewrite_index(path: Path, done: dict):
    offset = 0
    lines = []
    for (depth, trial), row in done.items():
        n = len(row.to_json().encode()) + 1
        lines.append(f"{depth} {trial} {offset} {n}\n")
        offset += n
    index_path(path).write_text("".join(lines))


class _Writer:
    """Single writer: appends a row, syncs, then records its byte range in the index."""

    def __init__(self, path: Path):
        self.path = path
        self.fh = open(path, "ab")
        self.idx = open(index_path(path), "a")

    def write(self, row: TrialResult):
        payload = (row.to_json() + "\n").encode()
        offset = self.fh.tell()
        self.fh.write(payload)
        self.fh.flush()
        os.fsync(self.fh.fileno())
        self.idx.write(f"{row.depth} {row.trial} {offset} {len(payload)}\n")
        self.idx.flush()

    def close(self):
        self.fh.close()
        self.idx.close()


def run_experiment(cfg: ExperimentConfig, out=None, threads: int = 1,
                   limit: int | None = None) -> list[TrialResult]:
    """Run every missing (depth, trial) cell and return all rows in (depth, trial) order.

    ``limit`` caps how many new cells are computed in this call, which lets
    callers stage a campaign (and tests simulate an interruption).
    """
    target = out if out is not None else cfg.output
    done: dict = {}
    writer = None
    if target is not None:
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        done = _recover(path)
        writer = _Writer(path)
    todo = [c for c in cfg.cells() if c not in done]
    if limit is not None:
        todo = todo[:limit]
    results = dict(done)
    try:
        with cf.ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            futures = [pool.submit(run_trial, cfg, depth, trial) for depth, trial in todo]
            # futures are consumed in submission order, so rows land in canonical order
            for fut in futures:
                row = fut.result()
                results[(row.depth, row.trial)] = row
                if writer is not None:
                    writer.write(row)
    finally:
        if writer is not None:
            writer.close()
    return [results[c] for c in cfg.cells() if c in results]


def load_results(path) -> list[TrialResult]:
    return [TrialResult.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


def canonical_payload(rows: list[TrialResult]) -> bytes:
    """Rows sorted by (depth, trial), one JSON object per line."""
    ordered = sorted(rows, key=lambda r: (r.depth, r.trial))
    return "".join(r.to_json() + "\n" for r in ordered).encode()


# -- summaries -----------------------------------------------------------------------

STATS = ("median", "q1", "q3")


@dataclass
class Summary:
    depths: list
    metrics: dict            # name -> stat -> list aligned with depths
    slopes: dict             # name -> slope of log(median) per depth unit, or None
    flags: dict              # name -> "ok" | "single_depth" | "nonpositive"
    failures: list = field(default_factory=list)   # failed trials per depth

    def iqr(self, name: str) -> list:
        m = self.metrics[name]
        return [b - a for a, b in zip(m["q1"], m["q3"])]

    def to_dict(self) -> dict:
        return {"depths": self.depths, "metrics": self.metrics, "slopes": self.slopes,
                "flags": self.flags, "failures": self.failures}

    @classmethod
    def from_dict(cls, data: dict) -> "Summary":
        return cls(data["depths"], data["metrics"], data["slopes"], data["flags"], data.get("failures", []))


def _numeric(v) -> bool:
    return isinstance(v, (int, float, bool)) and not isinstance(v, str)


def summarize(results: list[TrialResult]) -> Summary:
    """Per-depth median and quartiles of every numeric metric plus log-linear trend slopes."""
    if not results:
        raise InvalidInputError("no results to summarize")
    depths = sorted({r.depth for r in results})
    names = sorted({k for r in results for k, v in r.metrics.items() if _numeric(v)})
    metrics, slopes, flags = {}, {}, {}
    for name in names:
        stats = {s: [] for s in STATS}
        for depth in depths:
            vals = np.array([float(r.metrics[name]) for r in results
                             if r.depth == depth and name in r.metrics and _numeric(r.metrics[name])])
            q1, med, q3 = np.percentile(vals, [25, 50, 75]) if len(vals) else (math.nan,) * 3
            stats["median"].append(float(med))
            stats["q1"].append(float(q1))
            stats["q3"].append(float(q3))
        metrics[name] = stats
        med = np.array(stats["median"])
        if len(depths) < 2:
            slopes[name], flags[name] = None, "single_depth"
        elif not np.all(med > 0):
            slopes[name], flags[name] = None, "nonpositive"
        else:
            slopes[name] = float(np.polyfit(np.array(depths, dtype=float), np.log(med), 1)[0])
            flags[name] = "ok"
    failures = [sum(1 for r in results if r.depth == d and r.error) for d in depths]
    return Summary(depths, metrics, slopes, flags, failures)


def emit_plotdata(summary: Summary, prefix) -> dict:
    """Write <prefix>.csv (one row per depth), <prefix>.json and <prefix>.schema.json."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(summary.metrics)
    header = ["depth"] + [f"{n}:{s}" for n in names for s in STATS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, depth in enumerate(summary.depths):
        w.writerow([depth] + [repr(summary.metrics[n][s][i]) for n in names for s in STATS])
    paths = {"csv": prefix.with_suffix(".csv"), "json": prefix.with_suffix(".json"),
             "schema": prefix.with_suffix(".schema.json")}
    paths["csv"].write_text(buf.getvalue())
    paths["json"].write_text(json.dumps(summary.to_dict(), sort_keys=True, indent=1))
    schema = {"columns": [{"name": "depth", "type": "integer", "description": "truncation depth"}]
              + [{"name": f"{n}:{s}", "type": "number", "description": f"{s} of {n} across trials"}
                 for n in names for s in STATS],
              "json": {"depths": "list of depths", "metrics": "metric -> statistic -> values per depth",
                       "slopes": "least-squares slope of log(median) against depth, null if undefined",
                       "flags": "ok, single_depth or nonpositive",
                       "failures": "failed trials per depth"}}
    paths["schema"].write_text(json.dumps(schema, indent=1))
    return paths


def read_plotdata_json(path) -> Summary:
    return Summary.from_dict(json.loads(Path(path).read_text()))


def read_plotdata_csv(path) -> tuple[list, dict]:
    """(depths, metric -> stat -> values) from an emitted CSV."""
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    header, body = rows[0], rows[1:]
    depths = [int(r[0]) for r in body]
    metrics: dict = {}
    for j, col in enumerate(header[1:], start=1):
        name, stat = col.rsplit(":", 1)
        metrics.setdefault(name, {})[stat] = [float(r[j]) for r in body]
    return depths, metrics
