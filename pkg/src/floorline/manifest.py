"""Experiment manifests: validation, stage execution and CSV emission.

A manifest is a JSON object::

    {"name": "...", "seed": 0, "code": {...}, "decoder": {...},
     "stages": {"census": {...}, "eigen": {...}, "formula": {...},
                "importance_sampling": {...}, "trace": {...}, "dots": {}}}

Each stage writes its CSV files into the output directory and adds an entry
to ``summary.json``.
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .absorption import classify_set, enumerate_sets, induced_topology
from .code_model import (build_qc_matrix, ieee_proxy, load_alist, tanner_155)
from .decoder import DecoderConfig, decode
from .dynamics import (ErrorFloorInputs, build_model, dominant_eigen, noise_variance,
                       p_as_basic, p_as_matrix, p_as_refined, topology_coefficients)
from .fixtures import ieee_88_matrix, pairs_matrix, tanner_82_topology

KNOWN_STAGES = ("census", "eigen", "formula", "importance_sampling", "trace", "dots")
BUILTIN_CODES = {"tanner155": tanner_155, "ieee-proxy": ieee_proxy}
FORMULAS = ("basic", "refined", "matrix")


class ManifestError(ValueError):
    """Invalid manifest or command input (exit status 2)."""


class StageError(RuntimeError):
    """A pipeline stage failed while running (exit status 3)."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# ------------------------------------------------------------------ plot data

@dataclass
class Curve:
    label: str
    columns: tuple
    rows: list = field(default_factory=list)


def emit_plotdata(families: dict, directory) -> list[Path]:
    """Write one CSV per curve family.

    ``families`` maps a family name to a list of :class:`Curve` objects that
    share columns.  Every file starts with a ``#`` line naming the columns;
    the first column is the series label.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for family, curves in families.items():
        curves = list(curves)
        if not curves:
            continue
        cols = tuple(curves[0].columns)
        if any(tuple(c.columns) != cols for c in curves):
            raise ValueError(f"curves in family {family!r} disagree on columns")
        path = directory / f"{family}.csv"
        with path.open("w", newline="") as fh:
            fh.write("# columns: series," + ",".join(cols) + "\n")
            w = csv.writer(fh)
            w.writerow(("series",) + cols)
            for c in curves:
                for r in c.rows:
                    w.writerow((c.label,) + tuple(_fmt(v) for v in r))
        paths.append(path)
    return paths


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, columns, rows, comment=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("# " + (comment or "columns: " + ",".join(columns)) + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


# --------------------------------------------------------------- parsing help

def parse_snr(spec) -> list[float]:
    """``a:b:step`` (inclusive), a comma list, a number or a list."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, (list, tuple)):
        return [float(x) for x in spec]
    text = str(spec).strip()
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            a, b, step = parts
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            return [round(a + k * step, 10) for k in range(count)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ManifestError(f"cannot parse SNR grid {spec!r}; use a:b:step or a,b,c") from None


def load_code(spec, base: Path | None = None):
    """Code from a builtin name, an alist path, or a QC shift table."""
    if isinstance(spec, str):
        if spec in BUILTIN_CODES:
            return BUILTIN_CODES[spec]()
        spec = {"alist": spec}
    if not isinstance(spec, dict):
        raise ManifestError("code must be a builtin name, an alist path or an object")
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in BUILTIN_CODES:
            raise ManifestError(f"unknown builtin code {name!r}; known: {sorted(BUILTIN_CODES)}")
        return BUILTIN_CODES[name]()
    if "alist" in spec:
        path = _resolve(spec["alist"], base)
        if not path.exists():
            raise ManifestError(f"alist file not found: {path}")
        return load_alist(path)
    if "shifts" in spec and "p" in spec:
        return build_qc_matrix(spec["shifts"], int(spec["p"]), spec.get("label", ""))
    raise ManifestError("code object needs 'builtin', 'alist' or 'shifts' + 'p'")


def _resolve(path, base):
    p = Path(path)
    if not p.is_absolute() and base is not None and not p.exists():
        p = base / p
    return p


def load_topology(spec, matrix=None, base: Path | None = None):
    """Set topology plus the absorption-set record (when built from a code).

    Accepted forms: ``"fixture:tanner82"``, ``"fixture:ieee88"``, a list of
    variable indices (needs ``matrix``), a path to a JSON file, or an object
    with ``variables`` (+ optional ``code``) or ``pairs`` + ``ext_degree``.
    """
    if isinstance(spec, str):
        if spec == "fixture:tanner82":
            return tanner_82_topology(), None
        if spec == "fixture:ieee88":
            H = ieee_88_matrix()
            s = classify_set(H, range(8))
            return induced_topology(s, H), s
        text = spec.strip()
        if text.startswith("{") or text.startswith("["):
            spec = json.loads(text)
        elif all(t.strip().isdigit() for t in text.split(",")):
            spec = [int(t) for t in text.split(",")]
        else:
            path = _resolve(text, base)
            if not path.exists():
                raise ManifestError(f"set file not found: {path}")
            spec = json.loads(path.read_text())
            base = path.parent
    if isinstance(spec, list):
        spec = {"variables": spec}
    if not isinstance(spec, dict):
        raise ManifestError("set must be a fixture name, an index list or an object")
    if "pairs" in spec:
        pairs = spec["pairs"]
        n_vars = int(spec.get("n_vars", 1 + max(max(p) for p in pairs)))
        ext = spec.get("ext_degree", [0] * n_vars)
        H = pairs_matrix(pairs, n_vars, ext)
        s = classify_set(H, range(n_vars))
        return induced_topology(s, H), s
    if "variables" in spec:
        H = load_code(spec["code"], base) if "code" in spec else matrix
        if H is None:
            raise ManifestError("a variable list needs a code")
        s = classify_set(H, spec["variables"])
        return induced_topology(s, H), s
    raise ManifestError("set object needs 'variables' or 'pairs'")


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).parent, capture_output=True, text=True,
                             timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ------------------------------------------------------------------ manifests

def bundled_manifests() -> list[str]:
    root = resources.files("floorline") / "data"
    return sorted(p.name[: -len(".json")] for p in root.iterdir()
                  if p.name.endswith(".json") and not p.name.endswith("_topology.json"))


def read_manifest(source) -> tuple[dict, Path | None]:
    """Load a manifest from a path or a bundled name."""
    if isinstance(source, dict):
        return source, None
    path = Path(source)
    if not path.exists():
        bundled = resources.files("floorline") / "data" / f"{source}.json"
        if bundled.is_file():
            path = Path(str(bundled))
        else:
            raise ManifestError(f"manifest not found: {source} "
                                f"(bundled: {', '.join(bundled_manifests())})")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    return data, path.parent


def validate_manifest(m) -> dict:
    if not isinstance(m, dict):
        raise ManifestError("manifest must be a JSON object")
    missing = [k for k in ("name", "stages") if k not in m]
    stages = m.get("stages") or {}
    if "stages" in m and not stages:
        missing.append("stages (empty)")
    needs_code = any(k in stages for k in ("census", "importance_sampling", "trace", "dots"))
    if needs_code and "code" not in m:
        missing.append("code")
    if missing:
        raise ManifestError("manifest is missing required fields: " + ", ".join(missing))
    unknown = [k for k in stages if k not in KNOWN_STAGES]
    if unknown:
        raise ManifestError(f"unknown stages {unknown}; known: {list(KNOWN_STAGES)}")
    if "seed" in m and not isinstance(m["seed"], int):
        raise ManifestError("seed must be an integer")
    return m


def run_manifest(source, output_dir=None, n_jobs=None) -> dict:
    """Execute every stage of a manifest and return the summary dictionary."""
    manifest, base = read_manifest(source)
    validate_manifest(manifest)
    out = Path(output_dir or manifest.get("output_dir") or f"floorline-out/{manifest['name']}")
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(manifest, base, out, n_jobs)
    summary = {"name": manifest["name"], "version": git_describe(), "manifest": manifest,
               "stages": {}}
    for stage in KNOWN_STAGES:
        if stage not in manifest["stages"]:
            continue
        t0 = time.perf_counter()
        try:
            result = _STAGES[stage](ctx, manifest["stages"][stage] or {})
        except ManifestError:
            raise
        except Exception as exc:            # noqa: BLE001 - reported with stage identity
            raise StageError(stage, exc) from exc
        result["seconds"] = round(time.perf_counter() - t0, 3)
        summary["stages"][stage] = result
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default))
    return summary


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


class _Context:
    def __init__(self, manifest, base, out, n_jobs):
        self.manifest = manifest
        self.base = base
        self.out = out
        self.n_jobs = n_jobs
        self.seed = int(manifest.get("seed", 0))
        self._matrix = None
        self.census = {}

    @property
    def matrix(self):
        if self._matrix is None:
            if "code" not in self.manifest:
                raise ManifestError("this stage needs a code")
            self._matrix = load_code(self.manifest["code"], self.base)
        return self._matrix

    def decoder(self, overrides=None) -> DecoderConfig:
        cfg = dict(self.manifest.get("decoder", {}))
        cfg.update(overrides or {})
        try:
            return DecoderConfig(**cfg)
        except TypeError as exc:
            raise ManifestError(f"bad decoder config: {exc}") from None

    def topology(self, spec):
        if isinstance(spec, str) and spec.startswith("census:"):
            a, b = (int(x) for x in spec.split(":", 1)[1].split(","))
            sets = self.census.get((a, b))
            if not sets:
                raise ManifestError(f"no ({a},{b}) sets from an earlier census stage")
            return induced_topology(sets[0], self.matrix), sets[0]
        return load_topology(spec, self._matrix if "code" not in self.manifest else self.matrix,
                             self.base)


def _stage_census(ctx, cfg):
    queries = cfg.get("queries") or [cfg]
    rows, total = [], {}
    exhaustive = True
    lines = []
    for q in queries:
        if "a_max" not in q or "b_max" not in q:
            raise ManifestError("census query needs a_max and b_max")
        qc = q.get("qc", "auto")
        census = enumerate_sets(ctx.matrix, int(q["a_max"]), int(q["b_max"]),
                                qc_symmetry=_qc_arg(qc, ctx.matrix), n_jobs=ctx.n_jobs,
                                max_nodes=q.get("max_nodes"))
        exhaustive &= census.exhaustive
        for key, sets in census.sets.items():
            if key not in total:
                total[key] = len(sets)
                ctx.census[key] = sets
                lines.extend(s.to_dict() for s in sets)
        rows.extend(census.table())
    table = [(a, b, "yes", total[(a, b)]) for (a, b) in sorted(total)]
    write_csv(ctx.out / "census.csv", ("a", "b", "exists", "multiplicity"), table)
    with (ctx.out / "sets.jsonl").open("w") as fh:
        for d in lines:
            fh.write(json.dumps(d, default=_json_default) + "\n")
    return {"multiplicities": {f"{a},{b}": m for (a, b), m in sorted(total.items())},
            "exhaustive": exhaustive}


def _qc_arg(qc, matrix):
    if qc in (None, "none", False):
        return None
    if qc == "auto":
        return matrix.meta.p if matrix.meta is not None else None
    return int(qc)


def _stage_eigen(ctx, cfg):
    if "set" not in cfg:
        raise ManifestError("eigen stage needs 'set'")
    topo, s = ctx.topology(cfg["set"])
    model = build_model(topo)
    mu, v = dominant_eigen(model)
    coeffs = topology_coefficients(model)
    write_csv(ctx.out / "eigen.csv", ("edge", "owner", "v_max"),
              [(e + 1, int(topo.edge_owner[e]), float(v[e])) for e in range(len(v))],
              comment=f"mu_max={mu!r}; columns: edge,owner,v_max")
    return {"signature": [topo.a, topo.b], "mu_max": mu, "v_max": v.tolist(),
            "coefficients": {"A": coeffs.A, "B": coeffs.B, "C": coeffs.C, "D": coeffs.D}}


def formula_curves(topo, multiplicity, n, rate, d_v, d_c, taus, snrs, iterations,
                   formulas=FORMULAS, gain_mode="density", bins=None):
    """BER curves keyed by (formula, tau); each a list of (snr, P_AS, BER)."""
    from .density import DEFAULT_HALF_BINS, evolve

    model = build_model(topo)
    dominant_eigen(model)
    coeffs = topology_coefficients(model)
    curves = {(f, float(t)): [] for f in formulas for t in taus}
    for tau in taus:
        for snr in snrs:
            s2 = noise_variance(snr, rate)
            res = evolve(d_v, d_c, s2, float(tau), iterations,
                         bins // 2 if bins else DEFAULT_HALF_BINS)
            inp = ErrorFloorInputs(2.0 / s2, res.m_ext, res.gains(gain_mode), float(tau))
            for f in formulas:
                if f == "basic":
                    p = p_as_basic(coeffs, model.mu_max, inp)
                elif f == "refined":
                    p = p_as_refined(coeffs, model.mu_max, inp)
                elif f == "matrix":
                    p = p_as_matrix(model, inp)
                else:
                    raise ManifestError(f"unknown formula {f!r}")
                ber = min(1.0, multiplicity * topo.a / n * p)
                curves[(f, float(tau))].append((snr, p, ber))
    return curves


def _stage_formula(ctx, cfg):
    for key in ("set", "snr"):
        if key not in cfg:
            raise ManifestError(f"formula stage needs {key!r}")
    topo, _ = ctx.topology(cfg["set"])
    matrix = ctx._matrix if "code" not in ctx.manifest else ctx.matrix
    n = int(cfg.get("n", matrix.n_cols if matrix is not None else 0))
    if n <= 0:
        raise ManifestError("formula stage needs block length 'n' without a code")
    rate = float(cfg["rate"]) if "rate" in cfg else _rate(matrix)
    mult = cfg.get("multiplicity", 1)
    if isinstance(mult, str) and mult == "census":
        mult = len(ctx.census.get((topo.a, topo.b), [])) or 1
    taus = cfg.get("taus", [ctx.decoder().clip])
    curves = formula_curves(topo, int(mult), n, rate, int(cfg.get("d_v", 3)),
                            int(cfg.get("d_c", 5)), taus, parse_snr(cfg["snr"]),
                            int(cfg.get("iterations", ctx.decoder().max_iters)),
                            cfg.get("formulas", FORMULAS), cfg.get("gain_mode", "density"),
                            cfg.get("bins"))
    family = [Curve(f"{f}-tau{t:g}", ("EbN0_dB", "P_AS", "BER_estimate"), rows)
              for (f, t), rows in curves.items()]
    emit_plotdata({"formula": family}, ctx.out)
    return {"series": [c.label for c in family]}


def _rate(matrix):
    from .sampling import code_rate
    if matrix is None:
        raise ManifestError("rate needed when no code is given")
    return code_rate(matrix)


def _stage_is(ctx, cfg):
    from .sampling import BiasSpec, run_campaign

    for key in ("sets", "snr", "samples"):
        if key not in cfg:
            raise ManifestError(f"importance_sampling stage needs {key!r}")
    sets = cfg["sets"]
    if isinstance(sets, str) and sets.startswith("census:"):
        a, b = (int(x) for x in sets.split(":", 1)[1].split(","))
        sets = [s.variables for s in ctx.census.get((a, b), [])]
        if not sets:
            raise ManifestError(f"no ({a},{b}) sets from an earlier census stage")
    bias = BiasSpec(tuple(sets), float(cfg.get("shift", 0.0)), cfg.get("selection", "round-robin"))
    taus = cfg.get("taus", [ctx.decoder().clip])
    snrs = parse_snr(cfg["snr"])
    family = []
    for tau in taus:
        dec = ctx.decoder({"clip": float(tau), **({"bits": cfg["bits"]} if "bits" in cfg else {})})
        res = run_campaign(ctx.matrix, dec, snrs, bias, int(cfg["samples"]), ctx.seed,
                           cfg.get("rate"), n_jobs=ctx.n_jobs)
        family.append(Curve(f"is-tau{float(tau):g}",
                            ("EbN0_dB", "BER", "FER", "var", "rel_halfwidth", "raw_errors"),
                            [tuple(r.row().values()) for r in res]))
    emit_plotdata({"importance_sampling": family}, ctx.out)
    return {"series": [c.label for c in family]}


def _stage_trace(ctx, cfg):
    if "set" not in cfg:
        raise ManifestError("trace stage needs 'set'")
    _, s = ctx.topology(cfg["set"])
    if s is None:
        raise ManifestError("trace stage needs a set drawn from the code")
    m = float(cfg.get("m_lambda", 4.0))
    H = ctx.matrix
    llr = np.full(H.n_cols, m)
    llr[list(s.variables)] = -m
    family, outcome = [], {}
    for tau in cfg.get("taus", [ctx.decoder().clip]):
        dec = ctx.decoder({"clip": float(tau), "max_iters": int(cfg.get("iterations", 50)),
                           "early_stop": True})
        res = decode(H, llr, dec, track=s.variables)
        rows = [(it + 1, v, float(res.trace[it, j]))
                for it in range(res.trace.shape[0]) for j, v in enumerate(s.variables)]
        family.append(Curve(f"tau{float(tau):g}", ("iteration", "node", "LLR"), rows))
        outcome[f"{float(tau):g}"] = {"converged": res.converged,
                                      "iterations": res.iterations_used}
    emit_plotdata({"trace": family}, ctx.out)
    return {"outcome": outcome}


def _stage_dots(ctx, cfg):
    dots = ctx.matrix.dots()
    write_csv(ctx.out / "dots.csv", ("row", "col"), dots.tolist())
    return {"ones": int(len(dots))}


_STAGES = {"census": _stage_census, "eigen": _stage_eigen, "formula": _stage_formula,
           "importance_sampling": _stage_is, "trace": _stage_trace, "dots": _stage_dots}
