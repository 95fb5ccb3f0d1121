"""Command-line front end: ``floorline <command> ...``.

Exit status 0 on success, 2 for invalid input, 3 when a computation fails.
The worker count for parallel stages comes from ``FLOORLINE_WORKERS``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .manifest import (FORMULAS, ManifestError, StageError, bundled_manifests, load_code,
                       load_topology, parse_snr, run_manifest, write_csv)

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE = 0, 2, 3


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floorline", description="LDPC error-floor toolkit")
    p.add_argument("--version", action="version", version=f"floorline {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    code = sub.add_parser("code", help="build or inspect parity-check matrices")
    csub = code.add_subparsers(dest="action", required=True)
    b = csub.add_parser("build", help="QC matrix from a shift table")
    b.add_argument("--shifts", required=True, help="JSON or whitespace table of shifts")
    b.add_argument("--p", type=int, required=True, help="circulant size")
    b.add_argument("--out", help="alist output path (default stdout)")
    i = csub.add_parser("info", help="n, m, rank, girth and degree profile")
    i.add_argument("code", help="alist path or builtin name (tanner155, ieee-proxy)")

    d = sub.add_parser("decode", help="decode received LLRs")
    d.add_argument("--code", required=True)
    d.add_argument("--algo", default="sp", choices=["sp", "cms"])
    d.add_argument("--clip", type=float, default=10.0)
    d.add_argument("--iters", type=int, default=50)
    d.add_argument("--bits", type=int)
    d.add_argument("--llr-file", required=True, help="one word per line, whitespace separated")
    d.add_argument("--track", type=_ints, help="variables to trace (0-based)")
    d.add_argument("--trace-csv", help="write iteration,variable,LLR rows here")

    s = sub.add_parser("sets", help="absorption-set tools")
    ssub = s.add_subparsers(dest="action", required=True)
    e = ssub.add_parser("enumerate", help="exhaustive census up to (amax, bmax)")
    e.add_argument("--code", required=True)
    e.add_argument("--amax", type=int, required=True)
    e.add_argument("--bmax", type=int, required=True)
    e.add_argument("--qc", default="auto", help="circulant size, 'auto' or 'none'")
    e.add_argument("--max-nodes", type=int, help="search budget (result flagged partial)")
    e.add_argument("--out", help="write JSON lines here instead of stdout")
    c = ssub.add_parser("check", help="classify one variable set")
    c.add_argument("--code", required=True)
    c.add_argument("--vars", type=_ints, required=True, help="0-based variable indices")

    a = sub.add_parser("analyze", help="error-floor formulas, or 'analyze eigen'")
    a.add_argument("mode", nargs="?", choices=["eigen"], help="print mu_max and v_max only")
    a.add_argument("--code")
    a.add_argument("--set", required=True,
                   help="indices, JSON file/object, or fixture:tanner82 / fixture:ieee88")
    a.add_argument("--iters", type=int, default=50)
    a.add_argument("--clip", type=float, default=10.0)
    a.add_argument("--snr", default="2:6:0.5")
    a.add_argument("--formula", default="refined", choices=list(FORMULAS))
    a.add_argument("--dv", type=int, default=3)
    a.add_argument("--dc", type=int, default=5)
    a.add_argument("--rate", type=float, help="code rate (default from the code)")
    a.add_argument("--n", type=int, help="block length (default from the code)")
    a.add_argument("--multiplicity", type=int, default=1)
    a.add_argument("--gain-mode", default="density", choices=["density", "mean-field"])

    de = sub.add_parser("de", help="density evolution of a regular ensemble")
    de.add_argument("--dv", type=int, default=3)
    de.add_argument("--dc", type=int, default=5)
    de.add_argument("--snr", type=float, required=True, help="Eb/N0 in dB")
    de.add_argument("--clip", type=float, default=10.0)
    de.add_argument("--iters", type=int, default=10)
    de.add_argument("--rate", type=float, help="default 1 - dv/dc")
    de.add_argument("--bins", type=int, default=4096, help="grid intervals across [-clip, clip]")
    de.add_argument("--gain-mode", default="density", choices=["density", "mean-field"])

    s_ = sub.add_parser("is", help="importance-sampling campaign")
    s_.add_argument("--code", required=True)
    s_.add_argument("--algo", default="cms", choices=["sp", "cms"])
    s_.add_argument("--clip", type=float, default=10.0)
    s_.add_argument("--iters", type=int, default=50)
    s_.add_argument("--bits", type=int)
    s_.add_argument("--sets", required=True, help="JSON (lines) file of sets or a JSON list")
    s_.add_argument("--shift", type=float, default=0.0)
    s_.add_argument("--snr", required=True)
    s_.add_argument("--samples", type=int, default=10000)
    s_.add_argument("--seed", type=int, default=0)
    s_.add_argument("--rate", type=float)
    s_.add_argument("--out", help="CSV path; the campaign JSON is written next to it")

    r = sub.add_parser("run", help="execute an experiment manifest")
    r.add_argument("manifest", help="path or bundled name: " + ", ".join(bundled_manifests()))
    r.add_argument("--out-dir")
    return p


# ------------------------------------------------------------------- commands

def _cmd_code(args):
    from .code_model import alist_text, build_qc_matrix, girth, gf2_rank, save_alist

    if args.action == "build":
        text = Path(args.shifts).read_text() if Path(args.shifts).exists() else args.shifts
        try:
            shifts = json.loads(text)
        except json.JSONDecodeError:
            shifts = [[int(x) for x in line.split()] for line in text.splitlines() if line.strip()]
        H = build_qc_matrix(shifts, args.p)
        if args.out:
            save_alist(H, args.out)
        else:
            sys.stdout.write(alist_text(H))
        return
    H = load_code(args.code)
    info = {"n": H.n_cols, "m": H.n_rows, "rank": gf2_rank(H), "girth": girth(H)}
    info["degree_profile"] = H.degree_profile()
    info["regular"] = H.is_regular()
    print(json.dumps(info))


def _read_llrs(path):
    p = Path(path)
    if not p.exists():
        raise ManifestError(f"LLR file not found: {path}")
    rows = [[float(x) for x in line.replace(",", " ").split()]
            for line in p.read_text().splitlines() if line.strip() and not line.startswith("#")]
    if not rows:
        raise ManifestError("LLR file is empty")
    return np.array(rows)


def _cmd_decode(args):
    from .decoder import DecoderConfig, decode_batch

    H = load_code(args.code)
    llrs = _read_llrs(args.llr_file)
    if llrs.shape[1] != H.n_cols:
        raise ManifestError(f"LLR rows have length {llrs.shape[1]}, code has n = {H.n_cols}")
    cfg = DecoderConfig(args.algo, args.iters, args.clip, args.bits)
    out = decode_batch(H, llrs, cfg, track=args.track)
    words = []
    for k in range(len(out)):
        o = out[k]
        words.append({"converged": o.converged, "iterations": o.iterations_used,
                      "hard_decisions": o.decoded.astype(int).tolist()})
    if args.trace_csv and args.track:
        rows = []
        for k in range(len(out)):
            tr = out[k].trace
            rows += [(k, it + 1, v, float(tr[it, j])) for it in range(tr.shape[0])
                     for j, v in enumerate(out.tracked)]
        write_csv(args.trace_csv, ("word", "iteration", "variable", "accumulated_llr"), rows)
    print(json.dumps(words[0] if len(words) == 1 else words))


def _cmd_sets(args):
    from .absorption import NotAbsorbingError, classify_set, enumerate_sets

    H = load_code(args.code)
    if args.action == "check":
        if any(not 0 <= v < H.n_cols for v in args.vars):
            raise ManifestError("variable index out of range")
        try:
            s = classify_set(H, args.vars)
        except NotAbsorbingError as exc:
            print(json.dumps({"absorbing": False, "reason": str(exc)}))
            return
        d = s.to_dict()
        d.update(absorbing=True, unsatisfied_checks=list(s.unsatisfied_checks))
        print(json.dumps(d))
        return
    qc = args.qc
    if qc == "auto":
        qc = H.meta.p if H.meta is not None else None
    elif qc == "none":
        qc = None
    else:
        qc = int(qc)
    census = enumerate_sets(H, args.amax, args.bmax, qc_symmetry=qc, max_nodes=args.max_nodes)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        for key in sorted(census.sets):
            for st in census.sets[key]:
                sink.write(json.dumps(st.to_dict()) + "\n")
    finally:
        if args.out:
            sink.close()
    table_out = sys.stdout if args.out else sys.stderr
    table_out.write("# a b exists multiplicity\n")
    for row in census.table():
        table_out.write(f"# {row['a']} {'-' if row['b'] is None else row['b']} "
                        f"{'yes' if row['exists'] else 'no'} {row['multiplicity']}\n")
    if not census.exhaustive:
        table_out.write("# search budget exhausted: counts are partial\n")


def _cmd_analyze(args):
    from .dynamics import build_model, dominant_eigen
    from .manifest import formula_curves
    from .sampling import code_rate

    H = load_code(args.code) if args.code else None
    topo, _ = load_topology(args.set, H)
    if args.mode == "eigen":
        model = build_model(topo)
        mu, v = dominant_eigen(model)
        print(f"# signature ({topo.a},{topo.b})")
        print(f"mu_max,{mu!r}")
        w = csv.writer(sys.stdout)
        w.writerow(("edge", "v_max"))
        for e, x in enumerate(v):
            w.writerow((e + 1, repr(float(x))))
        return
    n = args.n or (H.n_cols if H is not None else None)
    rate = args.rate or (code_rate(H) if H is not None else None)
    if n is None or rate is None:
        raise ManifestError("give --code or both --n and --rate")
    curves = formula_curves(topo, args.multiplicity, n, rate, args.dv, args.dc, [args.clip],
                            parse_snr(args.snr), args.iters, [args.formula], args.gain_mode)
    w = csv.writer(sys.stdout)
    w.writerow(("EbN0_dB", "P_AS", "BER_estimate"))
    for snr, p, ber in curves[(args.formula, float(args.clip))]:
        w.writerow((snr, repr(p), repr(ber)))


def _cmd_de(args):
    from .density import evolve
    from .dynamics import noise_variance

    if args.bins < 2 or args.bins % 2:
        raise ManifestError("--bins must be an even number >= 2")
    rate = args.rate or 1.0 - args.dv / args.dc
    res = evolve(args.dv, args.dc, noise_variance(args.snr, rate), args.clip, args.iters,
                 args.bins // 2)
    g = res.gains(args.gain_mode)
    w = csv.writer(sys.stdout)
    w.writerow(("iteration", "m_ext", "g"))
    for i in range(1, res.iterations + 1):
        w.writerow((i, repr(float(res.m_ext[i - 1])), repr(float(g[i]))))


def _read_sets(spec):
    p = Path(spec)
    text = p.read_text() if p.exists() else spec
    text = text.strip()
    try:
        if text.startswith("["):
            items = json.loads(text)
        else:
            items = [json.loads(line) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise ManifestError(f"cannot parse sets: {exc}") from None
    return [it["variables"] if isinstance(it, dict) else it for it in items]


def _cmd_is(args):
    from .decoder import DecoderConfig
    from .sampling import BiasSpec, run_campaign

    H = load_code(args.code)
    bias = BiasSpec(tuple(_read_sets(args.sets)), args.shift)
    cfg = DecoderConfig(args.algo, args.iters, args.clip, args.bits)
    res = run_campaign(H, cfg, parse_snr(args.snr), bias, args.samples, args.seed, args.rate)
    cols = ("EbN0_dB", "BER", "FER", "var", "rel_halfwidth", "raw_errors")
    rows = [tuple(r.row().values()) for r in res]
    if args.out:
        write_csv(args.out, cols, rows)
        campaign = {"code": args.code, "decoder": cfg.to_dict(), "bias": bias.to_dict(),
                    "snr": parse_snr(args.snr), "samples": args.samples, "seed": args.seed,
                    "rate": args.rate, "version": __version__}
        Path(args.out).with_suffix(".campaign.json").write_text(json.dumps(campaign, indent=2))
    w = csv.writer(sys.stdout)
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _cmd_run(args):
    summary = run_manifest(args.manifest, args.out_dir)
    print(json.dumps({"name": summary["name"], "version": summary["version"],
                      "stages": {k: {kk: vv for kk, vv in v.items()
                                     if kk not in ("v_max",)}
                                 for k, v in summary["stages"].items()}}, default=str))


_COMMANDS = {"code": _cmd_code, "decode": _cmd_decode, "sets": _cmd_sets,
             "analyze": _cmd_analyze, "de": _cmd_de, "is": _cmd_is, "run": _cmd_run}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except StageError as exc:
        print(f"floorline: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ManifestError, ValueError, FileNotFoundError) as exc:
        print(f"floorline: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:                   # noqa: BLE001
        print(f"floorline: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
