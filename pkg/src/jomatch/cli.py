"""Command line front end: ``jomatch <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .certificate import CertParams, CertificateError, build_dual_certificate, recovery_threshold
from .driver import BIN_TOL, METHODS, RESULT_COLUMNS, run_method
from .instance import InstanceFormatError, MalformedInputError, ObjectConfig, read_instance, write_instance
from .polytope_lab import (SizeGuardError, dimension, enumerate_vertices, family_inequalities, ilp_oracle,
                           verify_facet)
from .synth import CorruptionParams, generate

log = logging.getLogger("jomatch")


# ---------------------------------------------------------------------------
# output helpers


def _emit_rows(rows: list[dict], columns, fmt: str, path: Path | None, header: dict | None = None) -> str:
    if fmt == "json":
        text = json.dumps({"config": header or {}, "rows": rows}, indent=2, default=str) + "\n"
    else:
        buf = io.StringIO()
        if header:
            for k, v in header.items():
                buf.write(f"# {k}={v}\n")
        w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        log.info("wrote %s", path)
    return text


def svg_line_chart(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str,
                   ylim: tuple[float, float] | None = None, width: int = 640, height: int = 420) -> str:
    """Minimal static SVG line plot."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    pts = [p for s in series.values() for p in s]
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = ylim if ylim else (min(ys), max(ys))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    ml, mr, mt, mb = 60, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>']
    for k in range(6):
        xv = x0 + (x1 - x0) * k / 5
        yv = y0 + (y1 - y0) * k / 5
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {mt + ph / 2})">{ylabel}</text>')
    for n, (name, s) in enumerate(series.items()):
        c = colors[n % len(colors)]
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in sorted(s))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{path}"/>')
        for x, y in s:
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{c}"/>')
        out.append(f'<text x="{ml + pw - 150}" y="{mt + 16 * (n + 1)}" fill="{c}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def parse_grid(text: str) -> list[float]:
    """``"0.1:0.2:0.9"`` (start:step:end) or a comma list."""
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("grid must be start:step:end")
        start, step, end = parts
        if step <= 0:
            raise argparse.ArgumentTypeError("grid step must be positive")
        count = int(np.floor((end - start) / step + 1e-9)) + 1
        if count < 1:
            raise argparse.ArgumentTypeError("empty grid")
        return [round(start + k * step, 10) for k in range(count)]
    vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def parse_int_list(text: str) -> list[int]:
    """``"2..50"`` expands to the standard d values in range; otherwise a comma list."""
    if ".." in text:
        lo, hi = (int(v) for v in text.split(".."))
        std = [2, 3, 5, 10, 20, 30, 40, 50, 75, 100]
        out = [v for v in std if lo <= v <= hi]
        return sorted(set(out + [lo, hi]))
    return [int(v) for v in text.split(",") if v.strip()]


def parse_sizes(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepConfig:
    n: int
    d: int
    p_obs: tuple[float, ...]
    p_true: tuple[float, ...]
    seeds: int
    methods: tuple[str, ...]
    base_seed: int = 0

    def __post_init__(self):
        if not self.p_obs or not self.p_true or not self.methods:
            raise ValueError("sweep grids must be non-empty")
        if self.seeds < 1:
            raise ValueError("seeds must be positive")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")


def _trial(task):
    n, d, p_true, p_obs, seed, methods = task
    inst = generate(CorruptionParams(n, d, p_true, p_obs, seed))
    rows = []
    done = {}
    for m in methods:
        try:
            kw = {"first": done["basic"]} if m == "double" and "basic" in done else {}
            rep = done[m] = run_method(inst, m, **kw)
            row = rep.csv_row(inst)
            row["status"] = rep.status
        except Exception as exc:  # recorded per row, the sweep continues
            row = {"n": n, "d": d, "p_true": p_true, "p_obs": p_obs, "seed": seed, "method": m,
                   "status": f"error: {exc}"}
        rows.append(row)
    return rows


def run_sweep(cfg: SweepConfig, workers: int = 1) -> tuple[list[dict], list[dict]]:
    """Per-trial rows and per-cell summary rows (recovery and tightness rates)."""
    tasks = [(cfg.n, cfg.d, pt, po, cfg.base_seed + s, cfg.methods)
             for po in cfg.p_obs for pt in cfg.p_true for s in range(cfg.seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_trial, tasks))
    else:
        results = [_trial(t) for t in tasks]
    rows = [r for rs in results for r in rs]
    summary = []
    for po in cfg.p_obs:
        for pt in cfg.p_true:
            for m in cfg.methods:
                cell = [r for r in rows if r["p_obs"] == po and r["p_true"] == pt and r["method"] == m]
                ok = [r for r in cell if r.get("status") in ("optimal", "round-limit")]
                summary.append({
                    "p_obs": po, "p_true": pt, "method": m, "trials": len(cell),
                    "recovery_rate": sum(int(r.get("recovered") or 0) for r in ok) / len(cell),
                    "tightness_rate": sum(int(r.get("is_binary") or 0) for r in ok) / len(cell),
                    "failures": len(cell) - len(ok),
                })
    return rows, summary


# ---------------------------------------------------------------------------
# subcommands


def _header(args, **extra) -> dict:
    h = {"jomatch": __version__, "command": args.command, "seed": args.seed, "bin_tol": BIN_TOL}
    h.update(extra)
    return h


def _out(args, name: str) -> Path | None:
    if args.out:
        return Path(args.out)
    if args.out_dir:
        return Path(args.out_dir) / f"{name}.{args.format}"
    return None


def cmd_gen(args) -> int:
    inst = generate(CorruptionParams(args.n, args.d, args.p_true, args.p_obs, args.seed))
    if args.out:
        write_instance(inst, args.out)
        print(f"wrote {args.out} ({len(inst.edges)} observed pairs)")
    else:
        from .instance import instance_to_dict
        json.dump(instance_to_dict(inst), sys.stdout)
        sys.stdout.write("\n")
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    kw = {"formulation": args.formulation, "backend": args.backend}
    if args.method == "basic":
        kw["probe"] = args.probe
    rep = run_method(inst, args.method, **kw)
    row = rep.csv_row(inst)
    row.update(status=rep.status, consistent=rep.is_consistent, unique=rep.unique)
    _emit_rows([row], list(RESULT_COLUMNS) + ["status", "consistent", "unique"], args.format,
               _out(args, "solve"), _header(args, instance=args.instance, method=args.method))
    return 0 if rep.status in ("optimal", "round-limit") else 3


def cmd_sweep(args) -> int:
    cfg = SweepConfig(args.n, args.d, tuple(args.p_obs), tuple(args.p_true), args.seeds,
                      tuple(args.methods), args.seed)
    header = _header(args, **{k: v for k, v in asdict(cfg).items()})
    rows, summary = run_sweep(cfg, args.threads)
    # wall times vary run to run; leaving them out keeps the sweep file reproducible byte for byte
    cols = [c for c in RESULT_COLUMNS if c != "wall_ms"] + ["status"]
    for r in rows:
        r.pop("wall_ms", None)
    _emit_rows(rows, cols, args.format, _out(args, "sweep"), header)
    scols = ["p_obs", "p_true", "method", "trials", "recovery_rate", "tightness_rate", "failures"]
    spath = Path(args.out_dir) / f"sweep_summary.{args.format}" if args.out_dir else None
    _emit_rows(summary, scols, args.format, spath, header)
    if args.out_dir:
        for po in cfg.p_obs:
            series = {}
            for m in cfg.methods:
                cell = [s for s in summary if s["p_obs"] == po and s["method"] == m]
                series[f"{m} recovery"] = [(s["p_true"], s["recovery_rate"]) for s in cell]
                series[f"{m} tightness"] = [(s["p_true"], s["tightness_rate"]) for s in cell]
            svg = svg_line_chart(series, f"n={cfg.n}, d={cfg.d}, p_obs={po}", "p_true", "rate", (0.0, 1.0))
            (Path(args.out_dir) / f"sweep_pobs{po}.svg").write_text(svg)
    return 0


def cmd_timing(args) -> int:
    rows = []
    for n in args.n:
        for s in range(args.seeds):
            inst = generate(CorruptionParams(n, args.d, args.p_true, args.p_obs, args.seed + s))
            for m in args.methods:
                t0 = time.perf_counter()
                rep = run_method(inst, m)
                row = rep.csv_row(inst)
                row["wall_ms"] = f"{1000 * (time.perf_counter() - t0):.1f}"
                row["status"] = rep.status
                rows.append(row)
    header = _header(args, n=args.n, d=args.d, p_true=args.p_true, p_obs=args.p_obs, seeds=args.seeds)
    _emit_rows(rows, list(RESULT_COLUMNS) + ["status"], args.format, _out(args, "timing"), header)
    if args.out_dir:
        series = {}
        for m in args.methods:
            pts = {}
            for r in rows:
                if r["method"] == m:
                    pts.setdefault(r["n"], []).append(float(r["wall_ms"]))
            series[m] = [(n, float(np.mean(v))) for n, v in sorted(pts.items())]
        svg = svg_line_chart(series, f"wall time, d={args.d}", "n", "ms")
        (Path(args.out_dir) / "timing.svg").write_text(svg)
    return 0


def cmd_certify(args) -> int:
    if args.instance:
        inst = read_instance(args.instance)
    else:
        inst = generate(CorruptionParams(args.n, args.d, args.p_true, 1.0, args.seed))
    params = CertParams(args.alpha, args.beta)
    rep = build_dual_certificate(inst, params)
    s = rep.summary()
    s["first_failure"] = rep.first_failure
    s["first_violation"] = rep.first_violation
    header = _header(args, alpha=params.alpha, beta=params.beta)
    _emit_rows([s], list(s), args.format, _out(args, "certify"), header)
    return 0


def cmd_threshold(args) -> int:
    rows = []
    for d in args.d_list:
        r = recovery_threshold(d, step=args.step)
        rows.append({"d": d, "p_star": f"{r.p_star:.6f}", "alpha": f"{r.alpha:.5f}", "beta": f"{r.beta:.5f}"})
        log.info("d=%d p_star=%.6f", d, r.p_star)
    _emit_rows(rows, ["d", "p_star", "alpha", "beta"], args.format, _out(args, "threshold"),
               _header(args, grid_step=args.step))
    if args.out_dir:
        svg = svg_line_chart({"p_star": [(r["d"], float(r["p_star"])) for r in rows]},
                             "recovery threshold", "d", "p_star")
        (Path(args.out_dir) / "threshold.svg").write_text(svg)
    return 0


def cmd_verify(args) -> int:
    sizes = args.sizes if args.sizes else (args.d,) * args.n
    config = ObjectConfig(len(sizes), tuple(sizes))
    vs = enumerate_vertices(config)
    dim = dimension(config, vs)
    families = ["nonneg", "rowsum", "consistency", "block", "size"] if args.all else [args.family]
    rows = []
    for fam in families:
        if fam == "size":
            total = config.total
            m_hats = range(config.d_max, total) if args.m_hat is None else [args.m_hat]
            ineqs = [q for m in m_hats for q in family_inequalities(config, fam, m)]
        else:
            ineqs = family_inequalities(config, fam)
        for q in ineqs:
            fr = verify_facet(q, config, vs, dim)
            rows.append({"family": fam, "inequality": q.name, "valid": fr.valid, "tight_rank": fr.tight_rank,
                         "dim": fr.dim, "is_facet": fr.is_facet})
    _emit_rows(rows, ["family", "inequality", "valid", "tight_rank", "dim", "is_facet"], args.format,
               _out(args, "verify"), _header(args, sizes=sizes, vertices=len(vs), dimension=dim))
    return 0


def cmd_oracle(args) -> int:
    if args.instance:
        inst = read_instance(args.instance)
    else:
        inst = generate(CorruptionParams(args.n, args.d, args.p_true, args.p_obs, args.seed))
    res = ilp_oracle(inst)
    row = {"optimum": res.optimum, "optimal_count": len(res.argmin), "unique": res.unique,
           "vertices": res.vertex_count}
    _emit_rows([row], list(row), args.format, _out(args, "oracle"), _header(args))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--out-dir", default=None)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", default=None, help="output file (overrides --out-dir naming)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="jomatch", description="Joint object matching via LP relaxations.")
    p.add_argument("--version", action="version", version=f"jomatch {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a random corruption instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--p-true", type=float, required=True)
    g.add_argument("--p-obs", type=float, default=1.0)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", parents=[common], help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("--method", choices=sorted(METHODS), default="basic")
    s.add_argument("--formulation", choices=("auto", "perm_sync", "jom"), default="auto")
    s.add_argument("--backend", choices=("auto", "builtin", "highs", "export-only"), default=None)
    s.add_argument("--probe", action="store_true", help="run the uniqueness probe after recovery")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", parents=[common], help="recovery / tightness rates over a p_true grid")
    w.add_argument("--n", type=int, default=20)
    w.add_argument("--d", type=int, default=3)
    w.add_argument("--p-true", type=parse_grid, default=parse_grid("0.1:0.1:0.9"))
    w.add_argument("--p-obs", type=parse_grid, default=[1.0])
    w.add_argument("--seeds", type=int, default=20)
    w.add_argument("--methods", type=lambda t: t.split(","), default=["basic"])
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("timing", parents=[common], help="wall times of the LP methods")
    t.add_argument("--n", type=lambda x: [int(v) for v in x.split(",")], default=[10, 20])
    t.add_argument("--d", type=int, default=4)
    t.add_argument("--p-true", type=float, default=0.5)
    t.add_argument("--p-obs", type=float, default=1.0)
    t.add_argument("--seeds", type=int, default=3)
    t.add_argument("--methods", type=lambda t: t.split(","), default=["basic", "double"])
    t.set_defaults(func=cmd_timing)

    c = sub.add_parser("certify", parents=[common], help="check the recovery conditions and build duals")
    c.add_argument("instance", nargs="?")
    c.add_argument("--n", type=int, default=20)
    c.add_argument("--d", type=int, default=3)
    c.add_argument("--p-true", type=float, default=0.9)
    c.add_argument("--alpha", type=float, default=CertParams.alpha)
    c.add_argument("--beta", type=float, default=CertParams.beta)
    c.set_defaults(func=cmd_certify)

    h = sub.add_parser("threshold", parents=[common], help="recovery threshold p_star(d)")
    h.add_argument("--d-list", type=parse_int_list, default=parse_int_list("2..50"))
    h.add_argument("--step", type=float, default=0.005, help="outer (alpha, beta) grid step")
    h.set_defaults(func=cmd_threshold)

    v = sub.add_parser("verify", parents=[common], help="facet checks on a small joint matching polytope")
    v.add_argument("--n", type=int, default=3)
    v.add_argument("--d", type=int, default=2)
    v.add_argument("--sizes", type=parse_sizes, default=None)
    v.add_argument("--family", choices=("nonneg", "rowsum", "consistency", "block", "size"), default="consistency")
    v.add_argument("--all", action="store_true")
    v.add_argument("--m-hat", type=int, default=None)
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", parents=[common], help="exact optimum by vertex enumeration")
    o.add_argument("instance", nargs="?")
    o.add_argument("--n", type=int, default=3)
    o.add_argument("--d", type=int, default=2)
    o.add_argument("--p-true", type=float, default=0.5)
    o.add_argument("--p-obs", type=float, default=1.0)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MalformedInputError, InstanceFormatError, CertificateError, SizeGuardError, ValueError,
            FileNotFoundError) as exc:
        print(f"jomatch {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
