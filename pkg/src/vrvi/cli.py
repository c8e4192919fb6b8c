"""Command-line front end.

Subcommands::

    vrvi run <spec-file-or-preset> [--algo ...] [--seeds ...] [--epochs ...] [--out DIR]
    vrvi verify
    vrvi gen <generator> --n N --seed S --out file.mtx [--format coordinate|array]

A run spec is a flat ``key = value`` text file (``#`` comments allowed);
command-line flags override file keys.  Presets for the standard
benchmark figure layout (``fig1-*`` Euclidean, ``fig2-*`` entropic) are
built in.
Each run writes one CSV trace (``cost,epoch,gap,dist_sq,wall_ns``), every
problem gets a summary CSV of per-algorithm mean gaps and a
self-contained SVG convergence plot (log-scale gap against epochs).
Outputs are written atomically; re-running a spec reproduces all files
byte-for-byte except the wall-clock column.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigError, VrviError
from .metrics import RunTrace
from .problems import (
    GENERATORS,
    MatrixGame,
    VIProblem,
    load_matrix_market,
    make_matrix_game,
    matching_pennies,
    rock_paper_scissors,
    save_matrix_market,
    uniform_point,
)
from .solvers import Algo, SolverConfig, run
from .verify import run_all_suites

_ALGO_VALUES = [a.value for a in Algo]

_SPEC_KEYS = {
    "problem", "n", "problem_seed", "geometry", "algos", "seeds", "epochs",
    "oracle", "p", "tau", "gamma", "eval_every", "out",
}

PRESETS: Dict[str, Dict[str, str]] = {}
for _name, _gen in (("policeman", "policeman-burglar"),
                    ("nemirovski1", "nemirovski1"),
                    ("nemirovski2", "nemirovski2")):
    PRESETS[f"fig1-{_name}"] = {
        "problem": _gen, "n": "200", "problem_seed": "7", "geometry": "euclidean",
        "algos": "det-eg,vr-eg,vr-mp,vr-fbf,vr-forb", "seeds": "0,1,2,3,4",
        "epochs": "100", "out": f"runs/fig1-{_name}",
    }
    PRESETS[f"fig2-{_name}"] = {
        "problem": _gen, "n": "200", "problem_seed": "7", "geometry": "entropic",
        "algos": "det-eg,vr-mp", "seeds": "0,1,2,3,4",
        "epochs": "100", "out": f"runs/fig2-{_name}",
    }


@dataclass
class RunSpec:
    """Validated description of one benchmark invocation."""

    problem: str
    geometry: str = "euclidean"
    algos: List[str] = field(default_factory=lambda: ["vr-eg"])
    seeds: List[int] = field(default_factory=lambda: [0])
    epochs: float = 10.0
    n: int = 200
    problem_seed: int = 7
    oracle: str = "auto"
    p: Optional[float] = None
    tau: Optional[float] = None
    gamma: float = 0.99
    eval_every: Optional[float] = None
    out: str = "runs/out"

    def validate(self) -> None:
        if self.geometry not in ("euclidean", "entropic"):
            raise ConfigError(f"unknown geometry {self.geometry!r}")
        for a in self.algos:
            if a not in _ALGO_VALUES:
                raise ConfigError(f"unknown algorithm {a!r} (expected one of {_ALGO_VALUES})")
        if self.epochs <= 0:
            raise ConfigError("epochs must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


def parse_spec_file(path: Path) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SPEC_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_spec(source: str, overrides: Dict[str, Optional[str]]) -> RunSpec:
    """Resolve a preset name or spec file plus flag overrides."""
    if source in PRESETS:
        values = dict(PRESETS[source])
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"spec file or preset {source!r} not found")
        values = parse_spec_file(path)
    for key, val in overrides.items():
        if val is not None:
            if key not in _SPEC_KEYS:
                raise ConfigError(f"unknown spec key {key!r}")
            values[key] = val
    if "problem" not in values:
        raise ConfigError("spec needs a 'problem' entry")
    spec = RunSpec(
        problem=values["problem"],
        geometry=values.get("geometry", "euclidean"),
        algos=[a.strip() for a in values.get("algos", "vr-eg").split(",") if a.strip()],
        seeds=[int(s) for s in values.get("seeds", "0").split(",") if s.strip()],
        epochs=float(values.get("epochs", "10")),
        n=int(values.get("n", "200")),
        problem_seed=int(values.get("problem_seed", "7")),
        oracle=values.get("oracle", "auto"),
        p=float(values["p"]) if "p" in values else None,
        tau=float(values["tau"]) if "tau" in values else None,
        gamma=float(values.get("gamma", "0.99")),
        eval_every=float(values["eval_every"]) if "eval_every" in values else None,
        out=values.get("out", "runs/out"),
    )
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# problems and oracles per spec
# ---------------------------------------------------------------------------

def _load_game(spec: RunSpec) -> MatrixGame:
    name = spec.problem
    if name == "matching-pennies":
        return matching_pennies()
    if name == "rps":
        return rock_paper_scissors()
    if name in GENERATORS:
        return GENERATORS[name](spec.n, spec.problem_seed)
    if name.startswith("file:") or name.endswith((".mtx", ".mm")):
        path = Path(name[5:] if name.startswith("file:") else name)
        if not path.exists():
            raise FileNotFoundError(f"matrix file not found: {path}")
        return load_matrix_market(path)
    raise ConfigError(f"unknown problem {name!r} "
                      f"(generators: {sorted(GENERATORS)}; or a .mtx path)")


def problem_label(spec: RunSpec) -> str:
    """Filename-safe problem tag (file paths reduce to their stem)."""
    name = spec.problem
    if name.startswith("file:"):
        name = name[5:]
    if name.endswith((".mtx", ".mm")):
        return Path(name).stem
    return name


def _oracle_for(spec: RunSpec, algo: str) -> Optional[str]:
    if spec.oracle != "auto":
        return spec.oracle
    if spec.geometry == "entropic":
        return "var-ent"
    return "var-eucl" if algo == "vr-mp" else "fixed"


def build_problem(spec: RunSpec, algo: str) -> VIProblem:
    game = _load_game(spec)
    known = None
    if spec.problem in ("matching-pennies", "rps"):
        known = uniform_point(game.n, game.m)
    return make_matrix_game(game, geometry=spec.geometry, oracle_scheme=_oracle_for(spec, algo),
                            known_solution=known, name=problem_label(spec))


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(path: Path, trace: RunTrace) -> None:
    lines = ["cost,epoch,gap,dist_sq,wall_ns"]
    for r in trace.rows:
        lines.append(f"{_fmt(r.cost)},{_fmt(r.epoch)},{_fmt(r.gap)},{_fmt(r.dist_sq)},{r.wall_ns}")
    _atomic_write(path, "\n".join(lines) + "\n")
    _atomic_write(path.with_suffix(".json"), json.dumps(trace.metadata, indent=2, sort_keys=True) + "\n")


def read_trace_csv(path: Path):
    """Parse a trace CSV into column arrays (used by tests and plotting)."""
    lines = Path(path).read_text().strip().splitlines()
    cols = {name: [] for name in lines[0].split(",")}
    for line in lines[1:]:
        for name, cell in zip(cols, line.split(",")):
            cols[name].append(float(cell) if cell else np.nan)
    return {k: np.array(v) for k, v in cols.items()}


def step_interp(epochs: np.ndarray, gaps: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Last recorded gap at or before each grid epoch (NaN before the first)."""
    idx = np.searchsorted(epochs, grid, side="right") - 1
    out = np.full(grid.shape, np.nan)
    ok = idx >= 0
    out[ok] = gaps[idx[ok]]
    return out


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def write_svg_plot(path: Path, curves: Dict[str, tuple], title: str) -> None:
    """Minimal self-contained log-linear convergence plot.

    ``curves`` maps a label to (epochs, gaps); gaps are drawn on a log10
    axis clipped below at 1e-12.
    """
    W, H, ml, mr, mt, mb = 640, 420, 70, 20, 36, 46
    xs_all = np.concatenate([np.asarray(c[0], dtype=float) for c in curves.values()])
    ys_all = np.concatenate([np.asarray(c[1], dtype=float) for c in curves.values()])
    ys_all = ys_all[np.isfinite(ys_all)]
    x_max = float(xs_all.max()) if xs_all.size else 1.0
    y_vals = np.clip(ys_all[ys_all > 0], 1e-12, None)
    lo = int(np.floor(np.log10(y_vals.min()))) if y_vals.size else -6
    hi = int(np.ceil(np.log10(y_vals.max()))) if y_vals.size else 0
    if hi <= lo:
        hi = lo + 1

    def sx(x):
        return ml + (W - ml - mr) * (x / max(x_max, 1e-30))

    def sy(y):
        ly = np.log10(max(y, 1e-12))
        return mt + (H - mt - mb) * (hi - ly) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" stroke="black"/>',
        f'<text x="{(W + ml - mr) / 2:.0f}" y="{H - 10}" text-anchor="middle">epochs</text>',
        f'<text x="16" y="{(H + mt - mb) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(H + mt - mb) / 2:.0f})">gap</text>',
    ]
    for d in range(lo, hi + 1):
        y = sy(10.0 ** d)
        parts.append(f'<line x1="{ml - 4}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end">1e{d}</text>')
        parts.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{W - mr}" y2="{y:.1f}" '
                     f'stroke="#dddddd" stroke-width="0.5"/>')
    n_xticks = 5
    for k in range(n_xticks + 1):
        xv = x_max * k / n_xticks
        x = sx(xv)
        parts.append(f'<line x1="{x:.1f}" y1="{H - mb}" x2="{x:.1f}" y2="{H - mb + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{H - mb + 18}" text-anchor="middle">{xv:g}</text>')
    for k, (label, (xs, ys)) in enumerate(sorted(curves.items())):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
                       for x, y in zip(xs, ys) if np.isfinite(y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = mt + 16 + 16 * k
        parts.append(f'<line x1="{W - mr - 130}" y1="{ly - 4}" x2="{W - mr - 105}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{W - mr - 100}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _max_workers() -> int:
    cap = os.environ.get("VRVI_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, limit)


def cmd_run(spec: RunSpec, quiet: bool = False) -> int:
    out_dir = Path(spec.out)
    jobs = []
    problems: Dict[str, VIProblem] = {}
    for algo in spec.algos:
        problems[algo] = build_problem(spec, algo)
        for seed in spec.seeds:
            cfg = SolverConfig(algo=Algo(algo), budget_epochs=spec.epochs, seed=seed,
                               p=spec.p, tau=spec.tau, gamma=spec.gamma,
                               eval_every=spec.eval_every)
            jobs.append((algo, seed, cfg))

    traces: Dict[tuple, RunTrace] = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        futures = {pool.submit(run, problems[algo], cfg): (algo, seed)
                   for algo, seed, cfg in jobs}
        for fut in concurrent.futures.as_completed(futures):
            traces[futures[fut]] = fut.result()

    label = problem_label(spec)
    failed = False
    for (algo, seed), trace in sorted(traces.items()):
        write_trace_csv(out_dir / f"{label}__{algo}__seed{seed}.csv", trace)
        if "error" in trace.metadata:
            failed = True
            print(f"numeric failure: {algo} seed {seed}: {trace.metadata['error']}",
                  file=sys.stderr)

    grid_step = (spec.eval_every / problems[spec.algos[0]].epoch_units
                 if spec.eval_every else 1.0)
    grid = np.arange(0.0, spec.epochs + 0.5 * grid_step, grid_step)
    summary_lines = ["problem,algo,epoch,mean_gap"]
    curves = {}
    for algo in spec.algos:
        per_seed = [step_interp(traces[(algo, s)].epochs, traces[(algo, s)].gaps, grid)
                    for s in spec.seeds]
        mean_gap = np.nanmean(np.vstack(per_seed), axis=0)
        curves[algo] = (grid, mean_gap)
        for e, gmean in zip(grid, mean_gap):
            if np.isfinite(gmean):
                summary_lines.append(f"{label},{algo},{_fmt(e)},{_fmt(gmean)}")
    _atomic_write(out_dir / f"{label}__summary.csv", "\n".join(summary_lines) + "\n")
    write_svg_plot(out_dir / f"{label}__gap.svg", curves,
                   f"{label} ({spec.geometry}, n={spec.n})")

    if not quiet:
        for algo in spec.algos:
            finals = [traces[(algo, s)].gaps[-1] for s in spec.seeds]
            hits = sorted(traces[(algo, s)].epochs_to(1e-2) for s in spec.seeds)
            med = hits[len(hits) // 2]
            med_txt = f"{med:g}" if np.isfinite(med) else "never"
            print(f"{label:>20} {algo:>8}: final gap {np.mean(finals):.3e} "
                  f"(median epochs to 1e-2: {med_txt})")
    return 1 if failed else 0


def cmd_verify() -> int:
    results = run_all_suites()
    width = max(len(r.name) for r in results)
    all_ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        all_ok &= r.passed
        print(f"{r.name:<{width}}  {status}  {r.detail}")
    print("verify:", "all suites passed" if all_ok else "FAILURES present")
    return 0 if all_ok else 1


def cmd_gen(generator: str, n: int, seed: int, out: str, fmt: str) -> int:
    if generator not in GENERATORS:
        raise ConfigError(f"unknown generator {generator!r} (choose from {sorted(GENERATORS)})")
    game = GENERATORS[generator](n, seed)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_matrix_market(out, game, fmt=fmt)
    print(f"wrote {generator} n={n} seed={seed} to {out} ({fmt}, nnz={game.nnz})")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="vrvi",
                                     description="variance-reduced VI solvers and benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run spec or preset")
    p_run.add_argument("spec", help=f"spec file path or preset ({', '.join(sorted(PRESETS))})")
    p_run.add_argument("--algo", help="comma-separated algorithm list")
    p_run.add_argument("--seeds", "--seed", dest="seeds", help="comma-separated seeds")
    p_run.add_argument("--epochs", help="cost budget in epochs")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--n", help="generator dimension")
    p_run.add_argument("--problem-seed", dest="problem_seed", help="generator seed")
    p_run.add_argument("--oracle", help="fixed | var-eucl | var-ent | full | auto")
    p_run.add_argument("--p", help="snapshot probability")
    p_run.add_argument("--tau", help="step size")
    p_run.add_argument("--gamma", help="step-size safety factor in (0,1)")
    p_run.add_argument("--eval-every", dest="eval_every", help="evaluation interval in cost units")
    p_run.add_argument("--quiet", action="store_true")

    sub.add_parser("verify", help="run all property suites")

    p_gen = sub.add_parser("gen", help="write a generated matrix as MatrixMarket")
    p_gen.add_argument("generator", help=f"one of {sorted(GENERATORS)}")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--format", dest="fmt", default="coordinate",
                       choices=["coordinate", "array"])

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            overrides = {
                "algos": args.algo, "seeds": args.seeds, "epochs": args.epochs,
                "out": args.out, "n": args.n, "problem_seed": args.problem_seed,
                "oracle": args.oracle, "p": args.p, "tau": args.tau,
                "gamma": args.gamma, "eval_every": args.eval_every,
            }
            spec = build_spec(args.spec, overrides)
            return cmd_run(spec, quiet=args.quiet)
        if args.command == "verify":
            return cmd_verify()
        if args.command == "gen":
            return cmd_gen(args.generator, args.n, args.seed, args.out, args.fmt)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VrviError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
