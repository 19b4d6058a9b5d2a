"""``dynsamp`` command line.

Subcommands: graph, coherence, sample, recover, phase, noisy, bounds. All
randomness comes from ``--seed`` (default :data:`DEFAULT_SEED`). Outputs go
to fixed filenames under ``--out``. ``--config FILE`` reads ``key=value``
lines that behave like flags given before the command-line ones, so
explicit flags win.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error,
4 numerical failure, 130 interrupted.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from .graph import GraphError, GraphGenerationError, format_edge_list, graph_summary
from .harness import (
    DEFAULT_SEED,
    HEAT_PRESETS,
    NOISY_HEADER,
    PHASE_HEADER,
    GraphSpec,
    HarnessError,
    NoisySweepSpec,
    PhaseGridSpec,
    bound_report,
    coherence_heatmap,
    contour_fit,
    critical_budget,
    earlier_time_violations,
    graph_basis,
    iter_noisy_cells,
    iter_phase_cells,
    make_distribution,
    noisy_row,
    phase_row,
    summarize_noisy,
    PhaseGridResult,
    table_csv_text,
)
from .recovery import RecoveryConfig, RecoveryError, recover_signal, relative_error
from .sampling import (
    SamplingError,
    allocate_budget,
    apply_sampling,
    derive_seed,
    draw_samples,
    save_distribution_csv,
    save_plan_csv,
)
from .spectral import (
    DiffusionModel,
    FilterDomainError,
    SpectralError,
    TimeGrid,
    build_dictionary,
    embed,
    load_signal,
    random_sparse_signal,
)

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4
EXIT_INTERRUPT = 130
TRUNCATION_MARKER = "# truncated: interrupted before the grid was complete"


class UsageError(ValueError):
    pass


# ------------------------------------------------------------ flag types

def _int_list(text: str) -> list[int]:
    """``"1,2,5"`` or an inclusive range ``"start:stop[:step]"``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step <= 0:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers 'a,b,c' or 'start:stop[:step]', got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _dt(text: str) -> float:
    if text in HEAT_PRESETS:
        return HEAT_PRESETS[text]
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--dt takes a number or one of {sorted(HEAT_PRESETS)}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("--dt must be nonnegative")
    return v


def _source(kind):
    def parse(text):
        if kind == "load":
            return ("file", text)
        if kind == "community":
            return ("community", tuple(_int_list(text)))
        try:
            return (kind, int(text))
        except ValueError:
            raise argparse.ArgumentTypeError(f"--{kind} takes an integer node count") from None
    return parse


# --------------------------------------------------------------- parser

def _add_graph(p):
    g = p.add_argument_group("graph source (last one given wins)")
    g.add_argument("--cycle", dest="graph", type=_source("cycle"), metavar="N")
    g.add_argument("--path", dest="graph", type=_source("path"), metavar="N")
    g.add_argument("--community", dest="graph", type=_source("community"), metavar="SIZES",
                   help="block sizes, e.g. 40,160")
    g.add_argument("--load", dest="graph", type=_source("load"), metavar="FILE",
                   help="1-based edge-list file")
    g.add_argument("--pin", type=float, default=0.8, help="within-block edge probability")
    g.add_argument("--pout", type=float, default=0.02, help="cross-block edge probability")


def _add_model(p, times=True):
    p.add_argument("--dt", type=_dt, default=HEAT_PRESETS["fast"],
                   help="heat step, or preset 'fast' (4.0) / 'slow' (0.5)")
    p.add_argument("--k", type=int, default=64, help="bandwidth")
    p.add_argument("--T", type=int, default=8, help="number of regular time steps")
    if times:
        p.add_argument("--times", type=_float_list, default=None,
                       help="irregular observation times (overrides --T)")
    p.add_argument("--distribution", choices=("optimal", "uniform"), default="optimal")


def _add_common(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"master seed (default {DEFAULT_SEED})")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="also write tables as JSON when 'json'")
    p.add_argument("--config", default=None, help="key=value file; flags override it")


def _add_grid(p, noisy=False):
    p.add_argument("--s-values", type=_int_list, default=[1, 2, 3, 4] if noisy else list(range(1, 9)))
    p.add_argument("--m-values", type=_int_list, default=[320] if noisy else list(range(32, 513, 32)))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--threshold", type=float, default=0.01, help="success if relative error <= this")
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    if noisy:
        p.add_argument("--sigma", type=float, default=1e-3, help="noise half-width")
        p.add_argument("--trim", type=float, default=0.05, help="fraction trimmed from each tail")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynsamp", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="generate or validate a graph", allow_abbrev=False)
    _add_graph(p)
    _add_common(p)

    p = sub.add_parser("coherence", help="coherence table over (k, T)", allow_abbrev=False)
    _add_graph(p)
    _add_model(p, times=False)
    p.add_argument("--k-values", type=_int_list, default=None, help="default: --k")
    p.add_argument("--T-values", type=_int_list, default=None, help="default: 1:--T")
    p.add_argument("--basis", choices=("auto", "laplacian", "fourier"), default="auto",
                   help="'auto' uses complex Fourier modes for --cycle, else the Laplacian eigenbasis")
    _add_common(p)

    for name, hlp in (("sample", "draw a sampling plan"), ("recover", "sample and recover one signal")):
        p = sub.add_parser(name, help=hlp, allow_abbrev=False)
        _add_graph(p)
        _add_model(p)
        p.add_argument("--budget", type=int, default=None, help="total sample budget m")
        p.add_argument("--budgets", type=_int_list, default=None, help="per-step budgets (overrides --budget)")
        if name == "recover":
            p.add_argument("--s", type=int, default=2, help="sparsity")
            p.add_argument("--signal", default=None, help="signal file (default: random s-sparse signal)")
            p.add_argument("--sigma", type=float, default=0.0, help="uniform noise half-width")
            p.add_argument("--max-iter", type=int, default=20)
        _add_common(p)

    for name, hlp in (("phase", "phase-transition grid"), ("noisy", "noisy recovery sweep")):
        p = sub.add_parser(name, help=hlp, allow_abbrev=False)
        _add_graph(p)
        _add_model(p, times=False)
        _add_grid(p, noisy=name == "noisy")
        _add_common(p)

    p = sub.add_parser("bounds", help="per-step sample bounds", allow_abbrev=False)
    _add_graph(p)
    _add_model(p, times=False)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--eta", type=float, default=0.15)
    p.add_argument("--beta", type=float, default=0.15)
    p.add_argument("--budget", type=int, default=None, help="total budget to split")
    _add_common(p)
    return parser


# --------------------------------------------------------------- config

def read_config(path: str) -> list[str]:
    """Turn ``key=value`` lines into flags (``true`` alone means a bare flag)."""
    argv = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "config":
                raise UsageError(f"{path}: line {lineno}: nested config files are not supported")
            argv.append("--" + key.replace("_", "-"))
            if value.lower() != "true":
                argv.append(value)
    return argv


def _split_config(argv: list[str]) -> tuple[list[str], str | None]:
    rest, path = [], None
    it = iter(argv)
    for a in it:
        if a == "--config":
            path = next(it, None)
            if path is None:
                raise UsageError("--config needs a file name")
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
        else:
            rest.append(a)
    return rest, path


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    rest, path = _split_config(list(argv))
    if path is not None:
        cfg = read_config(path)
        # config flags go right after the subcommand so later flags override them
        cut = next((i + 1 for i, a in enumerate(rest) if not a.startswith("-")), len(rest))
        rest = rest[:cut] + cfg + rest[cut:]
    args = parser.parse_args(rest)
    args.config = path
    return args


# --------------------------------------------------------------- helpers

def _graph_spec(args) -> GraphSpec:
    if args.graph is None:
        raise UsageError("choose a graph with --cycle, --path, --community or --load")
    kind, value = args.graph
    if kind == "community":
        return GraphSpec("community", sizes=value, p_in=args.pin, p_out=args.pout, seed=args.seed)
    if kind == "file":
        return GraphSpec("file", path=value)
    return GraphSpec(kind, n=value)


def _grid(args) -> TimeGrid:
    if getattr(args, "times", None):
        return TimeGrid(tuple(args.times))
    if args.T < 1:
        raise UsageError("--T must be positive")
    return TimeGrid.regular(args.T)


def _effective(args) -> dict:
    d = {k: v for k, v in vars(args).items()}
    if d.get("graph") is not None:
        kind, value = d["graph"]
        d["graph"] = {"kind": kind, "value": list(value) if isinstance(value, tuple) else value}
    d["version"] = __version__
    return d


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_json(path: str, obj) -> None:
    _write(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _finite(v):
    return float(v) if np.isfinite(v) else None


def _check_k(args, n: int) -> None:
    if not 1 <= args.k <= n:
        raise UsageError(f"--k {args.k} must lie in [1, n={n}]")


def _setup(args, fourier=False):
    spec = _graph_spec(args)
    basis = graph_basis(spec, fourier)
    _check_k(args, basis.n)
    model = DiffusionModel.heat(args.dt)
    return spec, basis, model


# ------------------------------------------------------------- commands

def cmd_graph(args) -> int:
    g = _graph_spec(args).build()
    out = _outdir(args)
    _write(os.path.join(out, "graph.txt"), format_edge_list(g))
    summary = graph_summary(g)
    _write_json(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_coherence(args) -> int:
    spec = _graph_spec(args)
    fourier = args.basis == "fourier" or (args.basis == "auto" and spec.kind == "cycle")
    basis = graph_basis(spec, fourier)
    k_values = args.k_values or [args.k]
    T_values = args.T_values or list(range(1, args.T + 1))
    if max(k_values) > basis.n or min(k_values) < 1:
        raise UsageError(f"k values must lie in [1, n={basis.n}]")
    if min(T_values) < 1:
        raise UsageError("T values must be positive")
    res = coherence_heatmap(basis, DiffusionModel.heat(args.dt), k_values, T_values, args.distribution)
    out = _outdir(args)
    _write(os.path.join(out, "heatmap.csv"), res.csv_text())
    _write(os.path.join(out, "profile.csv"), res.profile_csv_text())
    viol = earlier_time_violations(res.profile)
    meta = {"command": "coherence", "args": _effective(args), "basis": "fourier" if fourier else "laplacian",
            "earlier_time_violations": viol}
    _write_json(os.path.join(out, "meta.json"), meta)
    if args.format == "json":
        _write_json(os.path.join(out, "heatmap.json"),
                    {"k_values": k_values, "T_values": T_values, "nu_sq_sum": res.nu_sq_sum.tolist(),
                     "profile": res.profile.tolist()})
    for a, k in enumerate(k_values):
        print(f"k={k}: " + " ".join(f"T={T}:{res.nu_sq_sum[a, b]:.6g}" for b, T in enumerate(T_values)))
    if viol:
        print(f"warning: coherence increases after steps {viol}", file=sys.stderr)
    return 0


def _plan(args, dictionary, dist, profile):
    if args.budgets is not None:
        budgets = np.asarray(args.budgets, dtype=int)
        if budgets.shape != (dictionary.T,) or np.any(budgets < 0) or budgets.sum() < 1:
            raise UsageError(f"--budgets needs {dictionary.T} nonnegative entries with a positive sum")
    else:
        if args.budget is None:
            raise UsageError("give --budget or --budgets")
        if args.budget < 1:
            raise UsageError(f"--budget must be >= 1, got {args.budget}")
        budgets = allocate_budget(profile, args.budget)
    return draw_samples(dist, budgets, derive_seed(args.seed, "plan"))


def _sampling_setup(args):
    spec, basis, model = _setup(args)
    dictionary = build_dictionary(basis, model, args.k, _grid(args))
    dist, profile = make_distribution(dictionary, args.distribution)
    return spec, basis, model, dictionary, dist, profile


def cmd_sample(args) -> int:
    _, _, _, dictionary, dist, profile = _sampling_setup(args)
    plan = _plan(args, dictionary, dist, profile)
    out = _outdir(args)
    save_plan_csv(plan, os.path.join(out, "plan.csv"))
    save_distribution_csv(dist, os.path.join(out, "distribution.csv"))
    meta = {"command": "sample", "args": _effective(args), "budgets": plan.budgets.tolist(),
            "nu_sq": profile.nu_sq.tolist()}
    _write_json(os.path.join(out, "meta.json"), meta)
    print(f"drew {plan.m_total} samples; per step {plan.budgets.tolist()}")
    return 0


def cmd_recover(args) -> int:
    _, basis, model, dictionary, dist, profile = _sampling_setup(args)
    if args.signal is not None:
        x = load_signal(args.signal)
        if x.shape != (basis.n,):
            raise UsageError(f"signal has {x.size} entries, graph has {basis.n} nodes")
    else:
        if not 1 <= args.s <= args.k:
            raise UsageError(f"--s {args.s} must lie in [1, k={args.k}]")
        x, _ = random_sparse_signal(basis, args.k, args.s, np.random.default_rng(derive_seed(args.seed, "signal")))
    if args.sigma < 0:
        raise UsageError("--sigma must be nonnegative")
    plan = _plan(args, dictionary, dist, profile)
    traj = embed(x, basis, model, dictionary.grid)
    if args.sigma > 0:
        rng = np.random.default_rng(derive_seed(args.seed, "noise"))
        traj = traj + rng.uniform(-args.sigma, args.sigma, size=traj.size)
    _, y_tilde = apply_sampling(traj, plan)
    res = recover_signal(y_tilde, plan, dictionary, basis, RecoveryConfig(args.s, max_iter=args.max_iter))
    err = relative_error(x, res.x_hat)
    res.extra["relative_error"] = err
    out = _outdir(args)
    res.save(os.path.join(out, "result.json"))
    save_plan_csv(plan, os.path.join(out, "plan.csv"))
    _write_json(os.path.join(out, "meta.json"), {"command": "recover", "args": _effective(args),
                                                 "budgets": plan.budgets.tolist()})
    print(f"relative error {err:.6e} after {res.iterations} iterations")
    return 0


def _stream_grid(path, header, rows) -> None:
    """Write rows as they arrive; an interrupt leaves a marker line."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        try:
            for row in rows:
                w.writerow(row)
                fh.flush()
        except KeyboardInterrupt:
            fh.write(TRUNCATION_MARKER + "\n")
            raise


def _grid_spec(args, cls, **extra):
    return cls(
        graph=_graph_spec(args), dt=args.dt, k=args.k, T=args.T,
        s_values=tuple(args.s_values), m_values=tuple(args.m_values), trials=args.trials,
        distribution=args.distribution, threshold=args.threshold, master_seed=args.seed,
        max_iter=args.max_iter, **extra,
    )


def cmd_phase(args) -> int:
    spec = _grid_spec(args, PhaseGridSpec)
    _check_k(args, spec.setup().basis.n)
    out = _outdir(args)
    shape = (len(spec.s_values), len(spec.m_values))
    succ = np.zeros(shape, dtype=int)

    def rows():
        for a, b, ok in iter_phase_cells(spec, args.workers):
            succ[a, b] = ok
            yield phase_row(spec.s_values[a], spec.m_values[b], ok, spec.trials)

    _stream_grid(os.path.join(out, "grid.csv"), PHASE_HEADER, rows())
    result = PhaseGridResult(spec, succ, np.full(shape, spec.trials))
    m_star = critical_budget(result)
    slope, intercept = contour_fit(spec.s_values, m_star)
    meta = {"command": "phase", "args": _effective(args), **result.meta(),
            "critical_budget_50": [None if not np.isfinite(v) else float(v) for v in m_star],
            "contour_fit": {"slope": _finite(slope), "intercept": _finite(intercept)}}
    _write_json(os.path.join(out, "meta.json"), meta)
    if args.format == "json":
        _write_json(os.path.join(out, "grid.json"), {"s_values": list(spec.s_values),
                                                     "m_values": list(spec.m_values),
                                                     "success_rate": result.success_rate.tolist()})
    for s, m in zip(spec.s_values, m_star):
        print(f"s={s}: 50% success at m={m:g}")
    return 0


def cmd_noisy(args) -> int:
    spec = _grid_spec(args, NoisySweepSpec, sigma=args.sigma, trim=args.trim)
    _check_k(args, spec.setup().basis.n)
    out = _outdir(args)
    table = []

    def rows():
        for a, b, arr in iter_noisy_cells(spec, args.workers):
            summ = summarize_noisy(arr, spec.s_values[a], spec.m_values[b], spec.trim)
            table.append(summ)
            yield noisy_row(summ)

    _stream_grid(os.path.join(out, "grid.csv"), NOISY_HEADER, rows())
    meta = {"command": "noisy", "args": _effective(args), "experiment": "noisy_sweep",
            "spec": spec.describe()}
    _write_json(os.path.join(out, "meta.json"), meta)
    if args.format == "json":
        _write_json(os.path.join(out, "grid.json"), table)
    for r in table:
        print(f"s={r['s']} m={r['m']}: error ratio {r['error_ratio']:.4g}, "
              f"relative error {r['relative_error']:.4g}")
    return 0


def cmd_bounds(args) -> int:
    _, basis, model = _setup(args)
    dictionary = build_dictionary(basis, model, args.k, TimeGrid.regular(args.T))
    _, profile = make_distribution(dictionary, args.distribution)
    if args.budget is not None and args.budget < 1:
        raise UsageError(f"--budget must be >= 1, got {args.budget}")
    rows = bound_report(dictionary, profile, args.s, args.delta, args.C, args.epsilon,
                        args.eta, args.beta, args.budget)
    header = list(rows[0])
    text = table_csv_text(header, [["" if r[h] is None else (repr(r[h]) if isinstance(r[h], float) else r[h])
                                   for h in header] for r in rows])
    out = _outdir(args)
    _write(os.path.join(out, "bounds.csv"), text)
    _write_json(os.path.join(out, "meta.json"), {"command": "bounds", "args": _effective(args)})
    if args.format == "json":
        _write_json(os.path.join(out, "bounds.json"), rows)
    sys.stdout.write(text)
    return 0


COMMANDS = {
    "graph": cmd_graph,
    "coherence": cmd_coherence,
    "sample": cmd_sample,
    "recover": cmd_recover,
    "phase": cmd_phase,
    "noisy": cmd_noisy,
    "bounds": cmd_bounds,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:       # argparse usage errors and --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"dynsamp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"dynsamp: error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("dynsamp: interrupted", file=sys.stderr)
        return EXIT_INTERRUPT
    except (np.linalg.LinAlgError, FilterDomainError) as exc:
        print(f"dynsamp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, GraphError, GraphGenerationError, HarnessError, SamplingError, SpectralError, RecoveryError) as exc:
        print(f"dynsamp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"dynsamp: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
