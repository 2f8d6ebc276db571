"""Command-line front end: ``gasket-zrp <subcommand> [flags]``.

Every subcommand also accepts ``--config FILE``, a flat ``key = value``
file whose keys are flag names (dashes or underscores). Explicit flags win
over the file. The resolved configuration is embedded in each output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    InsufficientDataError,
    autocovariance,
    bg_statistic,
    dynkin_decomposition,
    jump_bound,
    max_jump,
)
from .formats import read_grid_function, write_graph
from .gasket import MAX_GRAPH_LEVEL, build_gasket
from .ou import OuParams, simulate_ou
from .rng import RNG_DESCRIPTION, replica_rng
from .series import FieldSeries
from .spectrum import MAX_SPECTRAL_LEVEL, cache_path, eigendecompose, load_basis, save_basis

__all__ = ["main", "build_parser", "load_config"]


class CliError(Exception):
    """User-facing failure; reported without a traceback, exit status 2."""


def load_config(path) -> dict:
    """Read a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{ln}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _positive_int(s):
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {s}")
    return v


def _nonneg_float(s):
    v = float(s)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {s}")
    return v


def _int_list(s):
    try:
        return [int(x) for x in str(s).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers separated by commas, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gasket-zrp", description="Zero-range fluctuations on Sierpinski gasket graphs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value file mirroring the flags")
        return sp

    g = common(sub.add_parser("gasket", help="export the level-n graph"))
    g.add_argument("--level", type=_nonneg_int, required=True)
    g.add_argument("--out", help="output path (default: stdout)")

    e = common(sub.add_parser("eigen", help="eigendecompose -Delta_n and write the binary cache"))
    e.add_argument("--level", type=_nonneg_int, required=True)
    e.add_argument("--out", help="cache file (default: the per-level file in the cache directory)")

    z = common(sub.add_parser("zrp-sim", help="stationary zero-range replicas"))
    z.add_argument("--level", type=_nonneg_int, required=True)
    z.add_argument("--rho", type=_nonneg_float, default=1.0)
    z.add_argument("--rate-model", default="linear", help="linear[:c] | constant[:c] | step[:j] | custom:<file>")
    z.add_argument("--horizon", type=_positive_float, default=1.0)
    z.add_argument("--samples", type=_positive_int, default=100, help="number of sample intervals on [0, horizon]")
    z.add_argument("--replicas", type=_positive_int, default=10)
    z.add_argument("--seed", type=_nonneg_int, default=0)
    z.add_argument("--modes", type=_int_list, default=[1, 2], help="eigenmodes tracked as fields, e.g. 1,2")
    z.add_argument("--field-file", help="extra test function as a vertex,value CSV")
    z.add_argument("--bg", action="store_true", help="also record the Boltzmann-Gibbs channel per field")
    z.add_argument("--eigen-cache", help="eigen cache file (default: the per-level cache file)")
    z.add_argument("--workers", type=_positive_int, default=1)
    z.add_argument("--out", required=True)

    o = common(sub.add_parser("ou-sim", help="finite-mode OU replicas (exact transitions)"))
    o.add_argument("--basis", required=True, help="eigen cache file")
    o.add_argument("--beta", type=_positive_float, default=1.0)
    o.add_argument("--gamma", type=_positive_float, default=2.0)
    o.add_argument("--modes", type=_positive_int, default=4, help="modes 0..K-1")
    o.add_argument("--horizon", type=_positive_float, default=1.0)
    o.add_argument("--dt", type=_positive_float, default=0.01)
    o.add_argument("--replicas", type=_positive_int, default=100)
    o.add_argument("--seed", type=_nonneg_int, default=0)
    o.add_argument("--out", required=True)

    a = common(sub.add_parser("analyze", help="JSON report and gnuplot scripts from trajectory CSVs"))
    a.add_argument("inputs", nargs="+")
    a.add_argument("--out-dir", default="analysis")
    a.add_argument("--max-lag", type=_positive_int, default=None)

    v = common(sub.add_parser("verify", help="run the acceptance suite"))
    v.add_argument("--level", type=_nonneg_int, default=4)
    v.add_argument("--quick", action="store_true", help="reduced replica counts")
    v.add_argument("--only", type=_int_list, default=None, help="subset of criteria, e.g. 1,2,8")
    v.add_argument("--seed", type=_nonneg_int, default=20240601)
    v.add_argument("--json", dest="json_out", help="write results as JSON")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    try:
        values = load_config(known.config)
    except OSError as exc:
        raise CliError(f"cannot read config {known.config}: {exc}") from None
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None:
            sub.error(f"config {known.config}: unknown field {key!r} for '{command}'")
        if isinstance(act, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                sub.error(f"config field {key!r}: expected a boolean, got {raw!r}")
            defaults[key] = raw.lower() in ("true", "1", "yes")
            continue
        try:
            val = act.type(raw) if act.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            sub.error(f"config field {key!r}: {exc}")
        if act.nargs in ("+", "*"):
            val = raw.split()
        defaults[key] = val
    # explicit flags still override these defaults
    sub.set_defaults(**defaults)
    for act in sub._actions:
        if act.dest in defaults:
            act.required = False
    return parser.parse_args(argv)


# run-local settings that do not affect results stay out of the artifacts
_LOCAL_KEYS = {"config", "out", "out_dir", "workers", "json_out"}


def _resolved(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if v is not None and k not in _LOCAL_KEYS}
    cfg["version"] = __version__
    return cfg


def _load_eigen(level: int, path=None):
    p = Path(path) if path else cache_path(level)
    if not p.exists():
        raise CliError(
            f"eigen cache {p} not found; create it with: gasket-zrp eigen --level {level}"
            + (f" --out {p}" if path else "")
        )
    try:
        basis = load_basis(p)
    except ValueError as exc:
        raise CliError(f"{exc}; regenerate it with: gasket-zrp eigen --level {level}") from None
    if basis.level != level:
        raise CliError(f"eigen cache {p} is for level {basis.level}, not {level}")
    return basis


def cmd_gasket(args) -> int:
    if args.level > MAX_GRAPH_LEVEL:
        raise CliError(f"--level must be <= {MAX_GRAPH_LEVEL}")
    text = write_graph(build_gasket(args.level), args.out, {"config": _resolved(args)})
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {args.out}: level {args.level}")
    return 0


def cmd_eigen(args) -> int:
    if args.level > MAX_SPECTRAL_LEVEL:
        raise CliError(f"--level must be <= {MAX_SPECTRAL_LEVEL} for the dense eigensolver")
    out = Path(args.out) if args.out else cache_path(args.level)
    out.parent.mkdir(parents=True, exist_ok=True)
    basis = eigendecompose(build_gasket(args.level))
    save_basis(basis, out)
    print(f"wrote {out}: {basis.n_modes} modes, lambda_1 = {basis.eigenvalues[1]:.6g}")
    return 0


def cmd_zrp_sim(args) -> int:
    from .analysis import make_probes
    from .energy import energy_form
    from .zrp import parse_rate_model, simulate_replicas, solve_fugacity
    from .zrp.rates import LinearGrowthWarning, SeriesDivergenceError

    if args.level > 7:
        raise CliError("--level must be <= 7 for simulation")
    graph = build_gasket(args.level)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", LinearGrowthWarning)
        try:
            model = parse_rate_model(args.rate_model)
        except (ValueError, OSError) as exc:
            raise CliError(f"--rate-model: {exc}") from None
    growth_ok = not any(issubclass(w.category, LinearGrowthWarning) for w in caught)
    if not growth_ok:
        print(f"warning: rate model {model.name} violates the linear-growth condition", file=sys.stderr)
    try:
        profile = solve_fugacity(model, args.rho)
    except SeriesDivergenceError as exc:
        raise CliError(f"--rho {args.rho}: {exc}") from None
    fields = {}
    lambdas = {}
    if args.modes:
        basis = _load_eigen(args.level, args.eigen_cache)
        for k in args.modes:
            if not 0 <= k < basis.n_modes:
                raise CliError(f"--modes: mode {k} outside 0..{basis.n_modes - 1}")
            fields[f"v{k}"] = basis.mode(k)
            lambdas[f"v{k}"] = float(basis.eigenvalues[k])
    if args.field_file:
        try:
            f, _ = read_grid_function(args.field_file, graph)
        except (ValueError, OSError) as exc:
            raise CliError(f"--field-file: {exc}") from None
        fields["file"] = f
    if not fields:
        raise CliError("nothing to record: give --modes and/or --field-file")
    probes = make_probes(graph, profile, fields, bg=fields if args.bg else None)
    times = np.linspace(0.0, args.horizon, args.samples + 1)
    info = {
        lab: {
            "sup_norm": float(np.max(np.abs(f))),
            "energy": energy_form(f, f, graph),
            **({"lambda": lambdas[lab]} if lab in lambdas else {}),
        }
        for lab, f in fields.items()
    }
    meta = {
        "kind": "zrp",
        "config": _resolved(args),
        "linear_growth_ok": growth_ok,
        "fields_info": info,
    }
    series = simulate_replicas(graph, profile, probes, args.horizon, times, args.replicas, args.seed,
                               workers=args.workers, metadata=meta)
    series.to_csv(args.out)
    print(f"wrote {args.out}: {args.replicas} replicas x {len(times)} samples, "
          f"phi={profile.phi:.6g} chi={profile.chi:.6g}")
    return 0


def cmd_ou_sim(args) -> int:
    try:
        basis = load_basis(args.basis)
    except OSError:
        raise CliError(f"basis {args.basis} not found; create it with: gasket-zrp eigen --level <n> --out {args.basis}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None
    K = args.modes
    if K > basis.n_modes:
        raise CliError(f"--modes {K} exceeds the {basis.n_modes} modes in {args.basis}")
    steps = int(round(args.horizon / args.dt))
    if steps < 1 or abs(steps * args.dt - args.horizon) > 1e-9 * args.horizon:
        raise CliError("--horizon must be a whole multiple of --dt")
    params = OuParams(beta=args.beta, gamma=args.gamma, eigenvalues=basis.eigenvalues[:K])
    times = np.arange(steps + 1) * args.dt
    R = args.replicas
    paths = np.empty((R, steps + 1, K))
    for r in range(R):
        rng = replica_rng(args.seed, r)
        y0 = rng.standard_normal(K) * math.sqrt(params.stationary_variance)
        y0[params.eigenvalues == 0.0] = 0.0
        paths[r] = simulate_ou(params, y0, args.dt, steps, rng)
    labels = [f"v{k}" for k in range(1, K)]
    fields = paths[:, :, 1:]
    inc = np.zeros_like(fields)
    inc[:, 1:] = np.diff(fields, axis=1) ** 2
    qv = np.cumsum(inc, axis=1)
    jmax = np.maximum.accumulate(np.sqrt(inc), axis=1)
    meta = {
        "kind": "ou",
        "config": _resolved(args),
        "level": basis.level,
        "beta": args.beta,
        "gamma": args.gamma,
        "eigenvalues": basis.eigenvalues[:K].tolist(),
        "rng": RNG_DESCRIPTION,
        "seed": args.seed,
        "replicas": R,
        "fields_info": {f"v{k}": {"lambda": float(basis.eigenvalues[k])} for k in range(1, K)},
    }
    series = FieldSeries(times=times, field_labels=labels, fields=fields, qv=qv, jump_max=jmax,
                         seeds=np.full(R, args.seed), metadata=meta)
    series.to_csv(args.out)
    print(f"wrote {args.out}: {R} replicas x {len(times)} samples, modes 1..{K - 1}")
    return 0


def _analyze_series(series: FieldSeries, name: str, out_dir: Path, max_lag):
    meta = series.metadata
    kind = meta.get("kind", "zrp")
    info = meta.get("fields_info", {})
    rep = {"input": name, "kind": kind, "level": meta.get("level"), "replicas": series.n_replicas, "fields": {}}
    checks = []
    if kind == "zrp":
        beta, var_target = meta["dphi"], meta["chi"]
    else:
        beta, var_target = meta["beta"], meta["gamma"] / (2.0 * meta["beta"])
    for lab in series.field_labels:
        entry = {}
        Z = series.field(lab)
        var0 = float(np.var(Z[:, 0], ddof=1))
        se0 = var0 * math.sqrt(2.0 / max(series.n_replicas - 1, 1))
        entry["initial_variance"] = {"estimate": var0, "stderr": se0, "target": var_target}
        if "lambda" in info.get(lab, {}):
            checks.append((f"{lab}: initial variance within 3 se of target",
                           abs(var0 - var_target) <= 3 * se0))
        lam = info.get(lab, {}).get("lambda")
        try:
            window = 2.0 / (beta * lam) if lam else None
            ac = autocovariance(series, lab, max_lag=max_lag, window=window)
            entry["autocovariance"] = {
                "lags": ac.lags.tolist(), "values": ac.values.tolist(), "stderr": ac.stderr.tolist(),
                "n_effective": ac.n_effective, "rate": ac.rate, "rate_stderr": ac.rate_stderr,
            }
            if lam:
                rel = abs(ac.rate - beta * lam) / (beta * lam)
                entry["autocovariance"].update({"predicted_rate": beta * lam, "relative_error": rel})
                checks.append((f"{lab}: decay rate within 15% of beta*lambda", bool(rel <= 0.15)))
            dat = out_dir / f"autocov_{Path(name).stem}_{lab}.dat"
            np.savetxt(dat, np.column_stack((ac.lags, ac.values, ac.stderr)), header="tau C se")
            entry["autocovariance"]["data_file"] = dat.name
        except InsufficientDataError as exc:
            entry["autocovariance"] = {"error": str(exc)}
        if "sup_norm" in info.get(lab, {}):
            bound = jump_bound(np.array([info[lab]["sup_norm"]]), meta["level"])
            mj = max_jump(series, lab)
            entry["jump"] = {"max": mj, "bound": bound}
            checks.append((f"{lab}: single-event jump bound", bool(mj <= bound)))
        if f"comp:{lab}" in series.channel_labels:
            d = dynkin_decomposition(series, lab)
            rate, se = d.qv_rate()
            target = 2.0 * meta["phi"] * info[lab]["energy"]
            m_end = d.martingale[:, -1]
            m_se = float(m_end.std(ddof=1) / math.sqrt(len(m_end)))
            entry["dynkin"] = {
                "qv_rate": rate, "qv_stderr": se, "qv_target_2phiE": target,
                "ratio_to_phiE": rate / (meta["phi"] * info[lab]["energy"]),
                "martingale_mean": float(m_end.mean()), "martingale_stderr": m_se,
            }
            checks.append((f"{lab}: QV rate within 3 se of 2 phi E_n", bool(abs(rate - target) <= 3 * se)))
            checks.append((f"{lab}: E[M_T] within 3 se of 0", bool(abs(m_end.mean()) <= 3 * m_se)))
        if f"bg:{lab}" in series.channel_labels:
            entry["bg"] = bg_statistic(series, f"bg:{lab}").as_dict()
        rep["fields"][lab] = entry
    rep["checks"] = [{"name": n, "passed": bool(p)} for n, p in checks]
    return rep


def _gnuplot_autocov(reports, out_dir: Path) -> Path | None:
    plots = []
    for rep in reports:
        for lab, entry in rep["fields"].items():
            ac = entry.get("autocovariance", {})
            if "data_file" in ac:
                plots.append(f"'{ac['data_file']}' using 1:2:3 with yerrorbars title '{rep['input']} {lab}'")
    if not plots:
        return None
    path = out_dir / "autocovariance.gp"
    path.write_text(
        "set terminal pngcairo size 900,600\n"
        "set output 'autocovariance.png'\n"
        "set logscale y\nset xlabel 'tau'\nset ylabel 'C(tau)'\n"
        "plot " + ", \\\n     ".join(plots) + "\n"
    )
    return path


def _bg_by_label(reports) -> dict:
    """label -> {level: bg entry}, so levels are only compared within one field."""
    out: dict = {}
    for rep in reports:
        for lab, entry in rep["fields"].items():
            if "bg" in entry:
                out.setdefault(lab, {})[rep["level"]] = entry["bg"]
    return out


def _gnuplot_bg(reports, out_dir: Path) -> Path | None:
    by_label = _bg_by_label(reports)
    if not by_label:
        return None
    labels = sorted(by_label)
    blocks = []
    for lab in labels:
        rows = [f"{n} {b['variance']!r} {b['ci_low']!r} {b['ci_high']!r}" for n, b in sorted(by_label[lab].items())]
        blocks.append(f"# field {lab}\n" + "\n".join(rows) + "\n")
    dat = out_dir / "bg_vs_n.dat"
    # gnuplot data blocks are separated by two blank lines and addressed with `index`
    dat.write_text("# n variance ci_low ci_high\n" + "\n\n".join(blocks))
    plots = ", ".join(
        f"'bg_vs_n.dat' index {i} using 1:2:3:4 with yerrorbars title '{lab} (95% CI)'" for i, lab in enumerate(labels)
    )
    path = out_dir / "bg_vs_n.gp"
    path.write_text(
        "set terminal pngcairo size 900,600\n"
        "set output 'bg_vs_n.png'\n"
        "set logscale y\nset xlabel 'n'\nset ylabel 'Var of integrated BG term'\n"
        f"plot {plots}\n"
    )
    return path


def cmd_analyze(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for name in args.inputs:
        try:
            series = FieldSeries.from_csv(name)
        except (OSError, ValueError) as exc:
            raise CliError(f"{name}: {exc}") from None
        reports.append(_analyze_series(series, name, out_dir, args.max_lag))
    summary = {"config": _resolved(args), "reports": reports}
    trends = {}
    for lab, per_level in sorted(_bg_by_label(reports).items()):
        if len(per_level) > 1:
            chain = [per_level[n] for n in sorted(per_level)]
            trends[lab] = all(b["variance"] < a["ci_low"] and a["variance"] > b["ci_high"]
                              for a, b in zip(chain, chain[1:]))
    if trends:
        summary["bg_decreasing_in_n"] = trends
    scripts = [p.name for p in (_gnuplot_autocov(reports, out_dir), _gnuplot_bg(reports, out_dir)) if p]
    summary["gnuplot_scripts"] = scripts
    all_checks = [c["passed"] for rep in reports for c in rep["checks"]]
    summary["all_passed"] = all(all_checks)
    (out_dir / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    for rep in reports:
        for c in rep["checks"]:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {rep['input']}: {c['name']}")
    print(f"wrote {out_dir / 'report.json'}" + (f" and {', '.join(scripts)}" if scripts else ""))
    return 0


def cmd_verify(args) -> int:
    from .verify import AcceptanceSuite, Scale

    scale = Scale.quick(args.level) if args.quick else Scale.full(args.level)
    suite = AcceptanceSuite(scale, seed=args.seed)
    results = []
    for number in args.only or sorted(suite.TITLES):
        if number not in suite.TITLES:
            raise CliError(f"--only: no criterion {number}")
        res = suite.run(number)
        print(res.line(), flush=True)
        results.append(res)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(
            {"config": _resolved(args), "results": [r.as_dict() for r in results]}, indent=2))
    return 0 if passed == len(results) else 1


COMMANDS = {
    "gasket": cmd_gasket,
    "eigen": cmd_eigen,
    "zrp-sim": cmd_zrp_sim,
    "ou-sim": cmd_ou_sim,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"gasket-zrp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
