"""Command line interface.

Subcommands: synth, train, eval, dynamics, gradcheck, ablate. Every run
writes its artifacts plus a manifest.json (effective config, seed, package
version, input hashes, output names) into --out. Exit codes: 0 success,
1 validation failure, 2 numeric abort.

Configuration files are plain key=value lines; '#' starts a comment.
Command line flags override file values; the GSSL_SEED environment
variable supplies the seed when neither does.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, dynamics, figures
from .augment import AugConfig
from .encoder import EncoderDims, NonFiniteError, load_checkpoint, save_checkpoint
from .evaluation import EvalConfig, run_eval_suite, write_metrics
from .graph import BundleError, SbmConfig, generate_sbm, load_graph_bundle, make_graph, save_graph_bundle
from .sampling import LEVELS
from .trainer import (ABLATIONS, TrainConfig, TrainResult, VARIANTS,
                      finite_diff_gradcheck, level_gradient_cosine, train)


class ConfigError(ValueError):
    """Bad flags or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the contract wants 1
    def error(self, message):
        raise ConfigError(message)


def parse_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_CONFIG_KEYS = {
    "variant": str, "levels": str, "m": float, "gamma": float, "epochs": int,
    "seed": int, "lr": float, "kappa": int, "n1": int, "n2": int,
    "clusters": str, "graph_level_mode": str, "ablation": str, "beta": str,
    "drop_edge_rate_1": float, "drop_edge_rate_2": float,
    "mask_feature_rate_1": float, "mask_feature_rate_2": float,
    "hidden1": int, "hidden2": int, "proj_hidden": int, "proj_out": int,
    "eval_train_frac": float, "eval_resamples": int, "eval_link_holdout": float,
    "eval_seed": int,
}


def _convert(key: str, raw: str):
    conv = _CONFIG_KEYS[key]
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {raw!r}") from None


def _parse_levels(raw: str) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in raw.split(",") if p.strip())
    bad = [p for p in parts if p not in LEVELS]
    if bad:
        raise ConfigError(f"unknown levels {bad}; valid: {', '.join(LEVELS)}")
    return parts


def _parse_beta(raw: str) -> dict[str, float]:
    # four comma-separated floats in canonical level order
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 4:
        raise ConfigError("beta needs four comma-separated values (node,proximity,cluster,graph)")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"beta: cannot parse {raw!r}") from None
    return dict(zip(LEVELS, vals))


def resolve_seed(flag_seed, cfg: dict):
    """Flag beats file beats GSSL_SEED beats 0."""
    if flag_seed is not None:
        return int(flag_seed)
    if "seed" in cfg:
        return int(cfg["seed"])
    env = os.environ.get("GSSL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"GSSL_SEED is not an integer: {env!r}") from None
    return 0


def build_configs(args) -> tuple[TrainConfig, EvalConfig]:
    cfg: dict = {}
    if getattr(args, "config", None):
        raw = parse_config_file(args.config)
        unknown = sorted(set(raw) - set(_CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = {k: _convert(k, v) for k, v in raw.items()}

    def pick(name, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        return cfg.get(name, default)

    levels_raw = pick("levels", None)
    levels = _parse_levels(levels_raw) if isinstance(levels_raw, str) else (levels_raw or LEVELS)
    beta_raw = pick("beta", None)
    beta = _parse_beta(beta_raw) if isinstance(beta_raw, str) else beta_raw
    clusters_raw = pick("clusters", None)
    clusters = None
    if clusters_raw is not None and str(clusters_raw) != "auto":
        try:
            clusters = int(clusters_raw)
        except ValueError:
            raise ConfigError(f"clusters: expected integer or 'auto', got {clusters_raw!r}") from None

    aug = AugConfig(
        drop_edge_rate_1=pick("drop_edge_rate_1", 0.2),
        drop_edge_rate_2=pick("drop_edge_rate_2", 0.4),
        mask_feature_rate_1=pick("mask_feature_rate_1", 0.3),
        mask_feature_rate_2=pick("mask_feature_rate_2", 0.4))
    dims = EncoderDims(
        hidden1=pick("hidden1", 256), hidden2=pick("hidden2", 256),
        proj_hidden=pick("proj_hidden", 256), proj_out=pick("proj_out", 128))
    try:
        tc = TrainConfig(
            variant=pick("variant", "lswml"), levels=levels,
            m=pick("m", 0.15), gamma=pick("gamma", 1.5),
            epochs=pick("epochs", 200), seed=resolve_seed(getattr(args, "seed", None), cfg),
            lr=pick("lr", 0.001), aug=aug, kappa=pick("kappa", 2),
            n1=pick("n1", 1), n2=pick("n2", 8), clusters=clusters,
            graph_level_mode=pick("graph_level_mode", "sample"), dims=dims,
            ablation=pick("ablation", "none"), beta=beta)
        ec = EvalConfig(
            train_frac=pick("eval_train_frac", 0.1),
            resamples=pick("eval_resamples", 10),
            link_holdout=pick("eval_link_holdout", 0.1),
            seed=pick("eval_seed", 1234))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return tc, ec


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, argv, config: dict,
                   seed, inputs: list[Path], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p.is_file()},
        "outputs": sorted(outputs),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _train_config_dict(tc: TrainConfig, ec: EvalConfig | None = None) -> dict:
    d = {
        "variant": tc.variant, "levels": list(tc.levels), "m": tc.m,
        "gamma": tc.gamma, "epochs": tc.epochs, "seed": tc.seed, "lr": tc.lr,
        "kappa": tc.kappa, "n1": tc.n1, "n2": tc.n2, "clusters": tc.clusters,
        "graph_level_mode": tc.graph_level_mode, "ablation": tc.ablation,
        "beta": tc.beta,
        "drop_edge_rate_1": tc.aug.drop_edge_rate_1,
        "drop_edge_rate_2": tc.aug.drop_edge_rate_2,
        "mask_feature_rate_1": tc.aug.mask_feature_rate_1,
        "mask_feature_rate_2": tc.aug.mask_feature_rate_2,
        "hidden1": tc.dims.hidden1, "hidden2": tc.dims.hidden2,
        "proj_hidden": tc.dims.proj_hidden, "proj_out": tc.dims.proj_out,
    }
    if ec is not None:
        d.update({"eval_train_frac": ec.train_frac, "eval_resamples": ec.resamples,
                  "eval_link_holdout": ec.link_holdout, "eval_seed": ec.seed})
    return d


def _ensure_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_runlog(runlog, path: Path) -> None:
    lines = [json.dumps(r, sort_keys=True) for r in runlog.records]
    lines.append(json.dumps({"wall_time": runlog.wall_time,
                             "fallbacks": runlog.fallbacks}, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# -------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    out = _ensure_out(args)
    try:
        sizes = tuple(int(s) for s in args.sizes.split(","))
    except ValueError:
        raise ConfigError(f"--sizes: expected comma-separated integers, got {args.sizes!r}") from None
    seed = resolve_seed(args.seed, {})
    try:
        cfg = SbmConfig(sizes=sizes, p_in=args.p_in, p_out=args.p_out,
                        feature_dim=args.feature_dim, noise_sigma=args.noise_sigma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    graph = generate_sbm(cfg, seed)
    save_graph_bundle(graph, out)
    outputs = ["edges.tsv", "features.tsv", "labels.tsv"]
    write_manifest(out, "synth", sys.argv[1:], {
        "sizes": list(sizes), "p_in": args.p_in, "p_out": args.p_out,
        "feature_dim": args.feature_dim, "noise_sigma": args.noise_sigma,
    }, seed, [], outputs)
    print(f"wrote bundle with {graph.n} nodes, {graph.num_edges} edges to {out}")
    return 0


def _load_data(args):
    if not getattr(args, "data", None):
        raise ConfigError("--data is required")
    return load_graph_bundle(args.data)


def cmd_train(args) -> int:
    out = _ensure_out(args)
    graph = _load_data(args)
    tc, ec = build_configs(args)
    result = train(graph, tc)
    outputs = ["runlog.jsonl", "checkpoint.npz"]
    write_runlog(result.runlog, out / "runlog.jsonl")
    save_checkpoint(result.params, out / "checkpoint.npz")

    if not args.no_eval:
        metrics, _ = run_eval_suite(graph, tc, ec, result=result)
        write_metrics(metrics, out / "metrics.json")
        outputs.append("metrics.json")

    if not args.no_figures:
        losses = [r["loss"] for r in result.runlog.records]
        if losses:
            figures.training_curve(losses, out / "loss_curve.png")
            figures.score_means_plot(result.runlog.records, tc.levels,
                                     out / "score_means.png")
            outputs += ["loss_curve.png", "score_means.png"]

    if args.grad_cosine:
        M = level_gradient_cosine(graph, result.params, tc, seed=tc.seed,
                                  eval_epochs=args.grad_cosine_epochs)
        header = "," + ",".join(LEVELS)
        rows = [header] + [
            f"{LEVELS[i]}," + ",".join(repr(float(x)) for x in M[i]) for i in range(4)]
        (out / "gradient_cosine.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        outputs.append("gradient_cosine.csv")
        if not args.no_figures:
            figures.cosine_matrix_plot(M, list(LEVELS), out / "gradient_cosine.png")
            outputs.append("gradient_cosine.png")

    inputs = [Path(args.data) / f for f in ("edges.tsv", "features.tsv", "labels.tsv")]
    write_manifest(out, "train", sys.argv[1:], _train_config_dict(tc, ec), tc.seed,
                   inputs, outputs)
    final = result.runlog.records[-1]["loss"] if result.runlog.records else float("nan")
    print(f"trained {tc.variant} on {'+'.join(tc.levels)} for {tc.epochs} epochs; "
          f"final loss {final:.6f}; artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    out = _ensure_out(args)
    graph = _load_data(args)
    tc, ec = build_configs(args)
    result = None
    if args.checkpoint:
        params = load_checkpoint(args.checkpoint)
        from .trainer import RunLog
        result = TrainResult(params=params,
                             runlog=RunLog(records=[], wall_time=0.0, fallbacks={}),
                             clusters=None)
    metrics, _ = run_eval_suite(graph, tc, ec, result=result)
    write_metrics(metrics, out / "metrics.json")
    outputs = ["metrics.json"]
    if not args.no_figures:
        figures.metrics_bar(metrics, out / "metrics.png")
        outputs.append("metrics.png")
    inputs = [Path(args.data) / f for f in ("edges.tsv", "features.tsv", "labels.tsv")]
    write_manifest(out, "eval", sys.argv[1:], _train_config_dict(tc, ec), tc.seed,
                   inputs, outputs)
    shown = {k: metrics[k] for k in ("acc_mean", "nmi", "ari", "auc", "average")}
    print(json.dumps(shown, sort_keys=True))
    return 0


def cmd_dynamics(args) -> int:
    out = _ensure_out(args)
    m, gamma = args.m, args.gamma
    if not (0.0 < m < 0.5) or gamma <= 0:
        raise ConfigError("need 0 < m < 0.5 and gamma > 0")
    seed = resolve_seed(args.seed, {})
    rng = np.random.default_rng(seed)
    outputs: list[str] = []
    checks: list[tuple[str, bool, str]] = []

    for kind in dynamics.SURFACE_KINDS:
        name = f"surface_{kind}.csv"
        dynamics.export_surface(kind, m, gamma, args.resolution, out / name)
        outputs.append(name)
        sp, sn, val = dynamics.surface_grid(kind, m, gamma, args.resolution)
        figures.surface_heatmap(sp, sn, val, f"{kind} gradient magnitude "
                                f"(m={m}, gamma={gamma})", out / f"surface_{kind}.png")
        outputs.append(f"surface_{kind}.png")

    # identity between the gated and expanded forms of the exponent
    sp = rng.random((10000, 4))
    sn = rng.random((10000, 4))
    max_resid = 0.0
    for mm in (0.10, 0.15, 0.20, 0.25, 0.30):
        max_resid = max(max_resid, float(dynamics.quadratic_form_residual(sp, sn, mm).max()))
    checks.append(("quadratic identity", max_resid < 1e-12,
                   f"max residual {max_resid:.3e}"))

    # contraction suite: random starts, one showcased trajectory
    showcase = None
    contraction_ok = True
    detail = ""
    for run_i in range(args.contraction_runs):
        e0 = rng.uniform(0.0, 1.0, size=8)
        eta = float(rng.uniform(0.1, 0.9) / (2.0 * gamma))
        run = dynamics.simulate_contraction(e0, m, gamma, eta, steps=10000, stop_tol=1e-6)
        if showcase is None:
            showcase = run
        finite = run.ratios[np.isfinite(run.ratios)]
        if finite.size and not (np.all(finite > 0.0) and np.all(finite < 1.0)):
            contraction_ok = False
            detail = f"run {run_i}: factor outside (0, 1)"
            break
        if run.d[-1] >= 1e-6:
            contraction_ok = False
            detail = f"run {run_i}: did not reach 1e-6 within 10000 steps"
            break
    checks.append(("contraction", contraction_ok, detail or
                   f"{args.contraction_runs} runs converged with factors in (0, 1)"))
    if showcase is not None:
        dynamics.write_contraction_csv(showcase, out / "contraction_trajectory.csv")
        figures.contraction_plot(showcase.d, showcase.c, out / "contraction.png")
        outputs += ["contraction_trajectory.csv", "contraction.png"]

    # fixed-direction counterexample for the linear combination
    e0 = np.zeros(8)
    e0[0] = 1.0
    lin = dynamics.simulate_linear_dynamics(e0, np.ones(4), m, gamma,
                                            eta=0.1 / gamma, steps=50)
    angle_ok = bool(np.isfinite(lin.angles[0]) and lin.angles[0] > 1e-3)
    checks.append(("fixed-direction counterexample", angle_ok,
                   f"first-step rotation {lin.angles[0]:.4f} rad"))
    dynamics.write_linear_csv(lin, out / "linear_trajectory.csv")
    figures.linear_angle_plot(lin.angles, out / "linear_angles.png")
    outputs += ["linear_trajectory.csv", "linear_angles.png"]

    report = {name: {"passed": ok, "detail": msg} for name, ok, msg in checks}
    (out / "dynamics_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    outputs.append("dynamics_report.json")
    write_manifest(out, "dynamics", sys.argv[1:], {
        "m": m, "gamma": gamma, "resolution": args.resolution,
        "contraction_runs": args.contraction_runs,
    }, seed, [], outputs)
    ok_all = True
    for name, ok, msg in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {msg}")
        ok_all = ok_all and ok
    return 0 if ok_all else 1


def cmd_gradcheck(args) -> int:
    out = _ensure_out(args)
    seed = resolve_seed(args.seed, {})
    if args.data:
        graph = load_graph_bundle(args.data)
    else:
        cfg = SbmConfig(sizes=(6, 6), p_in=0.6, p_out=0.2, feature_dim=6,
                        noise_sigma=0.3)
        graph = generate_sbm(cfg, seed)
    dims = EncoderDims(hidden1=args.hidden, hidden2=args.hidden,
                       proj_hidden=args.hidden, proj_out=max(2, args.hidden // 2))
    variants = VARIANTS if args.variants == "all" else tuple(args.variants.split(","))
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants {bad}")
    results = {}
    worst = 0.0
    for variant in variants:
        tc = TrainConfig(variant=variant, levels=LEVELS if variant != "sl" else ("node",),
                         m=args.m, gamma=args.gamma, epochs=1, seed=seed,
                         dims=dims, n2=4)
        res = finite_diff_gradcheck(graph, tc, eps=args.eps)
        results[variant] = {"max_rel_err": res.max_rel_err, "per_param": res.per_param}
        worst = max(worst, res.max_rel_err)
        print(f"[{'PASS' if res.max_rel_err < args.tol else 'FAIL'}] {variant}: "
              f"max relative error {res.max_rel_err:.3e}")
    (out / "gradcheck.json").write_text(
        json.dumps(results, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    write_manifest(out, "gradcheck", sys.argv[1:], {
        "variants": list(variants), "eps": args.eps, "tol": args.tol,
        "hidden": args.hidden, "m": args.m, "gamma": args.gamma,
    }, seed, [], ["gradcheck.json"])
    return 0 if worst < args.tol else 1


def _level_subsets():
    # all 15 nonempty subsets in canonical order
    out = []
    for mask in range(1, 16):
        out.append(tuple(l for i, l in enumerate(LEVELS) if mask >> i & 1))
    out.sort(key=lambda s: (len(s), [LEVELS.index(l) for l in s]))
    return out


def cmd_ablate(args) -> int:
    out = _ensure_out(args)
    graph = _load_data(args)
    tc, ec = build_configs(args)
    rows = []
    for subset in _level_subsets():
        sub_tc = replace(tc, variant="lswml", levels=subset,
                         n1=1 if "node" in subset else tc.n1)
        metrics, _ = run_eval_suite(graph, sub_tc, ec)
        rows.append(metrics)
        print(f"{'+'.join(subset):<40} average {metrics['average']:.4f}")
    header = "levels\tacc_mean\tacc_std\tnmi\tari\tauc\taverage"
    lines = [header]
    for r in rows:
        cells = ["+".join(r["levels"])]
        for key in ("acc_mean", "acc_std", "nmi", "ari", "auc", "average"):
            v = r[key]
            cells.append("" if v is None else repr(float(v)))
        lines.append("\t".join(cells))
    (out / "ablation.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    names = ["+".join(r["levels"]) for r in rows]
    figures.ablation_bars(names, [r["average"] for r in rows], out / "ablation.png")
    inputs = [Path(args.data) / f for f in ("edges.tsv", "features.tsv", "labels.tsv")]
    write_manifest(out, "ablate", sys.argv[1:], _train_config_dict(tc, ec), tc.seed,
                   inputs, ["ablation.tsv", "ablation.png"])
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> _Parser:
    p = _Parser(prog="mlgssl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a block-model bundle")
    sp.add_argument("--sizes", default="100,100", help="comma-separated block sizes")
    sp.add_argument("--p-in", dest="p_in", type=float, default=0.1)
    sp.add_argument("--p-out", dest="p_out", type=float, default=0.01)
    sp.add_argument("--feature-dim", type=int, default=16)
    sp.add_argument("--noise-sigma", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    def add_train_flags(q, with_eval=True):
        q.add_argument("--data", required=True, help="graph bundle directory")
        q.add_argument("--config", default=None, help="key=value config file")
        q.add_argument("--variant", choices=VARIANTS, default=None)
        q.add_argument("--levels", default=None, help="comma-separated levels")
        q.add_argument("--m", type=float, default=None)
        q.add_argument("--gamma", type=float, default=None)
        q.add_argument("--epochs", type=int, default=None)
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--lr", type=float, default=None)
        q.add_argument("--kappa", type=int, default=None)
        q.add_argument("--n1", type=int, default=None)
        q.add_argument("--n2", type=int, default=None)
        q.add_argument("--clusters", default=None)
        q.add_argument("--ablation", choices=ABLATIONS, default=None)
        q.add_argument("--beta", default=None)
        q.add_argument("--no-figures", action="store_true")
        q.add_argument("--out", required=True)

    tp = sub.add_parser("train", help="train and persist checkpoint + metrics")
    add_train_flags(tp)
    tp.add_argument("--no-eval", action="store_true",
                    help="skip the downstream suite after training")
    tp.add_argument("--grad-cosine", action="store_true",
                    help="persist the per-level gradient alignment matrix")
    tp.add_argument("--grad-cosine-epochs", type=int, default=10)
    tp.set_defaults(func=cmd_train)

    ep = sub.add_parser("eval", help="downstream evaluation suite")
    add_train_flags(ep)
    ep.add_argument("--checkpoint", default=None,
                    help="reuse a trained checkpoint for the full-graph tasks")
    ep.set_defaults(func=cmd_eval)

    dp = sub.add_parser("dynamics", help="closed-form surface and descent suites")
    dp.add_argument("--m", type=float, default=0.15)
    dp.add_argument("--gamma", type=float, default=1.5)
    dp.add_argument("--resolution", type=int, default=101)
    dp.add_argument("--contraction-runs", type=int, default=100)
    dp.add_argument("--seed", type=int, default=None)
    dp.add_argument("--out", required=True)
    dp.set_defaults(func=cmd_dynamics)

    gp = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    gp.add_argument("--data", default=None, help="bundle; defaults to a small synthetic graph")
    gp.add_argument("--variants", default="all")
    gp.add_argument("--eps", type=float, default=1e-4)
    gp.add_argument("--tol", type=float, default=1e-4)
    gp.add_argument("--hidden", type=int, default=8)
    gp.add_argument("--m", type=float, default=0.15)
    gp.add_argument("--gamma", type=float, default=1.5)
    gp.add_argument("--seed", type=int, default=None)
    gp.add_argument("--out", required=True)
    gp.set_defaults(func=cmd_gradcheck)

    ap = sub.add_parser("ablate", help="evaluate every level subset")
    add_train_flags(ap)
    ap.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return int(args.func(args) or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BundleError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NonFiniteError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
