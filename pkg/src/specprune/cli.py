"""Command-line harness: train, spectrum, prune, eval, sweep, report.

Configs are flat key = value text files ('#' starts a comment); every
value can be overridden on the command line. Each output directory gets
a run_manifest.json snapshotting the command, resolved config, seeds and
paths; all other outputs are byte-reproducible under a fixed manifest.
"""

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bound_report
from .covariance import eigen_report, layer_cov, channel_cov, write_eigen_csv
from .data import Dataset, digits784, load_idx, synth_spectrum
from .errors import SpecPruneError
from .network import Network, load, save
from .pruning import (
    PruneConfig,
    SelectionResult,
    compression_error,
    output_norm,
    prune,
)
from .training import TrainConfig, accuracy, evaluate_loss, make_dense_network, train

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def parse_config(path) -> dict:
    """Flat key = value file; later keys win, '#' comments, blank lines ok."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _get(cfg: dict, key: str, default=None, cast=str):
    if key not in cfg:
        return default
    return cast(cfg[key])


def _bool(value: str) -> bool:
    return value.lower() in ("1", "true", "yes", "on")


def load_dataset(cfg: dict) -> Dataset:
    kind = cfg.get("data", "synth")
    if kind == "synth":
        return synth_spectrum(
            n=_get(cfg, "synth.n", 1000, int),
            d=_get(cfg, "synth.d", 20, int),
            decay=_get(cfg, "synth.decay", 1.0, float),
            seed=_get(cfg, "synth.seed", 0, int),
            teacher=_get(cfg, "synth.teacher", "relu"),
        )
    if kind == "idx":
        return load_idx(
            cfg["idx.images"], cfg["idx.labels"],
            limit=_get(cfg, "idx.limit", None, int),
        )
    if kind == "digits":
        return digits784(
            n=_get(cfg, "digits.n", 10000, int),
            seed=_get(cfg, "digits.seed", 0, int),
        )
    raise ValueError(f"unknown data kind {kind!r}")


def write_manifest(out_dir: Path, command: str, cfg: dict, args_snapshot: dict) -> None:
    manifest = {
        "command": command,
        "config": dict(sorted(cfg.items())),
        "args": dict(sorted(args_snapshot.items())),
        "version": __version__,
        "wall_clock": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _merge_overrides(cfg: dict, args) -> dict:
    merged = dict(cfg)
    if args.seed is not None:
        merged["train.seed"] = str(args.seed)
        merged["net.seed"] = str(args.seed)
    return merged


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = _merge_overrides(parse_config(args.config), args)
    data = load_dataset(cfg)
    dims = [int(v) for v in cfg["net.widths"].split(",")]
    if dims[0] != data.dim or dims[-1] != data.targets.shape[1]:
        raise ValueError(
            f"net.widths {dims} does not match data {data.dim} -> {data.targets.shape[1]}"
        )
    net = make_dense_network(dims, activation=_get(cfg, "net.activation", "relu"),
                             seed=_get(cfg, "net.seed", 0, int))
    tcfg = TrainConfig(
        epochs=_get(cfg, "train.epochs", 10, int),
        batch_size=_get(cfg, "train.batch_size", 100, int),
        learning_rate=_get(cfg, "train.learning_rate", 0.1, float),
        weight_decay=_get(cfg, "train.weight_decay", 0.0, float),
        seed=_get(cfg, "train.seed", 0, int),
        loss=_get(cfg, "train.loss", "squared"),
    )
    trained = train(net, data, tcfg)
    out = Path(args.out)
    save(trained, out)
    metrics = {"train_loss": evaluate_loss(trained, data, tcfg.loss)}
    if data.targets.shape[1] >= 2:
        metrics["train_accuracy"] = accuracy(trained, data)
    _write_json(out / "metrics.json", metrics)
    write_manifest(out, "train", cfg, {"out": str(out)})
    print(f"trained model written to {out} (loss {metrics['train_loss']:.6g})")
    return EXIT_OK


def _parse_layers(text: str | None, net: Network) -> list[int]:
    if not text:
        return list(range(2, net.depth + 1))
    return [int(v) for v in text.split(",")]


def _parse_widths(text: str | None, layers: list[int]) -> dict | None:
    """"150" applies to every listed layer; "4:150,3:500" is per layer."""
    if not text:
        return None
    if ":" not in text:
        return {l: int(text) for l in layers}
    out = {}
    for part in text.split(","):
        layer, width = part.split(":")
        out[int(layer)] = int(width)
    return out


DEFAULT_LAMBDA_COEF = 1e-6


def _prune_config_from_args(cfg: dict, args, layers: list[int]) -> PruneConfig:
    widths = _parse_widths(args.widths or cfg.get("prune.widths"), layers)
    lam_coef = args.lambda_coef
    if lam_coef is None:
        lam_coef = _get(cfg, "prune.lambda_coef", None, float)
    if widths is None and lam_coef is None:
        lam_coef = DEFAULT_LAMBDA_COEF  # lambda_l = 1e-6 * trace by default
    budget = not args.no_budget_constraint
    if "prune.budget_constraint" in cfg and not args.no_budget_constraint:
        budget = _bool(cfg["prune.budget_constraint"])
    tau = _get(cfg, "prune.tau", None, float)
    theta = args.theta if args.theta is not None else _get(cfg, "prune.theta", 0.5, float)
    procedure = args.procedure or cfg.get("prune.procedure", "backward")
    return PruneConfig(theta=theta, widths=widths, lambda_coef=lam_coef,
                       procedure=procedure, budget_constraint=budget,
                       tau_override=tau, layers=layers)


def _selection_payload(selections) -> list[dict]:
    return [s.to_json_dict() for s in selections]


def cmd_prune(args) -> int:
    cfg = parse_config(args.config) if args.config else {}
    net = load(args.model)
    data = load_dataset(cfg)
    layers = _parse_layers(args.layers, net)
    pcfg = _prune_config_from_args(cfg, args, layers)
    outcome = prune(net, data, pcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save(outcome.network, out / "model")
    _write_json(out / "selections.json", _selection_payload(outcome.selections))
    metrics = {
        "compression_error": compression_error(net, outcome.network, data),
        "original_norm": output_norm(net, data),
        "feasible": outcome.feasible,
    }
    if metrics["original_norm"] > 0:
        metrics["relative_error"] = metrics["compression_error"] / metrics["original_norm"]
    if data.targets.shape[1] >= 2:
        metrics["accuracy_original"] = accuracy(net, data)
        metrics["accuracy_compressed"] = accuracy(outcome.network, data)
    _write_json(out / "metrics.json", metrics)
    if all(l.kind == "dense" for l in net.layers):
        report = bound_report(net, outcome.network, data, pcfg, t=args.t,
                              selections=outcome.selections,
                              loss=_get(cfg, "train.loss", "squared"))
        report.write_json(out / "bound_report.json")
        report.write_csv(out / "bound_report.csv")
    write_manifest(out, "prune", cfg, {
        "model": str(args.model), "out": str(out), "theta": pcfg.theta,
        "layers": layers, "procedure": pcfg.procedure,
    })
    status = "ok" if outcome.feasible else "INFEASIBLE (partial selection)"
    print(f"pruned model written to {out} [{status}], "
          f"error {metrics['compression_error']:.6g}")
    return EXIT_OK if outcome.feasible else EXIT_INFEASIBLE


def cmd_spectrum(args) -> int:
    cfg = parse_config(args.config) if args.config else {}
    net = load(args.model)
    data = load_dataset(cfg)
    layers = _parse_layers(args.layers, net)
    rows = {}
    covs = {}
    for layer in layers:
        if not 2 <= layer <= net.depth:
            raise ValueError(f"layer {layer} outside [2, {net.depth}]")
        if net.layers[layer - 2].kind == "conv2d":
            cov = channel_cov(net, data, layer)
        else:
            cov = layer_cov(net, data, layer)
        covs[layer] = cov
        rows[layer] = eigen_report(cov)
    write_eigen_csv(rows, args.out)
    if args.dof_out:
        import csv as _csv

        from .dof import dof, width_for_lambda

        with open(args.dof_out, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["layer", "lambda", "dof", "width_for_lambda"])
            for layer, cov in covs.items():
                for lam in np.logspace(-8, 0, 17) * cov.trace:
                    writer.writerow([layer, repr(float(lam)),
                                     repr(dof(cov, float(lam))),
                                     width_for_lambda(cov, float(lam))])
        print(f"dof profiles written to {args.dof_out}")
    print(f"spectra for layers {layers} written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = parse_config(args.config) if args.config else {}
    net = load(args.model)
    data = load_dataset(cfg)
    loss_kind = _get(cfg, "train.loss", "squared")
    metrics = {
        "loss": evaluate_loss(net, data, loss_kind),
        "output_norm": output_norm(net, data),
    }
    if data.targets.shape[1] >= 2:
        metrics["accuracy"] = accuracy(net, data)
    if args.compare:
        other = load(args.compare)
        metrics["compression_error"] = compression_error(net, other, data)
        if metrics["output_norm"] > 0:
            metrics["relative_error"] = metrics["compression_error"] / metrics["output_norm"]
    if args.out:
        _write_json(args.out, metrics)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    import csv as _csv

    cfg = parse_config(args.config) if args.config else {}
    net = load(args.model)
    data = load_dataset(cfg)
    layers = _parse_layers(args.layers, net)
    if bool(args.theta_grid) == bool(args.width_grid):
        raise ValueError("give exactly one of --theta-grid / --width-grid")
    rows = []
    infeasible = False
    if args.theta_grid:
        thetas = [float(v) for v in args.theta_grid.split(",")]
        widths = _parse_widths(args.widths, layers)
        if widths is None:
            raise ValueError("theta sweep needs --widths")
        for theta in thetas:
            pcfg = PruneConfig(theta=theta, widths=widths,
                               lambda_coef=args.lambda_coef,
                               procedure=args.procedure or "backward",
                               budget_constraint=not args.no_budget_constraint,
                               layers=layers)
            outcome = prune(net, data, pcfg)
            infeasible |= not outcome.feasible
            rows.append(_sweep_row({"theta": theta}, net, outcome, data))
    else:
        grid = [int(v) for v in args.width_grid.split(",")]
        theta = args.theta if args.theta is not None else 0.5
        for width in grid:
            pcfg = PruneConfig(theta=theta, widths={l: width for l in layers},
                               lambda_coef=args.lambda_coef,
                               procedure=args.procedure or "backward",
                               budget_constraint=not args.no_budget_constraint,
                               layers=layers)
            outcome = prune(net, data, pcfg)
            infeasible |= not outcome.feasible
            rows.append(_sweep_row({"width": width}, net, outcome, data))
    keys = list(rows[0].keys())
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
    print(f"sweep ({len(rows)} rows) written to {args.out}")
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def _sweep_row(head: dict, net, outcome, data) -> dict:
    row = dict(head)
    err = compression_error(net, outcome.network, data)
    norm = output_norm(net, data)
    row["compression_error"] = repr(err)
    row["relative_error"] = repr(err / norm if norm > 0 else math.nan)
    row["feasible"] = outcome.feasible
    if data.targets.shape[1] >= 2:
        row["accuracy"] = repr(accuracy(outcome.network, data))
    return row


def _selections_from_json(path) -> list[SelectionResult]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    out = []
    for entry in raw:
        out.append(SelectionResult(
            layer=entry["layer"],
            indices=np.asarray(entry["indices"], dtype=np.int64),
            a_hat=np.zeros((0, 0)),
            loss_input=entry["loss_input"],
            loss_output=entry["loss_output"],
            loss_combined=entry["loss_combined"],
            budget_used=entry["budget_used"],
            budget_limit=entry["budget_limit"],
            feasible=entry["feasible"],
            lam=entry["lambda"],
            theta=entry["theta"],
            tau=np.zeros(0),
            target_width=entry["target_width"],
        ))
    return out


def cmd_report(args) -> int:
    cfg = parse_config(args.config) if args.config else {}
    net = load(args.model)
    compressed = load(args.compressed)
    data = load_dataset(cfg)
    selections = _selections_from_json(args.selections) if args.selections else None
    theta = args.theta if args.theta is not None else _get(cfg, "prune.theta", 0.5, float)
    pcfg = PruneConfig(theta=theta, widths={}, lambda_coef=None, lambdas={},
                       procedure=args.procedure or "backward",
                       budget_constraint=not args.no_budget_constraint)
    report = bound_report(net, compressed, data, pcfg, t=args.t,
                          selections=selections,
                          loss=_get(cfg, "train.loss", "squared"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "bound_report.json")
    report.write_csv(out / "bound_report.csv")
    write_manifest(out, "report", cfg, {"model": str(args.model), "t": args.t})
    print(f"bound report written to {out} "
          f"(delta1 {report.delta1:.6g}, measured {report.measured_error:.6g})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specprune",
        description="Train, analyze, and spectrally prune small networks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True)
        if model:
            p.add_argument("--model", required=True)

    p = sub.add_parser("train", help="train a dense network on a dataset")
    common(p, model=False)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("spectrum", help="dump per-layer eigenvalue spectra to CSV")
    common(p)
    p.add_argument("--layers", help="comma-separated activation indices (2..L)")
    p.add_argument("--dof-out", dest="dof_out",
                   help="also write degrees-of-freedom profiles to this CSV")
    p.set_defaults(fn=cmd_spectrum)

    def prune_flags(p):
        p.add_argument("--layers", help="layers to prune (default: all 2..L)")
        p.add_argument("--theta", type=float, default=None)
        p.add_argument("--lambda-coef", dest="lambda_coef", type=float, default=None,
                       help="lambda_l = coef * trace(Sigma_l)")
        p.add_argument("--widths", help='"150" or "4:150,3:500"')
        p.add_argument("--procedure", choices=("backward", "simultaneous"), default=None)
        p.add_argument("--no-budget-constraint", action="store_true")
        p.add_argument("--t", type=float, default=1.0,
                       help="confidence parameter of the deviation term")

    p = sub.add_parser("prune", help="prune a trained model and write reports")
    common(p)
    prune_flags(p)
    p.set_defaults(fn=cmd_prune)

    p = sub.add_parser("eval", help="evaluate a model; optionally compare to another")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--compare")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="prune along a theta or width grid")
    common(p)
    prune_flags(p)
    p.add_argument("--theta-grid", dest="theta_grid")
    p.add_argument("--width-grid", dest="width_grid")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="bound report for an existing compressed model")
    common(p)
    p.add_argument("--compressed", required=True)
    p.add_argument("--selections", help="selections.json from the prune run")
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--procedure", choices=("backward", "simultaneous"), default=None)
    p.add_argument("--no-budget-constraint", action="store_true")
    p.add_argument("--t", type=float, default=1.0)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SpecPruneError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
