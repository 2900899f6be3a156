"""Command-line front end: ``bumphunt generate | hunt | experiment``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every command writes a ``manifest.json`` (or ``<name>.manifest.json`` next to
a generated dataset) with the resolved configuration and master seed.
"""

import argparse
import csv
import datetime
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import exceptions as exc_mod
from .bench import ExperimentDesign, gain_profile, run_experiment, write_results
from .datagen import MixtureConfig, ResponseSpec, build_covariance, equicorrelation
from .datagen import load_csv, sample_mixture, write_csv
from .exceptions import BumpHuntError, DataError, NumericalError, ValidationError
from .fastprim import FastPrimConfig, central_box_empirical, fastprim_iterative, fastprim_pca
from .boxes import stats_from_mask
from .pca import fit_rotation, rotate, box_to_input_rule
from .prim import PrimConfig, cover

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
SEED_ENV = "BUMPHUNT_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    parser = _Parser(prog="bumphunt", description="PRIM and fastPRIM bump hunting.")
    parser.add_argument("--version", action="version", version=f"bumphunt {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = sub.add_parser("generate", help="draw a synthetic dataset")
    gen.add_argument("--p", type=int, default=2)
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--w", type=float, default=1.0, help="Gaussian mixing weight")
    gen.add_argument("--mu", type=float, default=1.0)
    gen.add_argument("--sigma-response", type=float, default=0.2)
    gen.add_argument("--correlation", type=float, default=0.5,
                     help="equicorrelation of the preset covariance")
    gen.add_argument("--variances", type=_floats, default=None)
    gen.add_argument("--covariance", type=Path, default=None,
                     help="JSON file holding a p x p covariance matrix")
    gen.add_argument("--noise-bounds", type=float, nargs=2, default=None, metavar=("A", "B"))
    gen.add_argument("--noise-mu", type=float, default=0.0)
    gen.add_argument("--noise-sigma", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--labels", action="store_true", help="add a 0/1 target-component column")
    gen.add_argument("--out", type=Path, required=True)

    hunt = sub.add_parser("hunt", help="run PRIM or fastPRIM on a CSV dataset")
    hunt.add_argument("input", type=Path)
    hunt.add_argument("--response", default="z")
    hunt.add_argument("--algorithm", choices=("prim", "fastprim"), default="fastprim")
    hunt.add_argument("--space", choices=("input", "pc"), default="input")
    hunt.add_argument("--alpha", type=float, default=0.05)
    hunt.add_argument("--beta", type=float, default=0.05)
    hunt.add_argument("--coverage", type=int, default=20)
    hunt.add_argument("--paste", action="store_true")
    hunt.add_argument("--p-prime", type=int, default=None)
    hunt.add_argument("--mode", choices=("closed-form", "iterative"), default="closed-form")
    hunt.add_argument("--peel-criterion", choices=("min_removed", "max_mean"),
                      default="min_removed")
    hunt.add_argument("--out-dir", type=Path, required=True)

    exp = sub.add_parser("experiment", help="run a Monte-Carlo design file")
    exp.add_argument("design", type=Path)
    exp.add_argument("--out-dir", type=Path, required=True)
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--replicates", type=int, default=None)
    exp.add_argument("--p-values", type=_ints, default=None)
    exp.add_argument("--coverages", type=_ints, default=None)
    exp.add_argument("--threads", type=int, default=None)
    return parser


def resolve_seed(flag, default=0):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return default
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer")


def write_manifest(path, command, config, seed, inputs=(), outputs=()):
    manifest = {
        "subcommand": command,
        "config": config,
        "master_seed": seed,
        "version": __version__,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    Path(path).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest


def _config_of(args):
    out = {}
    for k, v in vars(args).items():
        if k == "command":
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def cmd_generate(args):
    seed = resolve_seed(args.seed)
    if args.covariance is not None and (args.variances is not None):
        raise UsageError("--covariance and --variances are mutually exclusive")
    if args.covariance is not None:
        try:
            matrix = np.array(json.loads(args.covariance.read_text(encoding="utf-8")), dtype=float)
        except (OSError, ValueError) as e:
            raise DataError(f"cannot read covariance file {args.covariance}: {e}") from e
        cov = build_covariance(np.diag(matrix), _correlation_of(matrix))
    else:
        variances = np.ones(args.p) if args.variances is None else np.array(args.variances)
        if variances.size != args.p:
            raise UsageError(f"--variances needs {args.p} values, got {variances.size}")
        cov = build_covariance(variances, equicorrelation(args.p, args.correlation))
    if cov.matrix.shape != (args.p, args.p):
        raise UsageError(f"covariance is {cov.matrix.shape}, --p is {args.p}")
    cfg = MixtureConfig(p=args.p, n=args.n, w=args.w, covariances=[cov.matrix],
                        responses=[ResponseSpec(args.mu, args.sigma_response)],
                        noise_bounds=None if args.noise_bounds is None else tuple(args.noise_bounds),
                        noise_response=ResponseSpec(args.noise_mu, args.noise_sigma),
                        covariance_repaired=cov.repaired)
    data = sample_mixture(cfg, seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, args.out, label_column="label" if args.labels else None)
    manifest_path = args.out.with_suffix(".manifest.json")
    config = _config_of(args)
    config["mixture"] = cfg.to_dict()
    write_manifest(manifest_path, "generate", config, seed, outputs=[args.out])
    if cov.repaired:
        print(f"warning: covariance was not positive definite; eigenvalues clipped "
              f"(min was {cov.min_eigenvalue:.3g})", file=sys.stderr)
    print(f"wrote {data.n} rows x {data.p} predictors to {args.out}")
    return EXIT_OK


def _correlation_of(matrix):
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataError("covariance file must hold a square matrix")
    d = np.sqrt(np.diag(matrix))
    if np.any(d <= 0):
        raise DataError("covariance diagonal must be positive")
    return matrix / np.outer(d, d)


def _write_boxes_csv(path, boxes, names, accepted):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["box", "accepted", "dimension", "lower", "upper"])
        for k, (box, acc) in enumerate(zip(boxes, accepted), start=1):
            for name, lo, hi in zip(names, box.lower, box.upper):
                writer.writerow([k, int(acc), name,
                                 "" if np.isinf(lo) else repr(float(lo)),
                                 "" if np.isinf(hi) else repr(float(hi))])


def cmd_hunt(args):
    try:
        data = load_csv(args.input, response=args.response)
    except ValidationError as e:
        raise DataError(str(e)) from e
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    trace_path, boxes_path, rule_path = out / "trace.json", out / "boxes.csv", out / "rule.json"
    outputs = [trace_path, boxes_path]
    rotation = None
    work = data
    if args.space == "pc":
        rotation = fit_rotation(data)
        work = rotate(data, rotation)
    names = list(work.columns)
    lines = [f"{args.algorithm} in {args.space} space on {data.n} rows x {data.p} predictors"]

    if args.algorithm == "prim":
        if args.p_prime is not None:
            raise UsageError("--p-prime applies to fastprim only")
        config = PrimConfig(args.alpha, args.beta, args.coverage, args.paste,
                            peel_criterion=args.peel_criterion)
        trace = cover(work, config)
        boxes = [r.box for r in trace.rounds]
        accepted = [r.accepted for r in trace.rounds]
        payload = {"algorithm": "prim", "space": args.space, **trace.to_dict()}
        support = trace.covered_rows(accepted_only=True).size / data.n
        max_peels = max((r.peels for r in trace.rounds), default=0)
        lines.append(f"rounds: {len(trace.rounds)} ({sum(accepted)} accepted), "
                     f"stop: {trace.stop_reason}, max peels per round: {max_peels}")
        lines.append(f"region support: {support:.4f}")
        rules = None
        if rotation is not None:
            rules = [box_to_input_rule(b, rotation) for b in trace.accepted_boxes]
    else:
        config = FastPrimConfig(args.beta, args.coverage, args.p_prime, args.mode, args.alpha)
        rules = None
        if args.space == "pc":
            res = fastprim_pca(data, config, rotation=rotation)
            box, stats = res.box, res.stats
            payload = {"algorithm": "fastprim", "config": config.to_dict(), **res.to_dict()}
            rules = [res.rule]
        else:
            if args.p_prime is not None and args.p_prime < data.p:
                config = FastPrimConfig(args.beta, args.coverage, args.p_prime, args.mode,
                                        args.alpha)
            if args.mode == "closed-form":
                box, stats = central_box_empirical(work, config)
                payload = {"algorithm": "fastprim", "space": "input",
                           "config": config.to_dict(), "box": box.to_dict(),
                           "stats": stats.to_dict()}
            else:
                ft = fastprim_iterative(work, config)
                box = ft.bounding_box
                stats = stats_from_mask(work.Z, box.contains(work.X))
                payload = {"algorithm": "fastprim", "space": "input",
                           "config": config.to_dict(), "box": box.to_dict(),
                           "stats": stats.to_dict(), "trace": ft.to_dict()}
        boxes, accepted = [box], [True]
        lines.append(f"beta_T: {config.beta_t:.6f}")
        lines.append(f"box support: {stats.support:.4f}, output mean: {stats.output_mean:.4f}")

    trace_path.write_text(json.dumps(payload, indent=2, default=_json_default), encoding="utf-8")
    _write_boxes_csv(boxes_path, boxes, names, accepted)
    if rules is not None:
        rule_path.write_text(json.dumps([r.to_list() for r in rules], indent=2), encoding="utf-8")
        outputs.append(rule_path)
        for k, rule in enumerate(rules, start=1):
            lines.append(f"rule {k}:")
            lines.extend("  " + s for s in rule.describe(list(data.columns)).splitlines())
    else:
        for k, (box, acc) in enumerate(zip(boxes, accepted), start=1):
            if not acc:
                continue
            lines.append(f"box {k}:")
            for name, lo, hi in zip(names, box.lower, box.upper):
                if np.isfinite(lo) or np.isfinite(hi):
                    lines.append(f"  {lo:.4f} <= {name} <= {hi:.4f}")
    write_manifest(out / "manifest.json", "hunt", _config_of(args), None,
                   inputs=[args.input], outputs=outputs)
    print("\n".join(lines))
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def cmd_experiment(args):
    try:
        raw = json.loads(args.design.read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(f"cannot read design file {args.design}: {e}")
    except ValueError as e:
        raise UsageError(f"design file {args.design} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise UsageError("design file must hold a JSON object")
    overrides = {"replicates": args.replicates, "p_values": args.p_values,
                 "coverages": args.coverages, "threads": args.threads}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    raw["master_seed"] = resolve_seed(args.seed, raw.get("master_seed", 0))
    try:
        design = ExperimentDesign.from_dict(raw)
    except (ValidationError, TypeError) as e:
        raise UsageError(f"invalid design: {e}")
    records = run_experiment(design)
    csv_path, json_path = write_results(records, design, args.out_dir)
    write_manifest(args.out_dir / "manifest.json", "experiment", design.to_dict(),
                   design.master_seed, inputs=[args.design], outputs=[csv_path, json_path])
    print(f"{len(records)} records -> {csv_path}")
    print(f"{'algorithm':<9} {'p':>4} {'t':>3} {'ratio PC/input':>15} {'se':>9} {'gain share':>10}")
    for row in gain_profile(records):
        if row["status"] == "missing":
            print(f"{row['algorithm']:<9} {row['p']:>4} {row['coverage']:>3} {'missing':>15}")
            continue
        print(f"{row['algorithm']:<9} {row['p']:>4} {row['coverage']:>3} "
              f"{row['ratio']:>15.4g} {row['ratio_se']:>9.3g} {row['frac_gain']:>10.2f}")
    failures = [r for r in records if r.error is not None]
    if failures:
        print(f"{len(failures)} of {len(records)} records failed; see {json_path}", file=sys.stderr)
        names = {r.error.split(":", 1)[0] for r in failures}
        numerical = any(isinstance(getattr(exc_mod, nm, None), type)
                        and issubclass(getattr(exc_mod, nm), NumericalError) for nm in names)
        return EXIT_NUMERICAL if numerical else EXIT_DATA
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "hunt": cmd_hunt, "experiment": cmd_experiment}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BumpHuntError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
