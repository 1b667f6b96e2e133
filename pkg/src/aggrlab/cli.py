"""Command-line entry point: ``aggrlab <command> ...``.

Exit status is 0 on success, 1 on invalid input and 2 when a verification
battery fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .aggregators import aggregator_from_json, true_optimal
from .batteries import BATTERIES, run_lemma_suite
from .errors import AggrLabError, ConfigError
from .hard_instances import DISTINGUISHERS, DzFamily, ci_pair_build, distinguish_experiment, dz_build, dz_table
from .harness import LEARNERS, MODEL_GENERATORS, ExperimentConfig, run_curve
from .metrics import expected_loss_exact, expected_loss_mc, mc_gap
from .model import load_model, model_to_dict, sample, samples_from_csv, samples_to_csv
from .rng import stream

EXIT_OK, EXIT_INVALID, EXIT_BATTERY = 0, 1, 2


def _kv(text: str) -> dict:
    """Parse ``a=1,b=2.5,c=x`` into a dict, converting numbers."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ConfigError(f"expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        out[key.strip()] = _number(value.strip())
    return out


def _number(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value in ("true", "false"):
        return value == "true"
    return value


def _params(pairs: list[str] | None) -> dict:
    out = {}
    for p in pairs or []:
        out.update(_kv(p))
    return out


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read(path: str) -> str:
    return Path(path).read_text()


# ---------------------------------------------------------------------------
# commands


def cmd_gen_model(args) -> int:
    if args.generator not in MODEL_GENERATORS:
        raise ConfigError(f"unknown generator {args.generator!r}; known: {', '.join(sorted(MODEL_GENERATORS))}")
    params = _params(args.param)
    if args.generator in ("random_joint", "random_cond_indep", "dz"):
        params.setdefault("seed", args.seed)
    model = MODEL_GENERATORS[args.generator](**params)
    _emit(_dumps(model_to_dict(model)), args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_model(args.model)
    samples = sample(model, args.T, args.seed)
    if args.format == "json":
        doc = {"seed": args.seed, "reports": samples.reports.tolist(), "outcomes": samples.outcomes.tolist()}
        _emit(_dumps(doc), args.out)
    else:
        _emit(samples_to_csv(samples), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    if args.learner not in LEARNERS:
        raise ConfigError(f"unknown learner {args.learner!r}; known: {', '.join(sorted(LEARNERS))}")
    samples = samples_from_csv(_read(args.samples), seed=args.seed)
    model = load_model(args.model) if args.model else None
    if args.learner == "bayes_optimal" and model is None:
        raise ConfigError("bayes_optimal needs --model")
    f = LEARNERS[args.learner](samples, model, _params(args.param))
    _emit(json.dumps(f.to_dict(), sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    f = aggregator_from_json(_read(args.aggregator))
    model = load_model(args.model)
    if args.mc:
        fresh = sample(model, args.mc, args.seed, substream=("eval",))
        rep = mc_gap(fresh, f, true_optimal(model))
    elif args.samples:
        rep = expected_loss_mc(samples_from_csv(_read(args.samples)), f)
    else:
        rep = expected_loss_exact(model, f)
    if args.format == "csv":
        d = rep.to_dict()
        keys = sorted(d)
        _emit(",".join(keys) + "\n" + ",".join("" if d[k] is None else str(d[k]) for k in keys) + "\n", args.out)
    else:
        _emit(_dumps(rep.to_dict()), args.out)
    return EXIT_OK


def cmd_curve(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config = ExperimentConfig.from_dict({**_config_dict(config), "seed": args.seed}, base_dir=config.base_dir)
    result = run_curve(config)
    csv_path = config.csv_path
    json_path = args.summary or config.json_path
    if args.out:
        csv_path = args.out
    if csv_path:
        Path(csv_path).write_text(result.to_csv())
    else:
        sys.stdout.write(result.to_csv() if args.format != "json" else result.to_json())
    if json_path:
        Path(json_path).write_text(result.to_json())
    return EXIT_OK


def _config_dict(config: ExperimentConfig) -> dict:
    d = config.to_dict()
    d["output"] = {"csv": config.csv_path, "json": config.json_path}
    return d


def cmd_hard(args) -> int:
    if args.kind == "dz":
        fam = DzFamily(args.m, args.n, args.eps)
        z = fam.random_sign(stream(args.seed, "dz-sign"))
        doc = {
            "m": fam.m,
            "n": fam.n,
            "eps": fam.eps,
            "c": fam.c,
            "W": fam.W,
            "bound": fam.bound,
            "z": z.tolist(),
            "tv_flip": fam.expected_tv_flip(),
            "table": dz_build(fam, z).probs.tolist(),
            "max_scaled_entry": float(dz_table(fam, z).max() * fam.size),
        }
    else:
        pair = ci_pair_build(args.n, args.eps)
        doc = {
            "n": pair.n,
            "eps": pair.eps,
            "priors": list(pair.priors),
            "first": model_to_dict(pair.first),
            "second": model_to_dict(pair.second),
            "hellinger_sq": pair.hellinger_exact(),
            "hellinger_sq_factorized": pair.hellinger_factorized(),
            "hellinger_sq_chain_bound": pair.hellinger_chain_bound(),
        }
    _emit(_dumps(doc), args.out)
    return EXIT_OK


def cmd_distinguish(args) -> int:
    if args.cipair:
        spec = _kv(args.cipair)
        d1, d2 = ci_pair_build(int(spec.get("n", 4)), float(spec.get("eps", 1e-6))).distributions()
    elif args.dz:
        spec = _kv(args.dz)
        fam = DzFamily(int(spec.get("m", 2)), int(spec.get("n", 2)), float(spec.get("eps", 0.01)))
        z = fam.random_sign(stream(args.seed, "dz-sign"))
        d1, d2 = dz_build(fam, z), dz_build(fam, -z)
    else:
        raise ConfigError("give --cipair or --dz")
    if args.distinguisher not in DISTINGUISHERS:
        raise ConfigError(f"unknown distinguisher {args.distinguisher!r}")
    rep = distinguish_experiment(d1, d2, args.T, args.trials, args.distinguisher, args.seed)
    if args.rows:
        Path(args.rows).write_text(rep.rows_csv())
    _emit(rep.rows_csv() if args.format == "csv" else rep.summary_json(), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_lemma_suite(args.battery, args.seed)
    _emit(report.to_csv() if args.format == "csv" else report.to_json(), args.out)
    return EXIT_OK if report.passed else EXIT_BATTERY


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, fmt: str = "json", seed_default: int | None = 0) -> None:
    p.add_argument("--seed", type=int, default=seed_default, help="master seed")
    p.add_argument("--out", help="write the primary output here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=fmt)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggrlab", description="Sample-efficient forecast aggregation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-model", help="write a model as JSON")
    p.add_argument("--generator", required=True, help=", ".join(sorted(MODEL_GENERATORS)))
    p.add_argument("--param", action="append", help="key=value[,key=value]")
    _common(p)
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("sample", help="draw report/outcome records from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--T", type=int, required=True)
    _common(p, fmt="csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="fit an aggregator on a samples CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--learner", required=True, help=", ".join(sorted(LEARNERS)))
    p.add_argument("--model", help="model JSON, needed by bayes_optimal")
    p.add_argument("--param", action="append", help="key=value[,key=value]")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="loss and gap of an aggregator")
    p.add_argument("--model", required=True)
    p.add_argument("--aggregator", required=True)
    p.add_argument("--samples", help="evaluate empirically on this CSV instead")
    p.add_argument("--mc", type=int, help="Monte-Carlo gap with this many fresh records")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="run a sample-complexity curve from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--summary", help="JSON summary path")
    _common(p, fmt="csv", seed_default=None)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("hard", help="build a lower-bound instance")
    p.add_argument("kind", choices=("dz", "cipair"))
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--eps", type=float, default=0.01)
    _common(p)
    p.set_defaults(func=cmd_hard)

    p = sub.add_parser("distinguish", help="guess which of two distributions produced T samples")
    p.add_argument("--cipair", help="n=4,eps=1e-6")
    p.add_argument("--dz", help="m=2,n=2,eps=0.01 (z against -z)")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--distinguisher", default="likelihood_ratio", help=", ".join(sorted(DISTINGUISHERS)))
    p.add_argument("--rows", help="per-trial CSV path")
    _common(p)
    p.set_defaults(func=cmd_distinguish)

    p = sub.add_parser("verify", help="run a property battery")
    p.add_argument("battery", help="all, or one of: " + ", ".join(sorted(BATTERIES)))
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except (AggrLabError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"aggrlab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
