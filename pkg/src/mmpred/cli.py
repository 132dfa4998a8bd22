"""Command line: ``mmpred generate | train | evaluate | explain | report``.

Settings come from built-in defaults, then an optional JSON config file
(``--config``), then command-line flags; later sources win. Relative output
paths are resolved under ``$MMPRED_OUTPUT_ROOT`` when that variable is set.

Exit codes: 0 success, 2 configuration error, 3 pipeline error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .pipeline import ConfigError, PipelineError, RunConfig
from .synthgen import ConfigError as GeneratorError
from .synthgen import GeneratorConfig, cohort_fixtures, generate_cohort, write_cohort

OUTPUT_ROOT_ENV = "MMPRED_OUTPUT_ROOT"


def _resolve(path) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) / p if root and not p.is_absolute() else p


def _load_file(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path}: {e}") from None


def _run_config(args) -> RunConfig:
    d = _load_file(args.config)
    if getattr(args, "cohort", None):
        d["cohort"] = args.cohort
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "mode", None):
        d.setdefault("split", {})["mode"] = args.mode
    if getattr(args, "out", None):
        d["output_dir"] = args.out
    cfg = RunConfig.from_dict(d)
    cfg.output_dir = str(_resolve(cfg.output_dir))
    return cfg


def cmd_generate(args) -> int:
    d = _load_file(args.config).get("generate", {})
    fixture = args.fixture or d.get("fixture")
    seed = args.seed if args.seed is not None else d.get("seed", 0)
    try:
        if fixture:
            fixtures = cohort_fixtures(seed)
            if fixture not in fixtures:
                raise ConfigError(f"unknown fixture {fixture!r}; choose from {sorted(fixtures)}")
            gen = fixtures[fixture]
        else:
            g = dict(d.get("generator", {}))
            if args.n is not None:
                g["n_patients"] = args.n
            if args.pos_frac is not None:
                g["positive_fraction"] = args.pos_frac
            g["seed"] = seed
            gen = GeneratorConfig.from_dict(g)
        patients = generate_cohort(gen)
    except (GeneratorError, TypeError) as e:
        raise ConfigError(f"generate: {e}") from None
    out = _resolve(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_cohort(out, patients)
    n_pos = sum(p.y for p in patients)
    print(f"wrote {len(patients)} patients ({n_pos} positive) to {out}")
    return 0


def cmd_train(args) -> int:
    out = pipeline.train(_run_config(args))
    print(f"trained run in {out}")
    return 0


def _run_dir(args) -> Path:
    return _resolve(args.run)


def cmd_evaluate(args) -> int:
    print(f"wrote {pipeline.evaluate(_run_dir(args))}")
    return 0


def cmd_explain(args) -> int:
    run = _run_dir(args)
    if args.n_patients is not None or args.n_coalitions is not None:
        cfg = pipeline.load_config(run)
        if args.n_patients is not None:
            cfg.explain["n_patients"] = args.n_patients
        if args.n_coalitions is not None:
            cfg.explain["n_coalitions"] = args.n_coalitions
        (run / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    print(f"wrote explanations to {pipeline.explain(run)}")
    return 0


def cmd_report(args) -> int:
    print(f"wrote {pipeline.report(_run_dir(args))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmpred", description="Multimodal metastasis prediction pipeline.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic cohort file")
    g.add_argument("--config")
    g.add_argument("--fixture", help="breast-like, colon-like, lung-like or prostate-like")
    g.add_argument("--n", type=int)
    g.add_argument("--pos-frac", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="select and fit unimodal and fused models")
    t.add_argument("--config")
    t.add_argument("--cohort")
    t.add_argument("--mode", choices=["tripod2a", "nested"])
    t.add_argument("--seed", type=int)
    t.add_argument("-o", "--out", help="run directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a trained run on its test folds")
    e.add_argument("run")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("explain", help="SHAP attributions, faithfulness and censored re-test")
    x.add_argument("run")
    x.add_argument("--n-patients", type=int)
    x.add_argument("--n-coalitions", type=int)
    x.set_defaults(func=cmd_explain)

    r = sub.add_parser("report", help="collect the run outputs into report.md")
    r.add_argument("run")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except PipelineError as e:
        print(f"pipeline error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
