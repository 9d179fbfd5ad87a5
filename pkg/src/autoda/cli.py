"""Command-line entry point: ``autoda attack | evolve | report | dsl check``.

Exit codes: 0 success, 2 configuration errors (bad flags, config file,
program text or mismatched reports), 3 victim/data loading errors,
4 generator unavailable.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .core import AttackError, GeneratorUnavailable, LabelledPair
from .dsl import BUILTINS, ParseError, parse, pretty_print
from .engine import AttackConfig, ProgramProposal, StartingPointNotAdversarial, boundary_attack_proposal, run_attack
from .evolution import EvolutionConfig, run_evolution
from .report import (
    DEFAULT_CHECKPOINTS, EvalReport, SchemaMismatch, build_report, comparison_csv, comparison_text,
    write_trace_csv,
)
from .victims import (
    LabelOutOfRange, MalformedFile, hyperplane_instances, load_cifar10_batch, load_mlp,
    select_starting_point, sphere_instances,
)

log = logging.getLogger("autoda")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_GENERATOR = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _version() -> str:
    from . import __version__
    return __version__


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _checkpoints(text: str) -> list[int]:
    try:
        values = sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad checkpoint list {text!r}") from None
    if not values or values[0] < 1:
        raise argparse.ArgumentTypeError("checkpoints must be positive integers")
    return values


GLOBAL_KEYS = ("seed", "jobs", "config", "verbose")


def _common(suppress: bool) -> argparse.ArgumentParser:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=d(1), help="parallel workers (default 1)")
    p.add_argument("--config", default=d(None), help="JSON file of flag values (keys = flag names)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def _victim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--victim", choices=("sphere", "hyperplane", "mlp"), default="sphere")
    p.add_argument("--dim", type=int, default=16, help="input dimension of analytic victims")
    p.add_argument("--radius", type=float, default=0.4, help="sphere radius / hyperplane margin")
    p.add_argument("--start-factor", type=float, default=2.0,
                   help="start distance as a multiple of the optimum (analytic victims)")
    p.add_argument("--weights", help="MLP weight file (JSON) for --victim mlp")
    p.add_argument("--data", help="CIFAR-10 binary batch supplying images for --victim mlp")
    p.add_argument("--start-pool", type=int, default=10,
                   help="images after the targets used as candidate starting points (mlp)")


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    parser = argparse.ArgumentParser(prog="autoda", parents=[_common(suppress=False)],
                                     description="Random-walk decision-based attacks and program evolution.")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("attack", parents=[common], help="attack a victim with one proposal program")
    _victim_args(pa)
    pa.add_argument("--program", default="builtin:final",
                    help="builtin:final, builtin:initial, builtin:boundary or a .gen file")
    pa.add_argument("--budget", type=int, default=10000)
    pa.add_argument("--images", type=int, default=8)
    pa.add_argument("--initial-s", type=float, default=0.001)
    pa.add_argument("--checkpoints", type=_checkpoints, default=list(DEFAULT_CHECKPOINTS))
    pa.add_argument("--epsilon", type=float, default=0.5, help="success threshold")
    pa.add_argument("--name", help="attack name in the report (default: program)")
    pa.add_argument("--out", default="attack_out", help="output directory")

    pe = sub.add_parser("evolve", parents=[common], help="evolve proposal programs")
    _victim_args(pe)
    pe.add_argument("--generator", choices=("mock", "llm"), default="mock")
    pe.add_argument("--generations", type=int, default=20)
    pe.add_argument("--pop", type=int, default=10)
    pe.add_argument("--crossover-prob", type=float, default=1.0)
    pe.add_argument("--mutation-prob", type=float, default=0.5)
    pe.add_argument("--fitness-images", type=int, default=8)
    pe.add_argument("--fitness-budget", type=int, default=8000)
    pe.add_argument("--initial-s", type=float, default=0.001)
    pe.add_argument("--out", default="run", help="parent directory for timestamped run directories")
    pe.add_argument("--run-dir", help="exact run directory (overrides --out)")
    pe.add_argument("--resume", metavar="RUN_DIR", help="continue the run stored in RUN_DIR")
    pe.add_argument("--base-url", help="chat endpoint (default $AUTODA_BASE_URL)")
    pe.add_argument("--model", help="model name (default $AUTODA_MODEL)")
    pe.add_argument("--temperature", type=float, default=1.0)
    pe.add_argument("--max-retries", type=int, default=3, help="chat request retries before giving up")

    pr = sub.add_parser("report", parents=[common], help="compare evaluation reports")
    pr.add_argument("reports", nargs="+", help="report.json files")
    pr.add_argument("--csv", help="write the comparison table as CSV here")

    pd = sub.add_parser("dsl", parents=[common], help="DSL utilities")
    dsub = pd.add_subparsers(dest="dsl_command", required=True)
    pc = dsub.add_parser("check", parents=[common], help="parse and type-check a .gen file")
    pc.add_argument("file")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    """Parse ``argv``; values from ``--config`` act as defaults that explicit flags override."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(overrides, dict):
        parser.error("config file must hold a JSON object")
    overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
    unknown = sorted(k for k in overrides if not hasattr(args, k))
    if unknown:
        parser.error(f"unknown config key(s): {', '.join(unknown)}")
    if isinstance(overrides.get("checkpoints"), str):
        overrides["checkpoints"] = _checkpoints(overrides["checkpoints"])
    # global flags live on the top-level parser only; a subparser default
    # would overwrite a value given before the subcommand
    top = {k: v for k, v in overrides.items() if k in GLOBAL_KEYS}
    rest = {k: v for k, v in overrides.items() if k not in GLOBAL_KEYS}
    parser.set_defaults(**top)
    for p in _all_parsers(parser):
        if p is not parser:
            p.set_defaults(**rest)
    return parser.parse_args(argv)


def _all_parsers(parser: argparse.ArgumentParser):
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                yield from _all_parsers(sub)


def _rng_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def build_victims(args, n: int) -> list[LabelledPair]:
    if args.victim == "sphere":
        return sphere_instances(n, args.dim, args.radius, args.start_factor, seed=args.seed)
    if args.victim == "hyperplane":
        return hyperplane_instances(n, args.dim, args.radius, args.start_factor, seed=args.seed)
    if not args.weights or not args.data:
        raise CliError("--victim mlp needs --weights and --data", EXIT_CONFIG)
    try:
        oracle = load_mlp(args.weights)
        samples = load_cifar10_batch(args.data)
    except (OSError, ValueError, KeyError, MalformedFile, LabelOutOfRange) as exc:
        raise CliError(f"cannot load victim: {exc}", EXIT_DATA) from None
    if len(samples) < n + 1:
        raise CliError(f"{args.data} holds {len(samples)} images, need more than {n}", EXIT_DATA)
    try:
        pool = [(x, oracle.label_of(x)) for x, _ in samples[n: n + args.start_pool]]
        pairs = []
        for i, (x0, _) in enumerate(samples[:n]):
            label = oracle.label_of(x0)
            x1 = select_starting_point(x0, label, pool)
            pairs.append(LabelledPair(oracle, x0, label, x1, {"image": i}))
    except (AttackError, ValueError) as exc:
        raise CliError(f"cannot prepare victim: {exc}", EXIT_DATA) from None
    return pairs


def _load_proposal(spec: str):
    if spec == "builtin:boundary":
        return boundary_attack_proposal, "boundary"
    if spec.startswith("builtin:"):
        key = spec.split(":", 1)[1]
        if key not in BUILTINS:
            raise CliError(f"unknown builtin {spec!r}; choose from final, initial, boundary", EXIT_CONFIG)
        program = BUILTINS[key]()
        return (lambda: ProgramProposal(program)), key
    try:
        source = Path(spec).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read program: {exc}", EXIT_CONFIG) from None
    try:
        program = parse(source)
    except ParseError as exc:
        raise CliError(f"{spec}: {exc}", EXIT_CONFIG) from None
    return (lambda: ProgramProposal(program)), Path(spec).stem


def _snapshot(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose", "argv")}


def cmd_attack(args) -> EvalReport:
    make_proposal, default_name = _load_proposal(args.program)
    pairs = build_victims(args, args.images)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()

    def one(item):
        i, pair = item
        cfg = AttackConfig(max_queries=args.budget, initial_s=args.initial_s, seed=_rng_seed(args.seed, i))
        return run_attack(pair.oracle, pair.x0, pair.x1, make_proposal(), cfg, pair.label)

    try:
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                traces = list(pool.map(one, enumerate(pairs)))
        else:
            traces = [one(item) for item in enumerate(pairs)]
    except StartingPointNotAdversarial as exc:
        raise CliError(str(exc), EXIT_DATA) from None

    outputs = []
    for i, trace in enumerate(traces):
        write_trace_csv(trace, out / f"trace_{i}.csv")
        outputs.append(f"trace_{i}.csv")
    report = build_report({str(i): t for i, t in enumerate(traces)}, args.name or default_name,
                          args.checkpoints, args.epsilon, manifest="manifest.json")
    report.save(out / "report.json")
    outputs.append("report.json")
    manifest = {"command": "attack", "argv": args.argv, "config": _snapshot(args), "seed": args.seed,
                "version": _version(), "started": started, "finished": _now(), "outputs": outputs}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    print(comparison_text([report]), end="")
    return report


def _make_generator(args):
    if args.generator == "mock":
        from .llm import MockGenerator
        return MockGenerator(args.seed)
    from .llm import LlmConfig, LlmGenerator
    try:
        cfg = LlmConfig.from_env(base_url=args.base_url, model_name=args.model, temperature=args.temperature,
                                  max_retries=args.max_retries)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    return LlmGenerator(cfg)


VICTIM_KEYS = ("victim", "dim", "radius", "start_factor", "weights", "data", "start_pool", "seed")


def cmd_evolve(args) -> Path:
    if args.resume:
        run_dir = Path(args.resume)
        try:
            stored = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
            victim_spec = json.loads((run_dir / "victims.json").read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot resume {run_dir}: {exc}", EXIT_CONFIG) from None
        for key, value in victim_spec.items():
            setattr(args, key, value)
        config = EvolutionConfig(generations=args.generations, jobs=args.jobs, **stored)
    else:
        try:
            config = EvolutionConfig(
                generations=args.generations, pop_size=args.pop, crossover_prob=args.crossover_prob,
                mutation_prob=args.mutation_prob, fitness_images=args.fitness_images,
                fitness_budget=args.fitness_budget, seed=args.seed, initial_s=args.initial_s, jobs=args.jobs)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_CONFIG) from None
        if args.run_dir:
            run_dir = Path(args.run_dir)
        else:
            stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
            run_dir = Path(args.out) / stamp
            n = 1
            while run_dir.exists():
                n += 1
                run_dir = Path(args.out) / f"{stamp}-{n}"
        run_dir.mkdir(parents=True, exist_ok=True)
        victim_spec = {k: getattr(args, k) for k in VICTIM_KEYS}
        (run_dir / "victims.json").write_text(json.dumps(victim_spec, indent=1, sort_keys=True) + "\n",
                                              encoding="utf-8")

    victims = build_victims(args, config.fitness_images)
    generator = _make_generator(args)
    started = _now()
    print(f"run directory: {run_dir}")
    print(f"{'gen':>4}  {'best':>12}  {'mean':>12}  best_id")

    def show(pop):
        fits = [c.fitness for c in pop.members if not c.failed]
        best = pop.best()
        mean = float(np.mean(fits)) if fits else float("inf")
        best_fit = best.fitness if not best.failed else float("inf")
        print(f"{pop.generation:>4}  {best_fit:>12.6f}  {mean:>12.6f}  {best.id}", flush=True)

    code = 0
    try:
        run_evolution(config, generator, victims, run_dir, resume=bool(args.resume), on_generation=show)
    except GeneratorUnavailable as exc:
        print(f"generator unavailable: {exc}; partial history kept in {run_dir}", file=sys.stderr)
        code = EXIT_GENERATOR
    except AttackError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    manifest = {"command": "evolve", "argv": args.argv, "config": _snapshot(args), "seed": config.seed,
                "version": _version(), "started": started, "finished": _now(),
                "outputs": ["config.json", "victims.json", "gen_*/"]}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    if code:
        raise CliError("evolution aborted", code)
    return run_dir


def cmd_report(args) -> str:
    try:
        reports = [EvalReport.load(p) for p in args.reports]
        text = comparison_text(reports)
        table_csv = comparison_csv(reports)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    if args.csv:
        Path(args.csv).write_text(table_csv, encoding="utf-8")
    print(text, end="")
    return text


def cmd_dsl_check(args) -> str:
    try:
        source = Path(args.file).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {args.file}: {exc}", EXIT_CONFIG) from None
    try:
        program = parse(source)
    except ParseError as exc:
        raise CliError(f"{args.file}: {exc}", EXIT_CONFIG) from None
    text = pretty_print(program)
    print(text, end="")
    return text


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"attack": cmd_attack, "evolve": cmd_evolve, "report": cmd_report}
    try:
        if args.command == "dsl":
            cmd_dsl_check(args)
        else:
            handlers[args.command](args)
    except CliError as exc:
        print(f"autoda: error: {exc}", file=sys.stderr)
        return exc.code
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
