"""Command-line entry point: ``skillcoevo <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .agent import BACKENDS, PolicyConfig
from .bank import Bank, load_bank, save_bank
from .config import SCHEDULES, CoEvolutionConfig, default_workers, load_config
from .discovery.boundaries import BoundaryWeights
from .discovery.params import MaintenanceParams
from .discovery.segmentation import load_segments, save_segments
from .envs import GAMES, ConfigError, EnvConfig
from .metrics import EvolutionPoint, ReusabilityRow, reusability_report, to_csv, to_table
from .oracle import OracleSettings
from .orchestrator import evaluate, run_coevolution, update_bank
from .trajectory import collect_rollouts, load_trajectories, save_trajectories

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("skillcoevo")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _policy(args) -> PolicyConfig:
    settings = OracleSettings.from_env() if args.backend == "oracle" else None
    return PolicyConfig(backend=args.backend, oracle=settings)


def _bank_or_empty(path) -> Bank:
    return load_bank(path) if path else Bank()


def cmd_rollout(args) -> int:
    env = EnvConfig(args.game, args.seed, args.max_steps)
    bank = _bank_or_empty(args.bank)
    trajs = collect_rollouts(env, bank, _policy(args), args.episodes, args.seed,
                             iteration=args.iteration, workers=args.workers)
    save_trajectories(args.out, trajs)
    for t in trajs:
        print(f"{t.episode_id}\tsteps={t.primitive_length}\treward={t.total_reward:g}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_discover(args) -> int:
    trajs = [t for path in args.trajectories for t in load_trajectories(path)]
    if not trajs:
        raise UsageError("no trajectories in the given files")
    bank = _bank_or_empty(args.bank)
    per_traj, new_bank, mutations = update_bank(trajs, bank, BoundaryWeights(),
                                                MaintenanceParams(), args.iteration)
    save_bank(args.out_bank, new_bank)
    paths = [args.out_bank]
    if args.segments:
        save_segments(args.segments, [s for segs in per_traj for s in segs])
        paths.append(args.segments)
    for traj, segs in zip(trajs, per_traj):
        spans = " ".join(f"[{s.t0},{s.t1}){s.label}" for s in segs)
        print(f"{traj.episode_id}: {spans}")
    for m in mutations:
        print(f"{m.kind}\t{'approved' if m.approved else 'rejected'}\t{m.reason}")
    print(f"bank version {bank.version} -> {new_bank.version}, "
          f"{len(new_bank.active_skills())} active skills")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_evolve(args) -> int:
    if args.config:
        config = load_config(args.config)
    elif args.game:
        config = CoEvolutionConfig.for_game(args.game, args.seed or 0)
    else:
        raise UsageError("evolve needs --config or --game")
    overrides = {}
    for key, value in (("total_steps", args.steps), ("episodes_per_step", args.episodes),
                       ("ckpt_interval", args.ckpt), ("output_dir", args.out),
                       ("workers", args.workers), ("seed_bank", args.seed_bank)):
        if value is not None:
            overrides[key] = value
    if args.config and args.seed is not None:
        overrides["game"] = replace(config.game, seed=args.seed)
    config = replace(config, **overrides)
    results = run_coevolution(config, resume=args.resume,
                              progress=lambda a: print(
                                  f"iteration {a.iteration}: mean reward {a.mean_reward:g}, "
                                  f"{a.evolution.active} active skills, "
                                  f"{sum(m.approved for m in a.mutations)}/{len(a.mutations)} "
                                  f"mutations approved", flush=True))
    out = Path(config.output_dir)
    print(f"wrote {out / 'config.ini'}")
    for a in results:
        for p in (a.trajectory_path, a.segments_path, a.mutations_path, a.report_path,
                  a.bank_snapshot_path):
            if p:
                print(f"wrote {out / p}")
    print(f"wrote {out / 'evolution.csv'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    env = EnvConfig(args.game, args.seed, args.max_steps)
    seeds = args.seeds if args.seeds else None
    n = len(seeds) if seeds else args.episodes
    summary = evaluate(args.bank, env, _policy(args), n, seeds)
    if args.json:
        print(json.dumps(summary.to_dict(), sort_keys=True))
    else:
        print(summary.format())
    return EXIT_OK


def cmd_report(args) -> int:
    emit = to_csv if args.format == "csv" else to_table
    if args.run:
        run = Path(args.run)
        reports = sorted(run.glob("iter_*/report.json"))
        if not reports:
            raise UsageError(f"no iteration reports under {run}")
        data = [json.loads(p.read_text(encoding="utf-8")) for p in reports]
        if args.what == "evolution":
            points = [EvolutionPoint(**d["evolution"]) for d in data]
            sys.stdout.write(emit(points, EvolutionPoint.HEADER))
            return EXIT_OK
        rows = [(d["iteration"], ReusabilityRow(**d["reusability"])) for d in data
                if d["reusability"]]
        if not rows:
            raise UsageError("no iteration has an active skill yet")
        if args.format == "csv":
            sys.stdout.write(to_csv([r for _, r in rows], ReusabilityRow.HEADER))
        else:
            sys.stdout.write(to_table([r for _, r in rows], ReusabilityRow.HEADER,
                                      [f"u={u}" for u, _ in rows]))
        return EXIT_OK
    if args.what == "evolution":
        raise UsageError("--what evolution needs --run")
    bank = load_bank(args.bank)
    segments = load_segments(args.segments) if args.segments else None
    sys.stdout.write(emit([reusability_report(bank, segments)], ReusabilityRow.HEADER))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skillcoevo", description="Skill discovery and co-evolution for text-state games.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def game_args(sp, episodes: int):
        sp.add_argument("--game", choices=GAMES, required=True)
        sp.add_argument("--episodes", type=int, default=episodes)
        sp.add_argument("--seed", type=int, default=0, help="first episode seed")
        sp.add_argument("--max-steps", type=int, default=None)
        sp.add_argument("--backend", choices=BACKENDS, default="heuristic")

    sp = sub.add_parser("rollout", help="play episodes and save trajectories (JSONL)")
    game_args(sp, 8)
    sp.add_argument("--bank", help="skill bank JSON (default: empty bank)")
    sp.add_argument("--iteration", type=int, default=0)
    sp.add_argument("--workers", type=int, default=default_workers())
    sp.add_argument("--out", required=True, help="output trajectory file")
    sp.set_defaults(func=cmd_rollout)

    sp = sub.add_parser("discover", help="segment trajectories and update a bank once")
    sp.add_argument("--trajectories", nargs="+", required=True)
    sp.add_argument("--bank", help="input bank (default: empty bank)")
    sp.add_argument("--out-bank", required=True)
    sp.add_argument("--segments", help="also write labeled segments (JSONL)")
    sp.add_argument("--iteration", type=int, default=None)
    sp.set_defaults(func=cmd_discover)

    sp = sub.add_parser("evolve", help="run the co-evolution loop")
    sp.add_argument("--config", help="INI config file")
    sp.add_argument("--game", choices=sorted(SCHEDULES), help="use the game's default schedule")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--steps", type=int, default=None, help="override total_steps")
    sp.add_argument("--episodes", type=int, default=None, help="override episodes_per_step")
    sp.add_argument("--ckpt", type=int, default=None, help="override ckpt_interval")
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--seed-bank", default=None, help="start from this bank instead of empty")
    sp.add_argument("--out", default=None, help="run directory")
    sp.add_argument("--resume", action="store_true", help="continue from the last snapshot")
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("evaluate", help="mean reward and 95%% CI with a read-only bank")
    game_args(sp, 16)
    sp.add_argument("--bank", help="skill bank JSON (default: empty bank)")
    sp.add_argument("--seeds", type=int, nargs="+", help="explicit seeds (overrides --episodes)")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("report", help="reuse table or evolution series")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--run", help="run directory from evolve")
    src.add_argument("--bank", help="bank JSON")
    sp.add_argument("--segments", help="segments JSONL (with --bank)")
    sp.add_argument("--what", choices=("reusability", "evolution"), default="reusability")
    sp.add_argument("--format", choices=("csv", "table"), default="table")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as err:
        print(f"skillcoevo: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:
        log.debug("runtime failure", exc_info=True)
        print(f"skillcoevo: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
