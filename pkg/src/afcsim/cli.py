"""afc-sim: run storage scenarios from YAML files or shipped presets.

    afc-sim run <scenario-file|preset> [--out DIR] [--seed N] [--workers K]
    afc-sim presets list
    afc-sim validate <scenario-file|preset>

Errors go to stderr as a single JSON object; the exit status is 2 for
invalid input and 1 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .experiments import PreconditionError
from .field_propagation import PropagationError
from .runner import OutputDirError, check_out_dir, execute, write_outputs
from .scenario import ScenarioError, list_presets, parse_scenario, preset_path


def _resolve(target: str) -> Path:
    p = Path(target)
    if p.exists() or p.suffix in (".yaml", ".yml") or "/" in target:
        return p
    return preset_path(target)


def _fail(kind: str, message: str, code: int, extra: dict | None = None) -> int:
    report = {"error": kind, "message": message}
    report.update(extra or {})
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    return code


def _cmd_run(args) -> int:
    ls = parse_scenario(_resolve(args.scenario), seed=args.seed, workers=args.workers)
    out_dir = args.out or ls.scenario.out_dir or f"afc-out-{Path(args.scenario).stem}"
    check_out_dir(out_dir)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        out = execute(ls)
    path = write_outputs(out, ls, out_dir)
    status = "PASS" if out.summary["passed"] else "CHECKS FAILED"
    print(f"{ls.kind}: {out.line} [{status}] -> {path}")
    return 0


def _cmd_validate(args) -> int:
    ls = parse_scenario(_resolve(args.scenario))
    print(f"ok: {ls.kind} scenario, seed {ls.config.master_seed}")
    return 0


def _cmd_presets(args) -> int:
    for name, desc in list_presets().items():
        print(f"{name:28s} {desc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="afc-sim", description="Atomic-frequency-comb storage simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file or preset")
    run.add_argument("scenario", help="YAML scenario file or preset name")
    run.add_argument("--out", help="output directory (default: from the scenario, else afc-out-<name>)")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--workers", type=int, help="parallel workers for scan points")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a scenario without running it")
    val.add_argument("scenario")
    val.set_defaults(func=_cmd_validate)

    pre = sub.add_parser("presets", help="shipped presets")
    pre_sub = pre.add_subparsers(dest="presets_command", required=True)
    pre_sub.add_parser("list", help="list preset names").set_defaults(func=_cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        return _fail("UsageError", "--seed must be >= 0", 2)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        return _fail("UsageError", "--workers must be >= 1", 2)
    try:
        return args.func(args)
    except ScenarioError as exc:
        return _fail("ScenarioError", str(exc), 2, {"problems": exc.problems, "source": exc.source})
    except OutputDirError as exc:
        return _fail("OutputDirError", str(exc), 2)
    except (PreconditionError, PropagationError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except RuntimeWarning as exc:
        return _fail("RuntimeWarning", str(exc), 1)
    except (ValueError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
