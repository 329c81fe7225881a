"""``lab <scenario> --config <file> [--oracle] [--out <dir>] [--mode exact|numeric] [--tol <x>]``

Exit status: 0 when every check passes, 1 when a check fails, 2 for an invalid
configuration (including missing or duplicate oracle keys).
"""

from __future__ import annotations

import argparse
import sys

from .oracle import ConfigInvalid, OracleStore
from .scenarios import SCENARIOS, CheckFailed, ScenarioConfig, exit_code, load_config, run_scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Run a verification scenario and write reports.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="JSON file with scenario parameters (defaults apply when omitted)")
    p.add_argument("--oracle", action="store_true",
                   help="compute brute-force reference values and record them in the oracle store first")
    p.add_argument("--out", default="reports", help="output directory (default: ./reports)")
    p.add_argument("--mode", choices=("exact", "numeric"), default="exact")
    p.add_argument("--tol", type=float, default=1e-12, help="tolerance in numeric mode")
    p.add_argument("--store", help="oracle store path (default: the packaged store)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        store = OracleStore(args.store) if args.store else OracleStore()
        cfg = ScenarioConfig(args.scenario, {}, args.out, args.mode, args.tol, args.oracle, store)
        res = run_scenario(cfg, load_config(args.config))
        code = exit_code(res)
        if code:
            raise CheckFailed(f"{res.scenario}: checks failed (see {cfg.out})")
    except ConfigInvalid as e:
        print(f"lab: invalid configuration: {e}", file=sys.stderr)
        return 2
    except CheckFailed as e:
        print(f"lab: {e}", file=sys.stderr)
        return 1
    print(f"{res.scenario}: pass ({', '.join(f'{k}={v}' for k, v in res.counts.items())})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
