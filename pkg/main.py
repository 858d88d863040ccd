"""
Main entry point for the grokking geometry lab.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from config.settings import OUTPUT_DIR, SWEEP_SEED
from processors.input_processor import InputProcessor
from processors.output_processor import dump_dataset_csv
from processors.task_processor import build_task
from runners.analyzer import analyze_checkpoint
from runners.etf_check import run_etf_check, write_etf_check
from runners.experiment_runner import ExperimentRunner
from runners.sweep import sweep
from utils.errors import VerificationError
from utils.logger import log


def emit(payload: Dict[str, Any]):
    """One machine-readable JSON line on stdout."""
    print(json.dumps(payload, sort_keys=True, default=str), flush=True)


class GeometryLab:
    """Command dispatch for the CLI."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.input_processor = InputProcessor()

    def _config(self, seed: Optional[int] = None):
        return self.input_processor.resolve(
            config_path=self.args.config,
            preset=self.args.preset,
            seed=self.args.seed if seed is None else seed,
            output_dir=self.args.out,
            deterministic=self.args.deterministic,
        )

    def run(self) -> Dict[str, Any]:
        handler = {
            "generate": self.generate,
            "train": self.train,
            "sweep": self.sweep,
            "etf-check": self.etf_check,
            "analyze": self.analyze,
        }[self.args.command]
        result = handler()
        return {"status": "ok", "command": self.args.command, **result}

    def generate(self) -> Dict[str, Any]:
        cfg = self._config()
        seed = cfg.seeds[0]
        train, val = build_task(cfg.task_config(seed))
        out_dir = Path(cfg.output_dir or OUTPUT_DIR / cfg.name)
        path = dump_dataset_csv(train, val, out_dir / "dataset.csv")
        return {"path": path, "seed": seed, "train": len(train), "validation": len(val)}

    def train(self) -> Dict[str, Any]:
        cfg = self._config()
        runner = ExperimentRunner(cfg, workers=self.args.workers)
        logs = runner.run()
        final = {str(lg.seed): lg.records[-1].val_acc for lg in logs if lg.records}
        return {"output_dir": runner.output_dir, "final_val_acc": final}

    def sweep(self) -> Dict[str, Any]:
        if not self.args.param or not self.args.values:
            raise ValueError("sweep needs --param and --values")
        cfg = self._config(seed=SWEEP_SEED if self.args.seed is None else self.args.seed)
        values = parse_values(self.args.values)
        results = sweep(cfg, self.args.param, values, output_dir=self.args.out, workers=self.args.workers)
        return {"parameter": self.args.param, "runs": sorted(results)}

    def etf_check(self) -> Dict[str, Any]:
        grid = self.input_processor.load_etf_grid(self.args.preset or "etf-verify")
        result = run_etf_check(grid)
        paths = write_etf_check(result, self.args.out)
        if not result.passed:
            raise VerificationError(f"ETF check failed: {'; '.join(result.failures())}")
        return {"paths": paths, "cells": len(result.cells)}

    def analyze(self) -> Dict[str, Any]:
        if not self.args.checkpoint:
            raise ValueError("analyze needs --checkpoint")
        cfg = self._config()
        report = analyze_checkpoint(cfg, Path(self.args.checkpoint), self.args.seed)
        return {"report": report.model_dump()}


def parse_values(raw: str) -> List[Any]:
    """Comma-separated sweep values; JSON scalars where they parse, strings otherwise."""
    values = []
    for token in (t.strip() for t in raw.split(",")):
        if not token:
            continue
        try:
            values.append(json.loads(token))
        except json.JSONDecodeError:
            values.append(token)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Neural collapse and relative flatness on grokking tasks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Train the grokking baseline on its three default seeds
  python main.py train --preset grok-baseline

  # Train from a config file with a single seed
  python main.py train --config sample_experiment_config.toml --seed 42 --out output/baseline

  # Ablate the NCC penalty strength
  python main.py sweep --preset ncc-reg --param reg.lambda_reg --values 1e-4,1e-3,1e-2

  # Verify the collapse-implies-flatness bound on simplex ETFs
  python main.py etf-check

  # Recompute geometry from a saved checkpoint
  python main.py analyze --preset grok-baseline --seed 42 --checkpoint output/grok-baseline/checkpoint_seed42.npz
        """
    )

    parser.add_argument(
        'command',
        choices=['generate', 'train', 'sweep', 'etf-check', 'analyze'],
        help='What to run'
    )
    parser.add_argument('--config', help='Experiment config file (TOML)', default=None)
    parser.add_argument('--preset', help='Named preset (default: grok-baseline, or etf-verify for etf-check)', default=None)
    parser.add_argument('--seed', type=int, default=None, help='Run this single seed instead of the configured ones')
    parser.add_argument('--out', default=None, help='Output directory')
    parser.add_argument(
        '--deterministic',
        action=argparse.BooleanOptionalAction,
        default=None,
        help='Single-threaded BLAS for byte-identical results (default: on)'
    )
    parser.add_argument('--workers', type=int, default=1, help='Parallel processes for seeds (default: 1)')
    parser.add_argument('--param', default=None, help='Sweep parameter, dotted (e.g. reg.lambda_reg)')
    parser.add_argument('--values', default=None, help='Comma-separated sweep values')
    parser.add_argument('--checkpoint', default=None, help='Checkpoint file for analyze')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point."""
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        emit({"status": "error", "error": "ValueError", "message": "--workers must be >= 1"})
        return 1

    try:
        emit(GeometryLab(args).run())
        return 0
    except KeyboardInterrupt:
        log.warning("Interrupted by user")
        emit({"status": "error", "error": "KeyboardInterrupt", "message": "interrupted"})
        return 130
    except Exception as e:
        log.error(f"Fatal error: {e}")
        emit({"status": "error", "error": type(e).__name__, "message": str(e)})
        return 1


if __name__ == "__main__":
    sys.exit(main())
