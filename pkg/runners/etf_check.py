"""
Grid check of the collapse-implies-flatness bound on synthetic simplex ETFs.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from analysis.collapse import build_etf, check_etf, decay_slope, etf_flatness, bias_residual, margin, prop1_bound
from config.settings import CSV_FLOAT_FORMAT, OUTPUT_DIR
from models.configs import EtfConfig, EtfGridConfig
from utils.errors import OutputError
from utils.logger import log

BIAS_TOL = 1e-10


@dataclass
class EtfCheckResult:
    cells: pd.DataFrame   # one row per (k, M, lambda)
    decay: pd.DataFrame   # one row per (k, M)

    @property
    def passed(self) -> bool:
        cell_cols = ["within_bound", "bias_ok", "nc1", "nc2", "nc3", "nc4"]
        return bool(self.cells[cell_cols].all(axis=None) and self.decay[["decreasing", "slope_ok"]].all(axis=None))

    def failures(self) -> List[str]:
        out = []
        for row in self.cells.itertuples(index=False):
            bad = [c for c in ("within_bound", "bias_ok", "nc1", "nc2", "nc3", "nc4") if not getattr(row, c)]
            if bad:
                out.append(f"k={row.k} M={row.M} lambda={row.lambda_nc}: {', '.join(bad)}")
        for row in self.decay.itertuples(index=False):
            if not (row.decreasing and row.slope_ok):
                out.append(f"k={row.k} M={row.M}: decay slope {row.slope:.4g} vs {row.expected_slope:.4g}")
        return out


def check_cell(grid: EtfGridConfig, k: int, M: float, lambda_nc: float) -> dict:
    cfg = EtfConfig(
        k=k, d=k + grid.extra_dims, M=M, lambda_nc=lambda_nc,
        bias_base=grid.bias_base, global_mean_scale=grid.global_mean_scale, seed=grid.seed,
    )
    etf = build_etf(cfg)
    kappa = etf_flatness(etf)
    bound = prop1_bound(lambda_nc, k, M)
    residual = bias_residual(etf)
    nc = check_etf(etf, grid.tol)
    return {
        "k": k,
        "M": M,
        "lambda_nc": lambda_nc,
        "d": cfg.d,
        "kappa": kappa,
        "bound": bound,
        "within_bound": bool(kappa <= bound),
        "bias_residual": residual,
        "bias_ok": bool(residual <= BIAS_TOL),
        "nc1": nc.nc1,
        "nc2": nc.nc2,
        "nc3": nc.nc3,
        "nc4": nc.nc4,
    }


def check_decay(grid: EtfGridConfig, k: int, M: float) -> dict:
    """log kappa along lambda * delta in decay_margins: strictly decreasing, slope close to -delta."""
    delta = margin(k, M)
    lambdas = [m / delta for m in grid.decay_margins]
    log_kappa, slope = decay_slope(
        k, M, lambdas,
        d=k + grid.extra_dims, bias_base=grid.bias_base,
        global_mean_scale=grid.global_mean_scale, seed=grid.seed,
    )
    return {
        "k": k,
        "M": M,
        "delta": delta,
        "slope": slope,
        "expected_slope": -delta,
        "decreasing": bool(np.all(np.diff(log_kappa) < 0)),
        "slope_ok": bool(abs(slope + delta) <= grid.decay_slope_rtol * delta),
    }


def run_etf_check(grid: EtfGridConfig) -> EtfCheckResult:
    rows = [check_cell(grid, k, M, lam) for k, M in grid.cells() for lam in grid.lambdas]
    decay = [check_decay(grid, k, M) for k, M in grid.cells()]
    result = EtfCheckResult(pd.DataFrame(rows), pd.DataFrame(decay))
    if result.passed:
        log.info(f"ETF check passed on {len(rows)} cells and {len(decay)} decay ladders")
    else:
        for failure in result.failures():
            log.warning(f"ETF check failure: {failure}")
    return result


def write_etf_check(result: EtfCheckResult, output_dir: Optional[Path] = None) -> List[Path]:
    output_dir = Path(output_dir or OUTPUT_DIR / "etf-verify")
    paths = [output_dir / "etf_check.csv", output_dir / "etf_decay.csv"]
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        for df, path in zip((result.cells, result.decay), paths):
            df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise OutputError(output_dir, e) from e
    log.info(f"ETF check results saved to: {output_dir}")
    return paths
