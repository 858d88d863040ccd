"""
Train/measure loop: one run per seed, regularizer gradients injected into
backpropagation, metrics recorded on a fixed step stride.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from threadpoolctl import threadpool_limits
from tqdm import tqdm

from analysis.geometry import class_stats, cluster_metrics, geometry_report, pairwise_sq_dists
from analysis.oracles import fd_grad_coords
from analysis.regularizers import apply_schedule, flatness_reg, ncc_fixed_distances, ncc_reg
from config.settings import (
    BLAS_THREADS_DETERMINISTIC,
    DEBUG_GRAD_CHECK_COORDS,
    DEBUG_GRAD_CHECK_EVERY,
    DEBUG_GRAD_CHECK_RTOL,
    PROGRESS_BARS,
)
from models.configs import ExperimentConfig
from models.enums import RegKind, SplitRole
from models.records import GeometryReport, MetricsLog, MetricsRecord
from network.mlp import ForwardCache, MlpParams, accuracy, backward, ce_loss, forward, init_mlp
from network.optimizer import Optimizer
from processors.output_processor import OutputProcessor
from processors.task_processor import Dataset, build_task
from utils.errors import ExperimentError, GradientCheckError
from utils.logger import log, run_logger
from utils.numkit import Matrix, RngState, softmax_rows

# RngState substreams of a run seed (0: split, 1: init are taken by tasks/mlp)
BATCH_STREAM = 4
GRAD_CHECK_STREAM = 5


def blas_limits(deterministic: bool):
    """Single-threaded BLAS in deterministic mode."""
    return threadpool_limits(limits=BLAS_THREADS_DETERMINISTIC) if deterministic else nullcontext()


def measure_geometry(
    params: MlpParams,
    train_cache: ForwardCache,
    val_cache: ForwardCache,
    train: Dataset,
    val: Dataset,
    cfg: ExperimentConfig,
    step: int,
) -> Tuple[GeometryReport, Optional[float]]:
    """Geometry snapshot on the configured split, plus validation NCC when requested."""
    if SplitRole(cfg.geometry_split) == SplitRole.VALIDATION:
        cache, data = val_cache, val
    else:
        cache, data = train_cache, train

    report = geometry_report(
        params.w, cache.phi, cache.probs, data.labels, data.p,
        train_phi=train_cache.phi,
        train_labels=train.labels,
        eval_phi=val_cache.phi,
        mode=cfg.ncc_mode,
        kde=cfg.kde,
        step=step,
    )

    val_ncc = None
    if cfg.log_val_ncc:
        val_ncc, _ = cluster_metrics(val_cache.phi, val.labels, val.p, cfg.ncc_mode)
    return report, val_ncc


def measure(
    params: MlpParams,
    train: Dataset,
    val: Dataset,
    cfg: ExperimentConfig,
    step: int,
    epoch: int,
    coeff: float,
) -> Tuple[MetricsRecord, Optional[float]]:
    train_cache = forward(params, train.encoded)
    val_cache = forward(params, val.encoded)
    report, val_ncc = measure_geometry(params, train_cache, val_cache, train, val, cfg, step)

    train_loss = ce_loss(train_cache, train.labels)
    val_loss = ce_loss(val_cache, val.labels)
    record = MetricsRecord(
        step=step,
        epoch=epoch,
        train_loss=train_loss,
        val_loss=val_loss,
        train_acc=accuracy(train_cache, train.labels),
        val_acc=accuracy(val_cache, val.labels),
        gen_gap=val_loss - train_loss,
        ncc=report.ncc,
        kappa=report.kappa,
        kappa_simplified=report.kappa_simplified,
        mean_angle_dev=report.mean_angle_dev,
        representativeness=report.representativeness,
        effective_reg_coeff=coeff,
    )
    return record, val_ncc


def regularizer_grads(
    cfg: ExperimentConfig, params: MlpParams, cache: ForwardCache, labels: ArrayLike, coeff: float
) -> Dict[str, np.ndarray]:
    """
    Keyword arguments for ``backward``. The penalty is subtracted from the loss,
    so each injected term is -coeff * d(measure).
    """
    kind = RegKind(cfg.reg.kind)
    if coeff == 0.0 or kind == RegKind.NONE:
        return {}
    if kind == RegKind.NCC:
        res = ncc_reg(
            cache.phi, labels, cfg.ncc_mode, num_classes=params.w.shape[0], stop_gradient=cfg.reg.stop_gradient,
        )
        # hinge: the penalty is flat once NCC reaches the cap
        if cfg.reg.ncc_cap is not None and res.value >= cfg.reg.ncc_cap:
            return {}
        return {"extra_feature_grad": -coeff * res.grad_phi}

    res = flatness_reg(params.w, cache.phi, cache.probs, stop_gradient=cfg.reg.stop_gradient)
    return {
        "extra_feature_grad": -coeff * res.grad_phi,
        "extra_weight_grad": -coeff * res.grad_w,
        "extra_bias_grad": -coeff * res.grad_b,
    }


def check_regularizer_grads(
    cfg: ExperimentConfig,
    params: MlpParams,
    cache: ForwardCache,
    labels: ArrayLike,
    rng: RngState,
    coords: int = DEBUG_GRAD_CHECK_COORDS,
    rtol: float = DEBUG_GRAD_CHECK_RTOL,
) -> float:
    """
    Compare the active regularizer's analytic gradients with central differences
    on a sample of coordinates. Returns the worst relative error.
    """
    kind = RegKind(cfg.reg.kind)
    phi, w, b = cache.phi, params.w, params.b
    k = w.shape[0]
    checks = []

    if kind == RegKind.NCC:
        res = ncc_reg(phi, labels, cfg.ncc_mode, k, stop_gradient=cfg.reg.stop_gradient)
        dists = pairwise_sq_dists(class_stats(phi, labels, k).means)

        # with stop_gradient the mean distances are held at their current value
        def ncc_at(flat: np.ndarray) -> float:
            if cfg.reg.stop_gradient:
                return ncc_fixed_distances(flat.reshape(phi.shape), labels, dists, cfg.ncc_mode, k)
            return ncc_reg(flat.reshape(phi.shape), labels, cfg.ncc_mode, k).value

        checks.append(("ncc_reg phi", ncc_at, phi, res.grad_phi))
    elif kind == RegKind.FLATNESS:
        frozen = cfg.reg.stop_gradient

        # with stop_gradient the probabilities are held at their current value
        def kappa_at(w_: Matrix, phi_: Matrix) -> float:
            probs = cache.probs if frozen else softmax_rows(phi_ @ w_.T + b)
            return flatness_reg(w_, phi_, probs, frozen).value

        res = flatness_reg(w, phi, cache.probs, frozen)
        checks.append(("flatness_reg phi", lambda flat: kappa_at(w, flat.reshape(phi.shape)), phi, res.grad_phi))
        checks.append(("flatness_reg w", lambda flat: kappa_at(flat.reshape(w.shape), phi), w, res.grad_w))

    worst = 0.0
    for name, fn, point, analytic in checks:
        idx = rng.generator.choice(point.size, size=min(coords, point.size), replace=False)
        numeric = fd_grad_coords(fn, point.ravel(), idx)
        exact = analytic.ravel()[idx]
        scale = max(np.max(np.abs(numeric)), np.max(np.abs(exact)), np.finfo(np.float64).tiny)
        rel = float(np.max(np.abs(exact - numeric)) / scale)
        log.debug(f"Gradient check {name}: max relative error {rel:.3e} over {len(idx)} coordinates")
        if rel > rtol:
            log.error(f"Gradient check {name} failed: {rel:.3e} > {rtol:.1e}")
            raise GradientCheckError(name, rel, rtol)
        worst = max(worst, rel)
    return worst


class BatchSchedule:
    """Full batch, or seeded per-epoch shuffles cut into fixed-size batches."""

    def __init__(self, n: int, batch_size: Optional[int], seed: int):
        self.n = n
        self.batch_size = min(batch_size or n, n)
        self.steps_per_epoch = math.ceil(n / self.batch_size)
        self._rng = RngState(seed, stream=BATCH_STREAM)
        self._order: Optional[np.ndarray] = None

    @property
    def full_batch(self) -> bool:
        return self.batch_size == self.n

    def epoch(self, step: int) -> int:
        return step // self.steps_per_epoch

    def indices(self, step: int) -> Optional[np.ndarray]:
        """Sample indices of update ``step`` (0-based); None means the whole set. Call in step order."""
        if self.full_batch:
            return None
        pos = step % self.steps_per_epoch
        if pos == 0 or self._order is None:
            self._order = self._rng.permutation(self.n)
        return self._order[pos * self.batch_size:(pos + 1) * self.batch_size]


def _train(cfg: ExperimentConfig, seed: int, progress: bool) -> Tuple[MetricsLog, MlpParams]:
    step = 0
    run_log = run_logger(cfg.name, seed)
    try:
        train, val = build_task(cfg.task_config(seed))
        params = init_mlp(cfg.mlp_config(seed))
        optimizer = Optimizer(params, cfg.optimizer)
        batches = BatchSchedule(len(train), cfg.optimizer.batch_size, seed)
        check_rng = RngState(seed, stream=GRAD_CHECK_STREAM)
        metrics = MetricsLog(seed=seed)
        run_log.info(
            f"Run start: {len(train)} train / {len(val)} val samples, "
            f"widths {params.widths}, {cfg.steps} steps, batch {batches.batch_size}"
        )

        def record_at(s: int):
            epoch = batches.epoch(s)
            record, val_ncc = measure(params, train, val, cfg, s, epoch, apply_schedule(cfg.reg, epoch))
            metrics.append(record)
            if val_ncc is not None:
                metrics.val_ncc.append(val_ncc)
            run_log.info(
                f"step={s} loss={record.train_loss:.4g}/{record.val_loss:.4g} "
                f"acc={record.train_acc:.3f}/{record.val_acc:.3f} ncc={record.ncc:.4g} "
                f"kappa={record.kappa:.4g} reg={record.effective_reg_coeff:g}"
            )
            return record

        record_at(0)
        bar = tqdm(range(1, cfg.steps + 1), desc=f"{cfg.name} seed {seed}", disable=not progress, leave=False)
        for step in bar:
            # update `step` moves the parameters from step - 1 to step
            coeff = apply_schedule(cfg.reg, batches.epoch(step - 1))
            idx = batches.indices(step - 1)
            x = train.encoded if idx is None else train.encoded[idx]
            y = train.labels if idx is None else train.labels[idx]

            cache = forward(params, x)
            extra = regularizer_grads(cfg, params, cache, y, coeff)
            if cfg.debug_grad_checks and extra and (step - 1) % DEBUG_GRAD_CHECK_EVERY == 0:
                check_regularizer_grads(cfg, params, cache, y, check_rng)
            grads = backward(params, cache, y, **extra)
            optimizer.step(params, grads)

            if step % cfg.measure_every == 0 or step == cfg.steps:
                record = record_at(step)
                bar.set_postfix(train_acc=f"{record.train_acc:.3f}", val_acc=f"{record.val_acc:.3f}")

    except ExperimentError:
        raise
    except Exception as e:
        run_log.error(f"Run aborted at step={step}: {e}")
        raise ExperimentError(seed, step, e) from e

    run_log.info(f"Run finished after {cfg.steps} steps")
    return metrics, params


def run_seed(cfg: ExperimentConfig, seed: int, progress: bool = PROGRESS_BARS) -> Tuple[MetricsLog, MlpParams]:
    """One deterministic run: metrics stream and final parameters."""
    with blas_limits(cfg.deterministic):
        return _train(cfg, seed, progress)


def _run_seed_job(job: Tuple[ExperimentConfig, int]) -> Tuple[MetricsLog, MlpParams]:
    cfg, seed = job
    return run_seed(cfg, seed, progress=False)


def run_seeds(cfg: ExperimentConfig, workers: int = 1) -> List[Tuple[MetricsLog, MlpParams]]:
    """All seeds of ``cfg``, in seed order; ``workers`` > 1 runs them in separate processes."""
    if workers > 1 and len(cfg.seeds) > 1:
        log.info(f"Running {len(cfg.seeds)} seeds on {min(workers, len(cfg.seeds))} workers")
        with ProcessPoolExecutor(max_workers=min(workers, len(cfg.seeds))) as pool:
            return list(pool.map(_run_seed_job, [(cfg, seed) for seed in cfg.seeds]))
    return [run_seed(cfg, seed) for seed in cfg.seeds]


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> List[MetricsLog]:
    """One MetricsLog per seed."""
    return [metrics for metrics, _ in run_seeds(cfg, workers)]


class ExperimentRunner:
    """Runs every seed of a config and writes the results directory."""

    def __init__(self, cfg: ExperimentConfig, output_dir: Optional[Path] = None, workers: int = 1):
        self.cfg = cfg
        self.workers = workers
        self.output_processor = OutputProcessor(cfg, output_dir)

    @property
    def output_dir(self) -> Path:
        return self.output_processor.output_dir

    def run(self) -> List[MetricsLog]:
        log.info(f"Starting experiment '{self.cfg.name}' with seeds {self.cfg.seeds}")
        self.output_processor.write_config()

        results = run_seeds(self.cfg, self.workers)
        for metrics, params in results:
            self.output_processor.write_run(metrics, params)

        logs = [metrics for metrics, _ in results]
        self.output_processor.write_aggregate(logs)
        self.output_processor.write_summary(logs)
        log.info(f"Experiment '{self.cfg.name}' complete: {len(logs)} runs in {self.output_dir}")
        return logs
