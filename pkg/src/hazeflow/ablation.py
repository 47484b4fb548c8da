"""Ablation suites: LUT variant, lambda weight, and ODE solver.

Each suite trains the same toy configuration from the same seed, varying
one component, and reports PSNR/SSIM per setting in a three-block table.
"""

from __future__ import annotations

import os
import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .flow import FlowConfig, integrate
from .lut import Lut3D, fixed_contrast_saturation_lut, identity_lut
from .metrics import psnr, ssim
from .tensor import Tensor, no_grad
from .training import TrainConfig, make_toy_dataset, train_loop

SUITES = ("lut", "lambda", "solver")
LUT_SETTINGS = ("removed", "fixed", "learnable")
LAMBDA_SETTINGS = (0.1, 0.5, 1.0)
SOLVER_SETTINGS = ("euler", "midpoint", "rk4")


@dataclass
class AblationConfig:
    """Toy-scale training shared by every ablation row."""
    seed: int = 7
    n_pairs: int = 8
    size: int = 16
    epochs: int = 25
    width: int = 4
    lut_size: int = 9
    steps: int = 2
    solver: str = "rk4"
    lam: float = 0.5
    lr: float = 3e-3
    batch_size: int = 4


@dataclass
class AblationRow:
    suite: str
    setting: str
    mean_psnr: float
    mean_ssim: float
    final_val_l1: float
    grid_checksum_before: Optional[int] = None
    grid_checksum_after: Optional[int] = None


def grid_checksum(lut: Lut3D) -> int:
    return zlib.crc32(np.ascontiguousarray(lut.grid.data).tobytes())


def _evaluate(net, lut, flow_cfg, hazy, clean):
    psnrs, ssims = [], []
    with no_grad():
        for i in range(hazy.shape[0]):
            out = integrate(Tensor(hazy[i:i + 1]), net, lut, flow_cfg).output.data
            psnrs.append(psnr(out, clean[i:i + 1]))
            ssims.append(ssim(out[0], clean[i]))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def _run_one(acfg: AblationConfig, suite: str, setting: str, lam: float,
             solver: str, lut: Optional[Lut3D], train_lut: bool) -> AblationRow:
    hazy, clean = make_toy_dataset(acfg.n_pairs, acfg.size, acfg.seed)
    cfg = TrainConfig(lr=acfg.lr, batch_size=acfg.batch_size,
                      epochs=acfg.epochs, seed=acfg.seed)
    flow_cfg = FlowConfig(solver=solver, steps=acfg.steps, lam=lam)
    before = None if lut is None else grid_checksum(lut)
    result = train_loop((hazy, clean), cfg, flow_cfg, lut=lut,
                        width=acfg.width, lut_size=acfg.lut_size,
                        train_lut=train_lut)
    result.restore_best()
    after = None if result.lut is None else grid_checksum(result.lut)
    mean_psnr, mean_ssim = _evaluate(result.net, result.lut, flow_cfg,
                                     hazy, clean)
    return AblationRow(suite=suite, setting=setting, mean_psnr=mean_psnr,
                       mean_ssim=mean_ssim, final_val_l1=result.best_val,
                       grid_checksum_before=before, grid_checksum_after=after)


def run_suite(suite: str, acfg: Optional[AblationConfig] = None,
              lut_settings: Sequence[str] = LUT_SETTINGS,
              lambdas: Sequence[float] = LAMBDA_SETTINGS,
              solvers: Sequence[str] = SOLVER_SETTINGS) -> list[AblationRow]:
    """Run one ablation suite; rows share data, seed, and base config."""
    if suite not in SUITES:
        raise ValueError(f"unknown ablation suite {suite!r}, expected one of {SUITES}")
    acfg = acfg or AblationConfig()
    rows = []
    if suite == "lut":
        for setting in lut_settings:
            if setting == "removed":
                rows.append(_run_one(acfg, suite, "removed", lam=0.0,
                                     solver=acfg.solver, lut=None,
                                     train_lut=False))
            elif setting == "fixed":
                lut = fixed_contrast_saturation_lut(acfg.lut_size)
                rows.append(_run_one(acfg, suite, "fixed", lam=acfg.lam,
                                     solver=acfg.solver, lut=lut,
                                     train_lut=False))
            elif setting == "learnable":
                lut = identity_lut(acfg.lut_size)
                rows.append(_run_one(acfg, suite, "learnable", lam=acfg.lam,
                                     solver=acfg.solver, lut=lut,
                                     train_lut=True))
            else:
                raise ValueError(f"unknown LUT setting {setting!r}")
    elif suite == "lambda":
        for lam in lambdas:
            lut = identity_lut(acfg.lut_size) if lam > 0 else None
            rows.append(_run_one(acfg, suite, f"{lam:g}", lam=float(lam),
                                 solver=acfg.solver, lut=lut, train_lut=True))
    else:
        for solver in solvers:
            lut = identity_lut(acfg.lut_size)
            rows.append(_run_one(acfg, suite, solver, lam=acfg.lam,
                                 solver=solver, lut=lut, train_lut=True))
    return rows


def run_all(acfg: Optional[AblationConfig] = None) -> dict[str, list[AblationRow]]:
    acfg = acfg or AblationConfig()
    return {suite: run_suite(suite, acfg) for suite in SUITES}


_BLOCK_TITLES = {"lut": "Haze-LUT", "lambda": "lambda", "solver": "ODE solver"}


def format_report(results: dict[str, list[AblationRow]]) -> str:
    """Three-block table (one per suite) with PSNR/SSIM columns."""
    lines = [f"{'ablation':<12} {'setting':<10} {'psnr_db':>9} {'ssim':>7} {'val_l1':>9}"]
    for suite, rows in results.items():
        title = _BLOCK_TITLES.get(suite, suite)
        for i, row in enumerate(rows):
            label = title if i == 0 else ""
            lines.append(f"{label:<12} {row.setting:<10} {row.mean_psnr:>9.3f} "
                         f"{row.mean_ssim:>7.4f} {row.final_val_l1:>9.5f}")
    solver_rows = {r.setting: r for r in results.get("solver", [])}
    if "rk4" in solver_rows and "euler" in solver_rows:
        better = solver_rows["rk4"].final_val_l1 <= solver_rows["euler"].final_val_l1
        lines.append(f"note: rk4 {'<=' if better else '>'} euler "
                     "on final validation L1 (reported, not asserted)")
    return "\n".join(lines)


def write_reports(results: dict[str, list[AblationRow]], out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for suite, rows in results.items():
        path = os.path.join(out_dir, f"ablation_{suite}.txt")
        with open(path, "w", encoding="ascii") as fh:
            fh.write(format_report({suite: rows}) + "\n")
        paths.append(path)
    combined = os.path.join(out_dir, "ablation_report.txt")
    with open(combined, "w", encoding="ascii") as fh:
        fh.write(format_report(results) + "\n")
    paths.append(combined)
    return paths
