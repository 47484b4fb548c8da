"""Timing, memory, and analytic MAC accounting for the dehazing pipeline."""

from __future__ import annotations

import resource
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flow import FIELD_EVALS, FlowConfig, integrate, vector_field
from .lut import identity_lut
from .purifier import N_STAGES, PurifierNet
from .tensor import Tensor, no_grad
from .tiling import TilePlan, dehaze_tiled


def conv_macs(c_in: int, c_out: int, kernel: int, h_out: int, w_out: int) -> int:
    """Multiply-accumulate count of one conv layer."""
    return c_in * c_out * kernel * kernel * h_out * w_out


def _even(n: int) -> int:
    return n + (n % 2)


def purifier_macs(width: int, height: int, w: int) -> dict[str, int]:
    """Per-layer conv MACs of one purifier forward pass at the given size."""
    macs: dict[str, int] = {}
    enc_channels = [(3, width), (width, 2 * width), (2 * width, 4 * width)]
    sizes = []
    h_cur, w_cur = height, w
    for i, (cin, cout) in enumerate(enc_channels, start=1):
        sizes.append((h_cur, w_cur))
        h_cur, w_cur = _even(h_cur) // 2, _even(w_cur) // 2
        macs[f"enc{i}"] = conv_macs(cin, cout, 3, h_cur, w_cur)
    macs["attn"] = conv_macs(4 * width, 1, 3, h_cur, w_cur)
    dec_channels = [(4 * width + 2 * width, 2 * width),
                    (2 * width + width, width), (width + 3, width)]
    for i, (cin, cout) in enumerate(dec_channels, start=1):
        sh, sw = sizes[N_STAGES - i]
        macs[f"dec{i}"] = conv_macs(cin, cout, 3, sh, sw)
    macs["head"] = conv_macs(width, 3, 3, height, w)
    return macs


def pipeline_macs(width: int, height: int, w: int, cfg: FlowConfig) -> int:
    """Total conv MACs for a full integration (all steps, all field evals)."""
    per_eval = sum(purifier_macs(width, height, w).values())
    return per_eval * FIELD_EVALS[cfg.solver] * cfg.steps


def peak_rss_bytes() -> int:
    """Peak resident set size of this process so far (Linux: ru_maxrss is KiB)."""
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


@dataclass
class BenchReport:
    height: int
    width: int
    net_width: int
    solver: str
    steps: int
    field_evals: int
    macs_per_eval: int
    total_macs: int
    eval_seconds: float
    total_seconds: float
    seconds_per_step: float
    peak_rss_mb: float
    tiled: bool

    def format(self) -> str:
        lines = [
            f"image               {self.width}x{self.height}",
            f"network width       {self.net_width}",
            f"solver              {self.solver} ({self.steps} steps, "
            f"{self.field_evals} field evaluations)",
            f"conv MACs per eval  {self.macs_per_eval:,}",
            f"conv MACs total     {self.total_macs:,}",
            f"one field eval      {self.eval_seconds:.4f} s",
            f"full integration    {self.total_seconds:.4f} s"
            f" ({'tiled' if self.tiled else 'untiled'})",
            f"per solver step     {self.seconds_per_step:.4f} s",
            f"peak RSS            {self.peak_rss_mb:.1f} MB",
        ]
        return "\n".join(lines)

    def key_value_lines(self) -> str:
        return "\n".join([
            f"total_seconds={self.total_seconds:.6f}",
            f"seconds_per_step={self.seconds_per_step:.6f}",
            f"field_evals={self.field_evals}",
            f"macs_per_eval={self.macs_per_eval}",
            f"total_macs={self.total_macs}",
            f"peak_rss_mb={self.peak_rss_mb:.1f}",
        ])


def run_bench(height: int, width: int, cfg: FlowConfig, net_width: int = 16,
              lut_size: int = 33, plan: Optional[TilePlan] = None,
              seed: int = 0) -> BenchReport:
    """Time one full dehazing pass on a synthetic image of the given size."""
    net = PurifierNet(width=net_width, seed=seed)
    lut = identity_lut(lut_size, requires_grad=False)
    rng = np.random.default_rng(seed)
    image = rng.uniform(0.2, 0.9, size=(1, 3, height, width)).astype(np.float32)

    # time a single field evaluation on one tile-sized patch
    tile = plan.tile if plan is not None else min(height, 512)
    patch = Tensor(image[:, :, :min(height, tile), :min(width, tile)])
    with no_grad():
        vector_field(patch, net, lut, cfg.lam)  # warm up
        t0 = time.perf_counter()
        vector_field(patch, net, lut, cfg.lam)
        eval_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    if plan is not None:
        dehaze_tiled(image, net, lut, cfg, plan)
        tiled = True
    else:
        with no_grad():
            integrate(Tensor(image), net, lut, cfg)
        tiled = False
    total = time.perf_counter() - t0

    per_eval = sum(purifier_macs(net_width, height, width).values())
    evals = FIELD_EVALS[cfg.solver] * cfg.steps
    return BenchReport(
        height=height, width=width, net_width=net_width, solver=cfg.solver,
        steps=cfg.steps, field_evals=evals, macs_per_eval=per_eval,
        total_macs=per_eval * evals, eval_seconds=eval_seconds,
        total_seconds=total, seconds_per_step=total / cfg.steps,
        peak_rss_mb=peak_rss_bytes() / 1e6, tiled=tiled)
