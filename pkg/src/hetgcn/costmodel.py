"""Latency estimators for the dense engine, sparse engine, PL SpMM unit and links.

Defaults are the measured figures of the target board: AIE dense throughput,
sparse effective FLOPS by density, PL SpMM run times for a 64x64 by 64x32
product, clock frequencies and link bandwidths. Everything can be
overridden from a JSON file.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

# 64x64 A tile times a 64x32 B slab
REF_TILE = 64
REF_OUT_COLS = 32


class Channel(str, Enum):
    DDR = "DDR"
    PL_AIE = "PL_AIE"
    AIE_NOC = "AIE_NOC"


def _default_sparse_eff():
    return [[0.1, 1.6e9], [0.2, 2.5e9], [0.3, 3.1e9], [0.4, 3.4e9], [0.5, 3.5e9], [0.6, 3.7e9]]


def _default_pl_points():
    return [[0.001, 0.18e-6], [0.005, 0.88e-6], [0.01, 1.75e-6], [0.05, 8.41e-6], [0.10, 16.82e-6]]


def _default_aie_points():
    return [[0.001, 1.1e-6], [0.005, 2.07e-6], [0.01, 3.84e-6], [0.05, 7.97e-6], [0.10, 10.44e-6]]


@dataclass
class CostModel:
    aie_freq: float = 1.0e9
    pl_freq: float = 273e6
    noc_freq: float = 800e6
    dense_flops: float = 7.1e9
    # (density, effective flops counted on nonzeros), 32x32 by 32x32 product
    sparse_eff_flops: list = field(default_factory=_default_sparse_eff)
    # (density, seconds), 64x64 by 64x32 product
    pl_spmm_points: list = field(default_factory=_default_pl_points)
    aie_spmm_points: list = field(default_factory=_default_aie_points)
    # "measured": below the lowest effective-FLOPS knot, use the 64x64 AIE run
    # times; "clamp": hold the lowest knot constant
    low_density_mode: str = "measured"
    ddr_bw_per_channel: float = 25e9
    ddr_channels: int = 4
    ddr_efficiency: float = 0.75
    pl_aie_bw: float = 1.3e12
    aie_noc_bw: float = 12e9
    activation_cycles_per_element: float = 1.0
    reconfig_time: float = 0.0

    def __post_init__(self):
        self.sparse_eff_flops = sorted([float(d), float(f)] for d, f in self.sparse_eff_flops)
        self.pl_spmm_points = sorted([float(d), float(t)] for d, t in self.pl_spmm_points)
        self.aie_spmm_points = sorted([float(d), float(t)] for d, t in self.aie_spmm_points)
        if self.low_density_mode not in ("measured", "clamp"):
            raise ValueError(f"low_density_mode must be 'measured' or 'clamp', got {self.low_density_mode!r}")
        rates = [self.aie_freq, self.pl_freq, self.noc_freq, self.dense_flops, self.ddr_bw_per_channel,
                 self.ddr_efficiency, self.pl_aie_bw, self.aie_noc_bw, self.ddr_channels]
        rates += [f for _, f in self.sparse_eff_flops] + [t for _, t in self.pl_spmm_points]
        if any(not r > 0 for r in rates):
            raise ValueError("all rates, bandwidths and calibration times must be positive")
        self._pl_fit = self._fit_pl()
        self._eff_knots = self._build_eff_knots()

    # calibration ------------------------------------------------------------

    def _fit_pl(self) -> tuple[float, float]:
        """Linear time(nnz) through the PL points, least squares on relative error."""
        d = np.array([p[0] for p in self.pl_spmm_points])
        t = np.array([p[1] for p in self.pl_spmm_points])
        nnz = d * REF_TILE * REF_TILE
        if len(t) == 1:
            return float(t[0] / nnz[0]), 0.0
        design = np.stack([nnz / t, 1.0 / t], axis=1)
        (slope, intercept), *_ = np.linalg.lstsq(design, np.ones_like(t), rcond=None)
        return float(slope), float(intercept)

    def _build_eff_knots(self) -> tuple[np.ndarray, np.ndarray]:
        dens = [d for d, _ in self.sparse_eff_flops]
        eff = [f for _, f in self.sparse_eff_flops]
        if self.low_density_mode == "measured":
            ref_flops = 2.0 * REF_TILE * REF_TILE * REF_OUT_COLS
            low = [(d, d * ref_flops / t) for d, t in self.aie_spmm_points if d < dens[0]]
            dens = [d for d, _ in low] + dens
            eff = [f for _, f in low] + eff
        return np.array(dens), np.array(eff)

    @property
    def pl_fit(self) -> tuple[float, float]:
        """(seconds per nonzero, fixed seconds) for a 32-column output slab."""
        return self._pl_fit

    # estimators --------------------------------------------------------------

    def eff_flops(self, density: float) -> float:
        """Effective sparse-engine FLOPS (on nonzeros); linear between knots, clamped outside."""
        dens, eff = self._eff_knots
        return float(np.interp(density, dens, eff))

    def dense_tpe_time(self, m: int, k: int, n: int) -> float:
        return 2.0 * m * k * n / self.dense_flops

    def sparse_stpe_time(self, m: int, k: int, n: int, density: float) -> float:
        if density <= 0:
            return 0.0
        return 2.0 * density * m * k * n / self.eff_flops(density)

    def pl_spmm_time(self, nnz: int, out_cols: int) -> float:
        slope, intercept = self._pl_fit
        return (slope * nnz + intercept) * (out_cols / REF_OUT_COLS)

    def ddr_bandwidth(self) -> float:
        return self.ddr_bw_per_channel * self.ddr_channels * self.ddr_efficiency

    def transfer_time(self, nbytes: float, channel: Channel | str) -> float:
        channel = Channel(channel)
        bw = {Channel.DDR: self.ddr_bandwidth(), Channel.PL_AIE: self.pl_aie_bw,
              Channel.AIE_NOC: self.aie_noc_bw}[channel]
        return nbytes / bw

    def activation_time(self, elements: int) -> float:
        return elements * self.activation_cycles_per_element / self.aie_freq

    # (de)serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CostModel":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown cost-model keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "CostModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def ref_sparse_time(cost: CostModel, density: float) -> float:
    """Sparse-engine time of the 64x64 by 64x32 reference product."""
    return cost.sparse_stpe_time(REF_TILE, REF_TILE, REF_OUT_COLS, density)


def ref_pl_time(cost: CostModel, density: float) -> float:
    return cost.pl_spmm_time(density * REF_TILE * REF_TILE, REF_OUT_COLS)


def sparse_speedup(cost: CostModel, size: int, density: float) -> float:
    """Dense-engine time over sparse-engine time for a size^3 product."""
    return cost.dense_tpe_time(size, size, size) / cost.sparse_stpe_time(size, size, size, density)


def pl_aie_crossover(cost: CostModel, lo: float = 1e-4, hi: float = 1.0) -> float | None:
    """Density where PL and sparse-engine times for the reference product are equal.

    Returns the first sign change of (PL - AIE) scanning up from ``lo``, or
    None when one side wins everywhere.
    """
    def gap(d):
        return ref_pl_time(cost, d) - ref_sparse_time(cost, d)

    grid = np.geomspace(lo, hi, 400)
    vals = [gap(d) for d in grid]
    for a, b, ga, gb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if ga == 0:
            return float(a)
        if ga < 0 < gb or gb < 0 < ga:
            return float(brentq(gap, a, b, xtol=1e-12))
    return None


@dataclass
class CalibrationRow:
    quantity: str
    measured: float
    model: float
    tolerance: float | None  # relative; None = reported only

    @property
    def deviation(self) -> float:
        return abs(self.model - self.measured) / abs(self.measured)

    @property
    def ok(self) -> bool:
        return self.tolerance is None or self.deviation <= self.tolerance + 1e-12

    def to_dict(self) -> dict:
        return {"quantity": self.quantity, "measured": self.measured, "model": self.model,
                "deviation": self.deviation, "tolerance": self.tolerance, "ok": self.ok}


def calibration_table(cost: CostModel) -> list[CalibrationRow]:
    """Model vs. the board measurements it was calibrated on."""
    rows = []
    for d, t in cost.pl_spmm_points:
        rows.append(CalibrationRow(f"PL SpMM 64x64x32 @ {d:.1%} [us]", t * 1e6, ref_pl_time(cost, d) * 1e6, 0.05))
    for d, f in cost.sparse_eff_flops:
        rows.append(CalibrationRow(f"sparse eff GFLOPS @ {d:.0%}", f / 1e9, cost.eff_flops(d) / 1e9, 0.0))
    for d, t in cost.aie_spmm_points:
        rows.append(CalibrationRow(f"AIE SpMM 64x64x32 @ {d:.1%} [us]", t * 1e6, ref_sparse_time(cost, d) * 1e6, None))
    for size, measured in ((64, 2.9), (32, 2.1), (16, 2.5)):
        tol = 0.15 if size == 32 else None
        rows.append(CalibrationRow(f"speedup vs dense, {size}^3 @ 10%", measured, sparse_speedup(cost, size, 0.1), tol))
    rows.append(CalibrationRow("speedup vs dense, 32^3 @ 50%", 1.0, sparse_speedup(cost, 32, 0.5), 0.05))
    return rows


def crossover_ok(cost: CostModel) -> tuple[bool, float | None]:
    """PL strictly faster at 1% and the crossover density inside [1%, 5%]."""
    x = pl_aie_crossover(cost)
    ok = x is not None and 0.01 <= x <= 0.05 and ref_pl_time(cost, 0.01) < ref_sparse_time(cost, 0.01)
    return ok, x
