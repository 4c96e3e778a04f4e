"""Empirical equidistribution of Fekete configurations against the equilibrium measure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frames import ma_ball_mass
from .geometry import Weight, fibonacci_grid, ma_total_mass, pairwise_distance


@dataclass
class EquidistributionTable:
    rows: list = field(repr=False)
    constants: dict
    r_grid: dict = field(repr=False)

    def csv(self):
        lines = ["k,x_index,r,count_ratio,measure_ratio,discrepancy"]
        for k, i, r, c, m, d in self.rows:
            lines.append(f"{k},{i},{r:.17g},{c:.17g},{m:.17g},{d:.17g}")
        return "\n".join(lines) + "\n"

    @property
    def variation(self):
        """Largest ratio between constants at successive levels."""
        ks = sorted(self.constants)
        v = [max(self.constants[a], self.constants[b]) / min(self.constants[a], self.constants[b])
             for a, b in zip(ks, ks[1:])]
        return max(v) if v else 1.0


def default_r_grid(k, size=12):
    return np.geomspace(2.0 / math.sqrt(k), math.pi / 2, size)


def equidistribution_table(w: Weight, configs: dict, x_grid=None, r_size=12):
    """Rows (k, x, r, #(F cap B)/#F, m(B)/m(X), |ratio/ratio' - 1| r sqrt k) over closed balls."""
    n = w.dimension
    if x_grid is None:
        x_grid = fibonacci_grid(128) if n == 1 else _cp2_grid(128)
    total = ma_total_mass(n)
    rows, consts, rg = [], {}, {}
    mass_cache = {}
    for k in sorted(configs):
        P = configs[k]
        radii = default_r_grid(k, r_size)
        rg[k] = radii
        D = pairwise_distance(x_grid, P)
        best = 0.0
        for i, x in enumerate(x_grid):
            for r in radii:
                key = (i, float(r))
                if key not in mass_cache:
                    mass_cache[key] = ma_ball_mass(w, x, r) / total
                m = mass_cache[key]
                c = float(np.sum(D[i] <= r + 1e-12)) / len(P)
                d = abs(c / m - 1.0) * r * math.sqrt(k)
                rows.append((k, i, float(r), c, m, d))
                best = max(best, d)
        consts[k] = best
    return EquidistributionTable(rows, consts, rg)


def _cp2_grid(size):
    from .frames import spiral_points

    return spiral_points(Weight.fubini_study(2), size)
