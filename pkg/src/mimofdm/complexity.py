"""Real floating-point operation counts per subcarrier for each detector."""

from __future__ import annotations

import csv
from dataclasses import dataclass

KINDS = ("zf", "mmse", "pso", "de", "ml")


def flop_count(kind: str, nt: int, nr: int, population: int | None = None,
               iterations: int | None = None, order: int | None = None) -> float:
    """FLOPs to detect one subcarrier.

    ``population`` and ``iterations`` apply to pso/de; ``order`` (QAM size)
    applies to ml.  The LU-based inverse contributes a fractional term.
    """
    if nt < 1 or nr < 1:
        raise ValueError("antenna counts must be positive")
    if kind == "zf":
        return 16 / 3 * nt**3 + 4 * nt**2 + 32 * nt**2 * nr + 4 * nt * nr - 2 * nt
    if kind == "mmse":
        return 16 / 3 * nt**3 + 8 * nt**2 + 32 * nt**2 * nr + 4 * nt * nr
    if kind in ("pso", "de"):
        if population is None or iterations is None or population < 1 or iterations < 1:
            raise ValueError(f"{kind} needs positive population and iterations")
        if kind == "pso":
            return float(population * iterations * (8 * nt * nr + 20 * nt + 4 * nr + 7))
        return float(population * iterations * (16 * nt * nr + 12 * nt + 8 * nr + 14))
    if kind == "ml":
        if order is None or order < 2:
            raise ValueError("ml needs the constellation order")
        return float(order ** (2 * nt) * (8 * nt * nr + 4 * nr + 7))
    raise ValueError(f"unknown detector {kind!r}; choose from {KINDS}")


@dataclass
class FlopReport:
    rows: list  # (detector, nt, nr, flops, ratio_vs_ml, ratio_vs_zf)

    def ratio(self, kind: str, nt: int, against: str = "ml") -> float:
        for d, n, _, _, vs_ml, vs_zf in self.rows:
            if d == kind and n == nt:
                return vs_ml if against == "ml" else vs_zf
        raise KeyError((kind, nt))

    def flops(self, kind: str, nt: int) -> float:
        for d, n, _, f, _, _ in self.rows:
            if d == kind and n == nt:
                return f
        raise KeyError((kind, nt))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["detector", "nt", "nr", "flops", "ratio_vs_ml", "ratio_vs_zf"])
            for d, nt, nr, f, a, b in self.rows:
                out.writerow([d, nt, nr, repr(f), repr(a), repr(b)])


def relative_complexity(nt_values, population_per_dim: int = 5, iterations: int = 50, order: int = 4) -> FlopReport:
    """FLOP counts and ratios with ``Nr = Nt``, population ``population_per_dim * 2 Nt``."""
    nt_values = list(nt_values)
    if not nt_values:
        raise ValueError("need at least one antenna count")
    rows = []
    for nt in nt_values:
        pop = population_per_dim * 2 * nt
        counts = {
            "zf": flop_count("zf", nt, nt),
            "mmse": flop_count("mmse", nt, nt),
            "pso": flop_count("pso", nt, nt, pop, iterations),
            "de": flop_count("de", nt, nt, pop, iterations),
            "ml": flop_count("ml", nt, nt, order=order),
        }
        for kind in KINDS:
            rows.append((kind, nt, nt, counts[kind], counts[kind] / counts["ml"], counts[kind] / counts["zf"]))
    return FlopReport(rows)
