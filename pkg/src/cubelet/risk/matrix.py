"""Seat-by-seat infection risk matrices with one equiprobable infected seat."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dose import infection_probability


@dataclass
class RiskMatrix:
    subjects: list[str]
    P: np.ndarray  # (n, n); P[i, j] = risk for j when i is infected; NaN diag
    N: np.ndarray  # virion counts backing P

    @property
    def n(self) -> int:
        return len(self.subjects)

    def expected_new_infections(self) -> float:
        """Mean over the infected seat of the summed off-diagonal risks."""
        total = 0.0
        for i in range(self.n):
            row = np.delete(self.P[i], i)
            total += float(row.sum())
        return total / self.n

    def expected_fraction(self) -> float:
        """Expected infections normalised by the susceptible count."""
        return self.expected_new_infections() / max(self.n - 1, 1)

    def aggregate_percent(self) -> float:
        return 100.0 * self.expected_fraction()

    # ------------------------------------------------------------------- i/o
    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("infected\\susceptible," + ",".join(self.subjects) + "\n")
            for i, name in enumerate(self.subjects):
                cells = []
                for j in range(self.n):
                    cells.append("" if i == j else f"{self.P[i, j]:.8g}")
                f.write(name + "," + ",".join(cells) + "\n")

    def write_long_csv(self, path) -> None:
        """Plot-ready long format for heatmaps."""
        with open(path, "w") as f:
            f.write("infected,susceptible,virions,probability\n")
            for i in range(self.n):
                for j in range(self.n):
                    if i == j:
                        continue
                    f.write(
                        f"{self.subjects[i]},{self.subjects[j]},"
                        f"{self.N[i, j]:.8g},{self.P[i, j]:.8g}\n"
                    )

    def write_json(self, path, extra: dict | None = None) -> None:
        marginal_out = {}
        for j, name in enumerate(self.subjects):
            col = np.delete(self.P[:, j], j)
            marginal_out[name] = float(col.mean())
        payload = {
            "subjects": self.subjects,
            "expected_new_infections": self.expected_new_infections(),
            "expected_fraction_of_susceptible": self.expected_fraction(),
            "aggregate_percent": self.aggregate_percent(),
            "per_subject_marginal_risk": marginal_out,
            "matrix_probability": [
                [None if i == j else self.P[i, j] for j in range(self.n)] for i in range(self.n)
            ],
            "matrix_virions": [
                [None if i == j else self.N[i, j] for j in range(self.n)] for i in range(self.n)
            ],
        }
        payload.update(extra or {})
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)


class MissingSeatRunError(ValueError):
    pass


def build_risk_matrix(
    subjects: list[str],
    exposures_by_emitter: dict[str, dict[str, float]],
    infectious_dose: float,
    symmetry_map: dict[str, str] | None = None,
) -> RiskMatrix:
    """Assemble the matrix from per-emitter virion counts.

    exposures_by_emitter[i][j] = inhaled virions N for susceptible j when i
    emits.  A missing emitter row may be declared equivalent to another run
    via symmetry_map[emitter] = (source_emitter, subject_permutation), where
    the permutation maps each susceptible seat to its image in the source
    run; anything else missing is an error.
    """
    n = len(subjects)
    N = np.full((n, n), np.nan)
    sym = symmetry_map or {}
    for i, emitter in enumerate(subjects):
        source = emitter
        perm: dict[str, str] = {}
        if emitter not in exposures_by_emitter:
            if emitter in sym and sym[emitter][0] in exposures_by_emitter:
                source, perm = sym[emitter]
            else:
                raise MissingSeatRunError(
                    f"no simulation for infected seat {emitter!r} and no declared symmetry"
                )
        row = exposures_by_emitter[source]
        for j, subject in enumerate(subjects):
            if i == j:
                continue
            key = perm.get(subject, subject)
            if key not in row:
                raise MissingSeatRunError(
                    f"run for emitter {source!r} lacks exposure of {key!r}"
                )
            N[i, j] = row[key]
    P = np.where(np.isnan(N), np.nan, infection_probability(np.nan_to_num(N), infectious_dose))
    return RiskMatrix(subjects=list(subjects), P=P, N=N)
