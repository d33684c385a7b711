"""Panel data containers, delimited text round trips, and the simulator.

The panel is balanced: D binary outcomes for P individuals over T periods,
with K covariate columns whose first column is the intercept.  Arrays are
stored outcome-major, (D, P, T) for outcomes and (K, P, T) for covariates.
Optional individual-level covariates (one value per individual, shared by
all periods) live in a separate (M, P) block so model variants can splice
them into the coefficient design without touching the panel layout.

All delimited output is written with 17 significant digits, enough to
reproduce IEEE doubles exactly on re-read.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .corr import CorrelationMatrix, CovarianceMatrix

__all__ = [
    "PanelData",
    "CodebookSpec",
    "encode_categoricals",
    "simulate_panel",
    "gaussian_covariates",
    "design_covariates",
    "write_panel_csv",
    "read_panel_csv",
    "fmt17",
    "dumps_json17",
    "write_json17",
]


def fmt17(value: float) -> str:
    """Render a float with 17 significant digits (exact double round trip)."""
    return "%.17g" % float(value)


def _render_json(obj, parts: list[str]) -> None:
    if isinstance(obj, dict):
        parts.append("{")
        for i, (key, val) in enumerate(obj.items()):
            if i:
                parts.append(", ")
            parts.append(json.dumps(str(key)))
            parts.append(": ")
            _render_json(val, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, val in enumerate(obj):
            if i:
                parts.append(", ")
            _render_json(val, parts)
        parts.append("]")
    elif isinstance(obj, np.ndarray):
        _render_json(obj.tolist(), parts)
    elif isinstance(obj, (bool, np.bool_)):
        parts.append("true" if obj else "false")
    elif obj is None:
        parts.append("null")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise ValueError("non-finite number in JSON payload")
        parts.append(fmt17(float(obj)))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json17(obj) -> str:
    """JSON text with floats at 17 significant digits."""
    parts: list[str] = []
    _render_json(obj, parts)
    return "".join(parts)


def write_json17(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json17(obj))
        fh.write("\n")


@dataclass(frozen=True)
class PanelData:
    """Balanced binary panel.

    y: (D, P, T) array with entries in {0, 1}.
    x: (K, P, T) covariate array; column 0 is identically 1.
    z: optional (M, P) individual-level covariates, constant over periods.
    """

    y: np.ndarray
    x: np.ndarray
    outcome_labels: tuple[str, ...] = ()
    covariate_labels: tuple[str, ...] = ()
    z: np.ndarray | None = None
    z_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y = np.asarray(self.y)
        x = np.asarray(self.x, dtype=float)
        if y.ndim != 3 or x.ndim != 3:
            raise ValueError("y must be (D, P, T) and x must be (K, P, T)")
        if y.shape[1:] != x.shape[1:]:
            raise ValueError("y and x disagree on panel dimensions")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("outcomes must be 0 or 1")
        if not np.isfinite(x).all():
            raise ValueError("covariates must be finite")
        if x.shape[0] < 1 or not np.all(x[0] == 1.0):
            raise ValueError("covariate column 0 must be identically 1")
        object.__setattr__(self, "y", y.astype(np.int8))
        object.__setattr__(self, "x", x)
        d_out, k_cov = y.shape[0], x.shape[0]
        out_labels = tuple(self.outcome_labels) or tuple(
            f"y{d + 1}" for d in range(d_out)
        )
        cov_labels = tuple(self.covariate_labels) or (
            ("const",) + tuple(f"x{k}" for k in range(1, k_cov))
        )
        if len(out_labels) != d_out or len(set(out_labels)) != d_out:
            raise ValueError("need one distinct label per outcome")
        if len(cov_labels) != k_cov or len(set(cov_labels)) != k_cov:
            raise ValueError("need one distinct label per covariate")
        object.__setattr__(self, "outcome_labels", out_labels)
        object.__setattr__(self, "covariate_labels", cov_labels)
        if self.z is not None:
            z = np.asarray(self.z, dtype=float)
            if z.ndim != 2 or z.shape[1] != y.shape[1]:
                raise ValueError("z must be (M, P)")
            if not np.isfinite(z).all():
                raise ValueError("individual covariates must be finite")
            z_labels = tuple(self.z_labels) or tuple(
                f"z{m + 1}" for m in range(z.shape[0])
            )
            if len(z_labels) != z.shape[0] or len(set(z_labels)) != z.shape[0]:
                raise ValueError("need one distinct label per z column")
            object.__setattr__(self, "z", z)
            object.__setattr__(self, "z_labels", z_labels)
        elif self.z_labels:
            raise ValueError("z_labels given without z")

    @property
    def n_outcomes(self) -> int:
        return self.y.shape[0]

    @property
    def n_ind(self) -> int:
        return self.y.shape[1]

    @property
    def n_per(self) -> int:
        return self.y.shape[2]

    @property
    def n_cov(self) -> int:
        return self.x.shape[0]


def write_panel_csv(data: PanelData, path) -> None:
    """Long-format CSV: one row per (individual, period), 1-based indices."""
    header = ["individual", "period"]
    header += [f"y:{lab}" for lab in data.outcome_labels]
    header += [f"x:{lab}" for lab in data.covariate_labels]
    header += [f"z:{lab}" for lab in data.z_labels]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n_ind):
            for t in range(data.n_per):
                row = [str(i + 1), str(t + 1)]
                row += [str(int(v)) for v in data.y[:, i, t]]
                row += [fmt17(v) for v in data.x[:, i, t]]
                if data.z is not None:
                    row += [fmt17(v) for v in data.z[:, i]]
                writer.writerow(row)


def read_panel_csv(path) -> PanelData:
    """Inverse of :func:`write_panel_csv`; reproduces the arrays exactly."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["individual", "period"]:
            raise ValueError("panel CSV must start with individual,period columns")
        out_labels = [c[2:] for c in header if c.startswith("y:")]
        cov_labels = [c[2:] for c in header if c.startswith("x:")]
        z_labels = [c[2:] for c in header if c.startswith("z:")]
        if len(out_labels) + len(cov_labels) + len(z_labels) != len(header) - 2:
            raise ValueError("unrecognised columns in panel CSV header")
        rows = list(reader)
    if not rows:
        raise ValueError("panel CSV has no data rows")
    d_out, k_cov, m_ind = len(out_labels), len(cov_labels), len(z_labels)
    idx = np.array([(int(r[0]), int(r[1])) for r in rows], dtype=int)
    n_ind, n_per = idx[:, 0].max(), idx[:, 1].max()
    if idx.min() < 1 or len(rows) != n_ind * n_per:
        raise ValueError("panel is not balanced")
    seen = np.zeros((n_ind, n_per), dtype=bool)
    y = np.zeros((d_out, n_ind, n_per), dtype=np.int8)
    x = np.zeros((k_cov, n_ind, n_per))
    z = np.zeros((m_ind, n_ind)) if m_ind else None
    for row in rows:
        i, t = int(row[0]) - 1, int(row[1]) - 1
        if seen[i, t]:
            raise ValueError(f"duplicate cell for individual {i + 1}, period {t + 1}")
        seen[i, t] = True
        vals = row[2:]
        y[:, i, t] = [int(v) for v in vals[:d_out]]
        x[:, i, t] = [float(v) for v in vals[d_out : d_out + k_cov]]
        if m_ind:
            zvals = np.array([float(v) for v in vals[d_out + k_cov :]])
            if t == 0:
                z[:, i] = zvals
            elif not np.array_equal(z[:, i], zvals):
                raise ValueError(
                    f"individual-level covariates vary over periods for "
                    f"individual {i + 1}"
                )
    if not seen.all():
        raise ValueError("panel is not balanced")
    return PanelData(
        y=y, x=x, outcome_labels=tuple(out_labels),
        covariate_labels=tuple(cov_labels),
        z=z, z_labels=tuple(z_labels),
    )


@dataclass(frozen=True)
class CodebookSpec:
    """Categorical attributes with base levels, plus numeric passthroughs.

    Each categorical attribute expands to one dummy column per non-base
    level, named by the level itself; the base level maps to all zeros.
    """

    attributes: tuple[tuple[str, tuple[str, ...], str], ...]
    numeric: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        attrs = tuple(
            (str(name), tuple(str(v) for v in levels), str(base))
            for name, levels, base in self.attributes
        )
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "numeric", tuple(str(n) for n in self.numeric))
        names = [name for name, _, _ in attrs] + list(self.numeric)
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        for name, levels, base in attrs:
            if len(set(levels)) != len(levels) or len(levels) < 2:
                raise ValueError(f"attribute {name!r} needs >= 2 distinct levels")
            if base not in levels:
                raise ValueError(f"base level {base!r} not a level of {name!r}")
        dummies = self.dummy_labels
        if len(set(dummies)) != len(dummies):
            raise ValueError("dummy column names collide across attributes")

    @property
    def dummy_labels(self) -> tuple[str, ...]:
        out: list[str] = []
        for _, levels, base in self.attributes:
            out += [lv for lv in levels if lv != base]
        return tuple(out)

    @property
    def covariate_labels(self) -> tuple[str, ...]:
        return ("const",) + self.dummy_labels + self.numeric

    def to_json(self) -> dict:
        return {
            "attributes": [
                {"name": n, "levels": list(lv), "base": b}
                for n, lv, b in self.attributes
            ],
            "numeric": list(self.numeric),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CodebookSpec":
        attrs = tuple(
            (a["name"], tuple(a["levels"]), a["base"])
            for a in obj.get("attributes", ())
        )
        return cls(attributes=attrs, numeric=tuple(obj.get("numeric", ())))


def encode_categoricals(
    table: Mapping[str, Sequence], codebook: CodebookSpec
) -> tuple[tuple[str, ...], np.ndarray]:
    """Dummy-encode a raw attribute table.

    Returns (labels, matrix) where matrix is (n_rows, K) with an intercept
    column prepended, one dummy column per non-base level, and numeric
    columns passed through.  Unknown levels are rejected by row and
    attribute name.
    """
    lengths = set()
    for name, _, _ in codebook.attributes:
        if name not in table:
            raise ValueError(f"attribute {name!r} missing from table")
        lengths.add(len(table[name]))
    for name in codebook.numeric:
        if name not in table:
            raise ValueError(f"numeric column {name!r} missing from table")
        lengths.add(len(table[name]))
    if len(lengths) > 1:
        raise ValueError("table columns have unequal lengths")
    n_rows = lengths.pop() if lengths else 0

    labels = codebook.covariate_labels
    mat = np.zeros((n_rows, len(labels)))
    mat[:, 0] = 1.0
    col = 1
    for name, levels, base in codebook.attributes:
        values = table[name]
        level_pos = {lv: j for j, lv in enumerate(lv for lv in levels if lv != base)}
        for i, val in enumerate(values):
            val = str(val)
            if val == base:
                continue
            if val not in level_pos:
                raise ValueError(
                    f"row {i}: unknown level {val!r} for attribute {name!r}"
                )
            mat[i, col + level_pos[val]] = 1.0
        col += len(levels) - 1
    for name in codebook.numeric:
        mat[:, col] = np.asarray(table[name], dtype=float)
        col += 1
    return labels, mat


def gaussian_covariates(n_extra: int, scale: float = 1.0) -> Callable:
    """Covariate generator: intercept plus n_extra iid N(0, scale^2) columns."""

    def gen(rng: np.random.Generator, n_ind: int, n_per: int):
        x = np.ones((1 + n_extra, n_ind, n_per))
        if n_extra:
            x[1:] = scale * rng.standard_normal((n_extra, n_ind, n_per))
        labels = ("const",) + tuple(f"x{k + 1}" for k in range(n_extra))
        return labels, x

    return gen


def design_covariates(codebook: CodebookSpec) -> Callable:
    """Covariate generator resampling the categorical design.

    Every (individual, period) cell draws each attribute's level uniformly
    and encodes it against the codebook; numeric passthrough columns are
    filled with standard normals.
    """

    def gen(rng: np.random.Generator, n_ind: int, n_per: int):
        n_cells = n_ind * n_per
        labels = codebook.covariate_labels
        mat = np.zeros((n_cells, len(labels)))
        mat[:, 0] = 1.0
        col = 1
        for _, levels, base in codebook.attributes:
            others = [lv for lv in levels if lv != base]
            # Level index len(others) encodes the base level (all zeros).
            pick = rng.integers(0, len(levels), size=n_cells)
            hit = pick < len(others)
            mat[np.nonzero(hit)[0], col + pick[hit]] = 1.0
            col += len(others)
        for _ in codebook.numeric:
            mat[:, col] = rng.standard_normal(n_cells)
            col += 1
        x = mat.T.reshape(len(labels), n_ind, n_per)
        return labels, x

    return gen


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def simulate_panel(
    beta: np.ndarray,
    r_eps,
    sigma_alpha,
    n_ind: int,
    n_per: int,
    rng,
    covariates: Callable | tuple | None = None,
    z_covariates: Callable | tuple | None = None,
) -> tuple[PanelData, dict]:
    """Draw a balanced panel from the generative model.

    Latent y*_dit = (B x_it)_d + alpha_di + eps_dit with alpha_i ~
    N(0, sigma_alpha), eps_it ~ N(0, r_eps); y = 1 on positive latents.
    ``covariates`` may be a generator callable(rng, P, T) -> (labels, x),
    a fixed (labels, x) pair, or None for intercept only.  ``z_covariates``
    optionally adds individual-level columns whose coefficients occupy the
    trailing columns of ``beta``.  Returns the panel and the ground truth
    (coefficients, covariance structure, random effects, latents).
    """
    rng = _as_rng(rng)
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 2 or not np.isfinite(beta).all():
        raise ValueError("beta must be a finite (D, K) matrix")
    corr = r_eps.values if isinstance(r_eps, CorrelationMatrix) else (
        CorrelationMatrix(np.asarray(r_eps, dtype=float)).values
    )
    cov_a = sigma_alpha.values if isinstance(sigma_alpha, CovarianceMatrix) else (
        CovarianceMatrix(np.asarray(sigma_alpha, dtype=float)).values
    )
    d_out = beta.shape[0]
    if corr.shape[0] != d_out or cov_a.shape[0] != d_out:
        raise ValueError("beta, r_eps, sigma_alpha disagree on outcome count")
    if n_ind < 1 or n_per < 1:
        raise ValueError("need at least one individual and one period")

    if covariates is None:
        covariates = gaussian_covariates(0)
    if callable(covariates):
        cov_labels, x = covariates(rng, n_ind, n_per)
    else:
        cov_labels, x = covariates
    x = np.asarray(x, dtype=float)
    if x.shape != (len(cov_labels), n_ind, n_per):
        raise ValueError("covariate block must be (K, P, T)")

    z = None
    z_labels: tuple[str, ...] = ()
    if z_covariates is not None:
        if callable(z_covariates):
            z_labels, z = z_covariates(rng, n_ind)
        else:
            z_labels, z = z_covariates
        z = np.asarray(z, dtype=float)
        if z.shape != (len(z_labels), n_ind):
            raise ValueError("individual covariate block must be (M, P)")

    k_total = x.shape[0] + (0 if z is None else z.shape[0])
    if beta.shape[1] != k_total:
        raise ValueError(
            f"beta has {beta.shape[1]} columns but the design provides {k_total}"
        )

    x_full = x
    if z is not None:
        x_full = np.concatenate(
            [x, np.repeat(z[:, :, None], n_per, axis=2)], axis=0
        )
    alpha = (rng.standard_normal((n_ind, d_out)) @ np.linalg.cholesky(cov_a).T).T
    eps = rng.standard_normal((n_ind, n_per, d_out)) @ np.linalg.cholesky(corr).T
    ystar = (
        np.einsum("dk,kpt->dpt", beta, x_full)
        + alpha[:, :, None]
        + np.moveaxis(eps, 2, 0)
    )
    y = (ystar > 0).astype(np.int8)

    data = PanelData(
        y=y, x=x, covariate_labels=tuple(cov_labels),
        z=z, z_labels=tuple(z_labels),
    )
    truth = {
        "beta": beta,
        "r_eps": corr,
        "sigma_alpha": cov_a,
        "alpha": alpha,
        "ystar": ystar,
    }
    return data, truth
