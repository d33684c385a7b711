"""Posterior draw storage: named parameter blocks plus run metadata.

A chain is a dict of 2-D blocks, one row per kept draw, with per-column
labels and a metadata dict (dimensions, sampler settings, seed, timing,
divergence count).  Persistence is a directory holding header.json and one
CSV per block; floats are written with 17 significant digits so a reload
reproduces every draw bit for bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .corr import vech_indices
from .data import dumps_json17, fmt17

__all__ = ["ChainDraws"]

_FORMAT = 1


@dataclass
class ChainDraws:
    """Kept draws of a single chain, organised as (n_draws, width) blocks."""

    blocks: dict[str, np.ndarray]
    labels: dict[str, list[str]]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ValueError("a chain needs at least one block")
        n_rows = {arr.shape[0] for arr in self.blocks.values()}
        if len(n_rows) != 1:
            raise ValueError("blocks disagree on the number of draws")
        for name, arr in self.blocks.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim != 2:
                raise ValueError(f"block {name!r} must be 2-D")
            self.blocks[name] = arr
            cols = self.labels.get(name)
            if cols is None or len(cols) != arr.shape[1]:
                raise ValueError(f"block {name!r} needs one label per column")

    @property
    def n_draws(self) -> int:
        return next(iter(self.blocks.values())).shape[0]

    def block(self, name: str) -> np.ndarray:
        if name not in self.blocks:
            raise KeyError(
                f"no block {name!r}; have {sorted(self.blocks)}"
            )
        return self.blocks[name]

    @property
    def n_outcomes(self) -> int:
        return int(self.meta["n_outcomes"])

    def corr_eps_draws(self) -> np.ndarray:
        """(n, D, D) error correlation matrices from the stored vech block."""
        return _vech_rows_to_matrices(self.block("corr_eps_vech"), self.n_outcomes)

    def corr_alpha_draws(self) -> np.ndarray:
        """(n, D, D) random-effect correlation matrices."""
        return _vech_rows_to_matrices(self.block("corr_alpha_vech"), self.n_outcomes)

    def sigma_alpha_draws(self) -> np.ndarray:
        """(n, D, D) random-effect covariances from variances + correlations."""
        corr = self.corr_alpha_draws()
        sd = np.sqrt(self.block("sigma_alpha_diag"))
        return corr * sd[:, :, None] * sd[:, None, :]

    def precision_eps_draws(self) -> np.ndarray:
        """(n, D, D) inverses of the error correlation draws."""
        return np.linalg.inv(self.corr_eps_draws())

    def partial_corr_eps_draws(self) -> np.ndarray:
        """(n, D, D) partial correlations of the error scale."""
        prec = self.precision_eps_draws()
        d = 1.0 / np.sqrt(np.einsum("nii->ni", prec))
        out = -prec * d[:, :, None] * d[:, None, :]
        idx = np.arange(prec.shape[1])
        out[:, idx, idx] = 1.0
        return out

    def save(self, path) -> None:
        os.makedirs(path, exist_ok=True)
        header = {
            "format": _FORMAT,
            "n_draws": self.n_draws,
            "blocks": [
                {"name": name, "columns": list(self.labels[name])}
                for name in sorted(self.blocks)
            ],
            "meta": self.meta,
        }
        with open(os.path.join(path, "header.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps_json17(header))
            fh.write("\n")
        for name in sorted(self.blocks):
            arr = self.blocks[name]
            with open(
                os.path.join(path, f"{name}.csv"), "w", encoding="utf-8", newline=""
            ) as fh:
                fh.write(",".join(self.labels[name]))
                fh.write("\n")
                for row in arr:
                    fh.write(",".join(fmt17(v) for v in row))
                    fh.write("\n")

    @classmethod
    def load(cls, path) -> "ChainDraws":
        header_path = os.path.join(path, "header.json")
        if not os.path.exists(header_path):
            raise FileNotFoundError(f"no chain header at {header_path}")
        with open(header_path, "r", encoding="utf-8") as fh:
            header = json.load(fh)
        if header.get("format") != _FORMAT:
            raise ValueError(f"unsupported chain format {header.get('format')!r}")
        blocks: dict[str, np.ndarray] = {}
        labels: dict[str, list[str]] = {}
        for entry in header["blocks"]:
            name = entry["name"]
            cols = list(entry["columns"])
            arr = np.loadtxt(
                os.path.join(path, f"{name}.csv"),
                delimiter=",", skiprows=1, ndmin=2, dtype=float,
            )
            if arr.size == 0:
                arr = arr.reshape(0, len(cols))
            if arr.shape[1] != len(cols):
                raise ValueError(f"block {name!r} width does not match header")
            blocks[name] = arr
            labels[name] = cols
        return cls(blocks=blocks, labels=labels, meta=header.get("meta", {}))


def _vech_rows_to_matrices(rows: np.ndarray, dim: int) -> np.ndarray:
    n = rows.shape[0]
    out = np.empty((n, dim, dim))
    ii, jj = vech_indices(dim)
    out[:] = np.eye(dim)
    out[:, ii, jj] = rows
    out[:, jj, ii] = rows
    return out
