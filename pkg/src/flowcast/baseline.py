"""Single-lag vector autoregression ``qT ~ A q0 + b`` fitted by least squares."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Dataset
from .integrate import Ensemble

RIDGE = 1e-8


class FitError(np.linalg.LinAlgError):
    pass


@dataclass
class VarModel:
    A: np.ndarray
    b: np.ndarray
    ridge: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.b)


def var_fit(dataset: Dataset) -> VarModel:
    """Closed-form fit on the stored pairs.

    A rank-deficient design falls back to ridge regression with ``RIDGE``.
    """
    x = dataset.flat("q0")
    y = dataset.flat("qT")
    n, d = x.shape
    if n < d + 1:
        raise FitError(f"need at least {d + 1} pairs to fit a {d}-dim VAR, got {n}")
    design = np.hstack([x, np.ones((n, 1))])
    ridge = 0.0
    gram = design.T @ design
    if np.linalg.matrix_rank(design) < d + 1:
        ridge = RIDGE
        gram = gram + ridge * np.eye(d + 1)
    try:
        coef = np.linalg.solve(gram, design.T @ y)
    except np.linalg.LinAlgError as err:
        raise FitError(f"normal equations are singular: {err}") from err
    if not np.all(np.isfinite(coef)):
        raise FitError("non-finite VAR coefficients")
    return VarModel(coef[:d].T.copy(), coef[d].copy(), ridge)


def var_predict(model: VarModel, e0: Ensemble) -> Ensemble:
    x = e0.flat()
    if x.shape[1] != model.dim:
        raise ValueError(f"ensemble dim {x.shape[1]} does not match VAR dim {model.dim}")
    y = x @ model.A.T + model.b
    meta = dict(e0.meta)
    meta["source"] = "var"
    return Ensemble(y.reshape(e0.members.shape), meta)
