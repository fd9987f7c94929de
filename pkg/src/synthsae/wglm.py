"""Survey-weighted logistic regression (quasi-binomial, logit link).

Units sharing a (area, cell) pair share a design row, so the fit runs on
per-pattern sums of weights and weighted outcomes.  The score equations
are identical to the unit-level ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
from scipy.special import expit

from .data_model import (
    CELLS,
    N_CELLS,
    AreaAux,
    DataError,
    DomainCell,
    ModelSpec,
    SurveyDataset,
    design_lookup,
    design_vector,
)

ETA_CLAMP = 30.0
WORKING_WEIGHT_FLOOR = 1e-10
RIDGE_PENALTY = 1e-6
MAX_ITER = 50
MAX_HALVINGS = 10
SCORE_TOL = 1e-8
STEP_TOL = 1e-10
RANK_TOL = 1e-10
# |eta| beyond this on a supported row means fitted probabilities hit 0/1
SEPARATION_ETA = 15.0


class RankDeficiencyError(DataError):
    """Design matrix is not of full column rank on the weighted support."""

    def __init__(self, columns: Sequence[str]) -> None:
        self.columns = tuple(columns)
        super().__init__(f"rank-deficient design; collinear columns: {', '.join(columns)}")


class FitError(DataError):
    """A fit that could not produce usable coefficients."""


@dataclass(frozen=True)
class IRLSSolution:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    score_norm: float
    loglik: float
    diagnostic: str | None


@dataclass(frozen=True)
class FitResult:
    spec: ModelSpec
    coefficients: np.ndarray
    converged: bool
    iterations: int
    final_score_norm: float
    deviance: float
    ridge: bool = False
    diagnostic: str | None = None
    n_obs: int = 0
    sum_weights: float = 0.0

    def __post_init__(self) -> None:
        coef = np.array(self.coefficients, dtype=np.float64)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        if coef.shape != (self.spec.size,):
            raise ValueError("coefficient vector does not match model spec")

    @property
    def usable(self) -> bool:
        """Converged, or penalized (ridge) fit that produced finite output."""
        return self.converged or (self.ridge and bool(np.all(np.isfinite(self.coefficients))))

    def to_json(self) -> str:
        coefs = ", ".join(format(float(c), ".17g") for c in self.coefficients)
        head = {
            "spec": self.spec.name,
            "columns": list(self.spec.active_columns),
        }
        tail = {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_score_norm": self.final_score_norm,
            "deviance": self.deviance,
            "ridge": self.ridge,
            "diagnostic": self.diagnostic,
            "n_obs": self.n_obs,
            "sum_weights": self.sum_weights,
        }
        return (
            json.dumps(head, indent=2)[:-2]
            + f',\n  "coefficients": [{coefs}],\n'
            + json.dumps(tail, indent=2)[2:]
            + "\n"
        )


def inv_logit(eta: np.ndarray | float) -> np.ndarray | float:
    return expit(np.clip(eta, -ETA_CLAMP, ETA_CLAMP))


def _loglik(eta: np.ndarray, sw: np.ndarray, swy: np.ndarray) -> float:
    # log(1 + e^eta) via logaddexp stays finite for large |eta|
    return float(np.sum(swy * eta - sw * np.logaddexp(0.0, eta)))


def check_rank(X: np.ndarray, sw: np.ndarray, names: Sequence[str] | None = None) -> None:
    """Raise RankDeficiencyError if X is rank deficient on rows with sw > 0."""
    support = sw > 0
    if not np.any(support):
        raise FitError("no positive weight in fit data")
    cross = X[support].T @ (X[support] * (sw[support] / sw[support].sum())[:, None])
    _, r, piv = scipy.linalg.qr(cross, pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0:
        return
    if diag[0] == 0:
        bad = list(piv)
    else:
        bad = [int(p) for p, d in zip(piv, diag) if d <= RANK_TOL * diag[0]]
    if bad:
        names = names or [f"x{j}" for j in range(X.shape[1])]
        raise RankDeficiencyError([names[j] for j in sorted(bad)])


def irls(
    X: np.ndarray,
    sw: np.ndarray,
    swy: np.ndarray,
    *,
    ridge: float = 0.0,
    start: np.ndarray | None = None,
    max_iter: int = MAX_ITER,
    tol: float = SCORE_TOL,
) -> IRLSSolution:
    """Maximize sum(swy * eta - sw * log(1 + exp(eta))) - ridge/2 * |c|^2.

    Rows of ``X`` may be single units (``swy = w * y``) or aggregated
    patterns (``sw`` = summed weights, ``swy`` = summed weighted outcomes).
    Newton steps are halved up to ten times whenever the objective drops.
    Convergence needs both the score sup-norm at most ``tol * sum(sw)`` and
    a negligible Newton step; the step condition is what keeps separated
    data from passing as converged.
    """
    X = np.asarray(X, dtype=np.float64)
    sw = np.asarray(sw, dtype=np.float64)
    swy = np.asarray(swy, dtype=np.float64)
    p = X.shape[1]
    total = float(sw.sum())
    coef = np.zeros(p) if start is None else np.array(start, dtype=np.float64)
    penalty = np.full(p, float(ridge))

    def objective(c: np.ndarray, eta: np.ndarray) -> float:
        return _loglik(eta, sw, swy) - 0.5 * float(penalty @ (c * c))

    eta = X @ coef
    obj = objective(coef, eta)
    converged = False
    it = 0
    score_norm = math.inf
    while True:
        theta = inv_logit(eta)
        score = X.T @ (swy - sw * theta) - penalty * coef
        score_norm = float(np.max(np.abs(score))) if p else 0.0
        work = sw * np.maximum(theta * (1.0 - theta), WORKING_WEIGHT_FLOOR)
        hess = X.T @ (X * work[:, None]) + np.diag(penalty)
        try:
            step = scipy.linalg.solve(hess, score, assume_a="pos")
        except (scipy.linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(hess, score, rcond=None)[0]
        if score_norm <= tol * total and np.max(np.abs(step), initial=0.0) <= STEP_TOL * (
            1.0 + np.max(np.abs(coef), initial=0.0)
        ):
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = coef + t * step
            eta_c = X @ cand
            obj_c = objective(cand, eta_c)
            if obj_c >= obj - 1e-12 * (abs(obj) + 1.0):
                break
            t *= 0.5
        coef, eta, obj = cand, eta_c, obj_c

    diagnostic = None
    if not converged:
        supported = sw > 0
        if np.any(np.abs(eta[supported]) > SEPARATION_ETA):
            diagnostic = "separation: fitted probabilities numerically 0 or 1"
        else:
            diagnostic = f"no convergence after {max_iter} iterations"
    return IRLSSolution(coef, converged, it, score_norm, _loglik(eta, sw, swy), diagnostic)


class PatternIndex:
    """Maps each unit of a dataset to its (area, cell) design pattern."""

    def __init__(self, dataset: SurveyDataset, area_ids: Sequence[str]) -> None:
        self.area_ids = tuple(area_ids)
        pos = {a: i for i, a in enumerate(self.area_ids)}
        try:
            area_pos = np.fromiter((pos[a] for a in dataset.area_id), np.int64, len(dataset))
        except KeyError as exc:
            raise DataError(f"area {exc.args[0]!r} missing from auxiliary data") from None
        self.pattern = area_pos * N_CELLS + dataset.cell
        self.n_patterns = len(self.area_ids) * N_CELLS
        self.weight = dataset.weight
        self.wy = dataset.weight * dataset.outcome

    def sums(self, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-pattern (sum of w, sum of w*y), optionally over a unit mask."""
        pat, w, wy = self.pattern, self.weight, self.wy
        if mask is not None:
            pat, w, wy = pat[mask], w[mask], wy[mask]
        sw = np.bincount(pat, weights=w, minlength=self.n_patterns)
        swy = np.bincount(pat, weights=wy, minlength=self.n_patterns)
        return sw, swy


def fit_patterns(
    X: np.ndarray,
    sw: np.ndarray,
    swy: np.ndarray,
    spec: ModelSpec,
    *,
    ridge_fallback: bool = False,
    start: np.ndarray | None = None,
    n_obs: int = 0,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Fit on pattern-level sums; see :func:`fit`."""
    names = spec.active_columns
    sol = None
    try:
        check_rank(X, sw, names)
    except RankDeficiencyError:
        if not ridge_fallback:
            raise
    else:
        sol = irls(X, sw, swy, start=start, max_iter=max_iter)
    ridge = False
    if sol is None or (not sol.converged and ridge_fallback):
        sol = irls(X, sw, swy, ridge=RIDGE_PENALTY, start=start, max_iter=max_iter)
        ridge = True
        if not sol.converged:
            raise FitError(f"ridge-penalized fit failed: {sol.diagnostic}")
    return FitResult(
        spec=spec,
        coefficients=sol.coefficients,
        converged=sol.converged,
        iterations=sol.iterations,
        final_score_norm=sol.score_norm,
        deviance=-2.0 * sol.loglik,
        ridge=ridge,
        diagnostic=sol.diagnostic if not ridge else "ridge penalty applied",
        n_obs=n_obs,
        sum_weights=float(sw.sum()),
    )


def fit(
    dataset: SurveyDataset,
    aux: Mapping[str, AreaAux],
    spec: ModelSpec,
    *,
    ridge_fallback: bool = False,
    start: np.ndarray | None = None,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Fit the weighted logistic model to one wave.

    Non-convergence (including separation) returns a result with
    ``converged=False``.  With ``ridge_fallback`` a failed or rank-deficient
    fit is retried with a small ridge penalty and flagged ``ridge=True``.

    Raises
    ------
    RankDeficiencyError
        Collinear design columns, when ridge fallback is off.
    """
    area_ids = sorted(aux)
    X = design_lookup(area_ids, aux, spec)
    index = PatternIndex(dataset, area_ids)
    sw, swy = index.sums()
    return fit_patterns(
        X, sw, swy, spec,
        ridge_fallback=ridge_fallback, start=start, n_obs=len(dataset), max_iter=max_iter,
    )


def predict_prob(fit: FitResult, cell: DomainCell, aux: AreaAux) -> float:
    eta = float(design_vector(cell, aux, fit.spec) @ fit.coefficients)
    return float(inv_logit(eta))


def _unit_design(spec: ModelSpec, units: SurveyDataset, aux: Mapping[str, AreaAux]) -> np.ndarray:
    area_ids = sorted(set(units.area_id.tolist()))
    lookup = design_lookup(area_ids, aux, spec)
    index = PatternIndex(units, area_ids)
    return lookup[index.pattern]


def weighted_loglik(
    coefficients: np.ndarray, spec: ModelSpec, units: SurveyDataset, aux: Mapping[str, AreaAux]
) -> float:
    """Sum over units of w * (y * eta - log(1 + exp(eta)))."""
    X = _unit_design(spec, units, aux)
    eta = X @ np.asarray(coefficients, dtype=np.float64)
    return _loglik(eta, units.weight, units.weight * units.outcome)


def weighted_score(
    coefficients: np.ndarray, spec: ModelSpec, units: SurveyDataset, aux: Mapping[str, AreaAux]
) -> np.ndarray:
    """Gradient of :func:`weighted_loglik` with respect to the coefficients."""
    X = _unit_design(spec, units, aux)
    eta = X @ np.asarray(coefficients, dtype=np.float64)
    return X.T @ (units.weight * (units.outcome - expit(eta)))


def cell_probabilities(fit: FitResult, area_ids: Sequence[str], aux: Mapping[str, AreaAux]) -> np.ndarray:
    """Fitted probabilities with shape (len(area_ids), 4)."""
    X = design_lookup(area_ids, aux, fit.spec)
    return inv_logit(X @ fit.coefficients).reshape(len(area_ids), len(CELLS))
