"""Gaussian-kernel binary SVM with two solvers and an exponential grid search.

``train_smo`` solves the soft-margin dual with pairwise (SMO) updates and a
second-order working-set choice. It stops once the share of KKT-violating
points, counted against the support-vector total, drops to
``kkt_violation_fraction``.

``train_lssvm`` solves the least-squares SVM saddle system

    [ 0   y^T         ] [b    ]   [0]
    [ y   Omega + I/C ] [alpha] = [1],    Omega_ij = y_i y_j K_ij

Both produce ``f(x) = sum_i alpha_i y_i K(x_i, x) + b`` and predict
``sign(f)`` with ``f == 0`` mapped to -1.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import (
    DimensionMismatch,
    EmptyGrid,
    NonFiniteInput,
    SingleClassInput,
    SingularSystem,
    WrongSolver,
)

SV_THRESHOLD = 1e-8
RESIDUAL_LIMIT = 1e-8
MODEL_FORMAT = "fundsvm.model/1"


class Solver(str, enum.Enum):
    SMO = "smo"
    LEAST_SQUARES = "least_squares"


@dataclass(frozen=True)
class KernelParams:
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be finite and > 0, got {self.sigma}")


@dataclass(frozen=True)
class SvmConfig:
    box_constraint: float = 0.8
    kkt_violation_fraction: float = 0.10
    kkt_tolerance: float = 1e-3
    max_passes: int = 200_000
    solver: Solver = Solver.LEAST_SQUARES

    def __post_init__(self):
        object.__setattr__(self, "solver", Solver(self.solver))
        if not self.box_constraint > 0:
            raise ValueError("box_constraint must be > 0")
        if not 0.0 <= self.kkt_violation_fraction <= 1.0:
            raise ValueError("kkt_violation_fraction must lie in [0, 1]")
        if self.kkt_tolerance < 0 or self.max_passes < 1:
            raise ValueError("kkt_tolerance must be >= 0 and max_passes >= 1")

    def with_c(self, c: float) -> SvmConfig:
        return SvmConfig(c, self.kkt_violation_fraction, self.kkt_tolerance,
                         self.max_passes, self.solver)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    support_vectors: np.ndarray
    alpha: np.ndarray
    labels: np.ndarray
    bias: float
    kernel: KernelParams
    box_constraint: float
    solver: Solver
    sv_indices: np.ndarray
    iterations: int = 0
    converged: bool = True
    kkt_violation: float | None = None
    residual: float | None = None
    config_hash: str = ""

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def coef(self) -> np.ndarray:
        return self.alpha * self.labels

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "solver": self.solver.value,
            "kernel": {"type": "gaussian", "sigma": float(self.kernel.sigma)},
            "box_constraint": float(self.box_constraint),
            "bias": float(self.bias),
            "alpha": [float(a) for a in self.alpha],
            "labels": [int(v) for v in self.labels],
            "sv_indices": [int(i) for i in self.sv_indices],
            "support_vectors": [[float(v) for v in row] for row in self.support_vectors],
            "metadata": {
                "iterations": int(self.iterations),
                "converged": bool(self.converged),
                "kkt_violation": None if self.kkt_violation is None else float(self.kkt_violation),
                "residual": None if self.residual is None else float(self.residual),
                "config_hash": self.config_hash,
            },
        }

    def to_json(self) -> str:
        # json writes floats with repr, the shortest string that round-trips
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> TrainedModel:
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {doc.get('format')!r}")
        meta = doc.get("metadata", {})
        n_sv = len(doc["alpha"])
        sv = np.array(doc["support_vectors"], dtype=np.float64).reshape(n_sv, -1)
        return cls(
            support_vectors=sv,
            alpha=np.array(doc["alpha"], dtype=np.float64),
            labels=np.array(doc["labels"], dtype=np.int64),
            bias=float(doc["bias"]),
            kernel=KernelParams(float(doc["kernel"]["sigma"])),
            box_constraint=float(doc["box_constraint"]),
            solver=Solver(doc["solver"]),
            sv_indices=np.array(doc["sv_indices"], dtype=np.int64),
            iterations=int(meta.get("iterations", 0)),
            converged=bool(meta.get("converged", True)),
            kkt_violation=meta.get("kkt_violation"),
            residual=meta.get("residual"),
            config_hash=meta.get("config_hash", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> TrainedModel:
        return cls.from_dict(json.loads(text))


def config_hash(cfg: SvmConfig, kernel: KernelParams) -> str:
    doc = {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in asdict(cfg).items()}
    doc["sigma"] = kernel.sigma
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


# kernel

def kernel_eval(x, z, params: KernelParams) -> float:
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise DimensionMismatch(f"dimension mismatch: {x.shape} vs {z.shape}")
    d = x - z
    return math.exp(-float(d @ d) / (2.0 * params.sigma ** 2))


def squared_distances(X, Z=None) -> np.ndarray:
    """Pairwise squared Euclidean distances; exactly symmetric with zero diagonal when ``Z`` is None."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if Z is None:
        if X.shape[0] == 1:
            return np.zeros((1, 1))
        return squareform(pdist(X, "sqeuclidean"))
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if X.shape[1] != Z.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    return cdist(X, Z, "sqeuclidean")


def gaussian(sq_dist: np.ndarray, params: KernelParams) -> np.ndarray:
    return np.exp(-sq_dist / (2.0 * params.sigma ** 2))


def kernel_matrix(X, params: KernelParams, Z=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        raise NonFiniteInput("kernel input contains NaN or inf")
    return gaussian(squared_distances(X, Z), params)


def median_distance(X) -> float:
    """Median pairwise Euclidean distance, the default bandwidth anchor."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(np.sqrt(pdist(X, "sqeuclidean"))))
    return med if med > 0 else 1.0


# solvers

def _check_labels(y):
    y = np.asarray(y)
    if y.ndim != 1 or not np.isin(y, (-1, 1)).all():
        raise ValueError("labels must be a 1-D array of -1/+1")
    if len(y) < 2 or (y == 1).all() or (y == -1).all():
        raise SingleClassInput("training data needs both labels and at least 2 rows")
    return y.astype(np.float64)


def _kkt_violations(margin, alpha, C, tol):
    """Boolean mask of KKT violations given ``y_i f(x_i)``."""
    at_zero = alpha <= SV_THRESHOLD
    at_c = alpha >= C - SV_THRESHOLD * max(1.0, C)
    free = ~at_zero & ~at_c
    return ((at_zero & (margin < 1 - tol))
            | (at_c & (margin > 1 + tol))
            | (free & (np.abs(margin - 1) > tol)))


def _smo_bias(G, alpha, y, C):
    """Bias from the current gradient (negated libsvm rho)."""
    yG = y * G
    at_c = alpha >= C
    at_zero = alpha <= 0
    free = ~at_c & ~at_zero
    if free.any():
        return -float(yG[free].mean())
    # bound-only case: midpoint of the feasible range
    upper_set = (at_c & (y == -1)) | (at_zero & (y == 1))
    lower_set = (at_c & (y == 1)) | (at_zero & (y == -1))
    ub = yG[upper_set].min() if upper_set.any() else np.inf
    lb = yG[lower_set].max() if lower_set.any() else -np.inf
    if not np.isfinite(ub):
        return -float(lb)
    if not np.isfinite(lb):
        return -float(ub)
    return -float((ub + lb) / 2)


def _fit_smo(K, y, cfg: SvmConfig):
    n = len(y)
    C = float(cfg.box_constraint)
    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    tau = 1e-12
    it = 0
    converged = False

    def rule_met(G):
        b = _smo_bias(G, alpha, y, C)
        margin = G + 1.0 + y * b
        n_sv = int((alpha > SV_THRESHOLD).sum())
        n_viol = int(_kkt_violations(margin, alpha, C, cfg.kkt_tolerance).sum())
        return n_sv > 0 and n_viol <= cfg.kkt_violation_fraction * n_sv, b

    while it < cfg.max_passes:
        ok, _ = rule_met(G)
        if ok:
            G_fresh = Q @ alpha - 1.0
            ok, _ = rule_met(G_fresh)
            G = G_fresh
            if ok:
                converged = True
                break

        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(yG[up])])
        m_up = yG[i]
        cand = low & (yG < m_up)
        if not cand.any() or m_up - yG[low].min() < 1e-13:
            # optimum reached to machine precision
            converged = True
            break
        b_it = m_up - yG[cand]
        a_it = diag[i] + diag[cand] - 2.0 * y[i] * y[cand] * Q[i, cand]
        a_it = np.where(a_it > 0, a_it, tau)
        idx = np.flatnonzero(cand)
        j = int(idx[np.argmin(-(b_it ** 2) / a_it)])

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * Q[i, j]
            quad = quad if quad > 0 else tau
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Q[i, j]
            quad = quad if quad > 0 else tau
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)
        it += 1

    G = Q @ alpha - 1.0
    b = _smo_bias(G, alpha, y, C)
    return alpha, b, it, converged


def _lssvm_system(K, y, C):
    n = len(y)
    A = np.zeros((n + 1, n + 1))
    A[0, 1:] = y
    A[1:, 0] = y
    A[1:, 1:] = (y[:, None] * y[None, :]) * K + np.eye(n) / C
    rhs = np.concatenate(([0.0], np.ones(n)))
    return A, rhs


def _fit_lssvm(K, y, C):
    n = len(y)
    H = (y[:, None] * y[None, :]) * K
    H[np.diag_indices(n)] += 1.0 / C
    try:
        factor = linalg.cho_factor(H, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystem(f"least-squares system is not positive definite: {exc}") from None
    eta = linalg.cho_solve(factor, y, check_finite=False)
    nu = linalg.cho_solve(factor, np.ones(n), check_finite=False)
    s = float(y @ eta)
    if s == 0 or not math.isfinite(s):
        raise SingularSystem("degenerate bias equation")
    b = float(y @ nu) / s
    alpha = nu - eta * b

    A, rhs = _lssvm_system(K, y, C)
    sol = np.concatenate(([b], alpha))
    res = A @ sol - rhs
    residual = float(np.max(np.abs(res)))
    if residual >= RESIDUAL_LIMIT:
        # one round of iterative refinement on the full system
        sol = sol - np.linalg.solve(A, res)
        b, alpha = float(sol[0]), sol[1:]
        residual = float(np.max(np.abs(A @ sol - rhs)))
        if residual >= RESIDUAL_LIMIT:
            raise SingularSystem(f"least-squares residual {residual:.3e} exceeds {RESIDUAL_LIMIT}")
    return alpha, b, residual


def _build_model(X, y, alpha, b, kernel, cfg, solver, *, iterations=0, converged=True,
                 residual=None, all_support=False):
    if all_support:
        idx = np.arange(len(y))
    else:
        idx = np.flatnonzero(alpha > SV_THRESHOLD)
    return TrainedModel(
        support_vectors=np.array(X[idx], dtype=np.float64),
        alpha=alpha[idx].copy(),
        labels=y[idx].astype(np.int64),
        bias=float(b),
        kernel=kernel,
        box_constraint=float(cfg.box_constraint),
        solver=solver,
        sv_indices=idx,
        iterations=iterations,
        converged=converged,
        residual=residual,
        config_hash=config_hash(cfg, kernel),
    )


def _fit(X, y, K, kernel, cfg):
    if cfg.solver is Solver.SMO:
        alpha, b, it, conv = _fit_smo(K, y, cfg)
        model = _build_model(X, y, alpha, b, kernel, cfg, Solver.SMO,
                             iterations=it, converged=conv)
        frac = _violation_fraction(model, K[np.ix_(model.sv_indices, model.sv_indices)], cfg)
        return _replace(model, kkt_violation=frac)
    alpha, b, residual = _fit_lssvm(K, y, cfg.box_constraint)
    return _build_model(X, y, alpha, b, kernel, cfg, Solver.LEAST_SQUARES,
                        residual=residual, all_support=True)


def _replace(model, **changes):
    doc = {f: getattr(model, f) for f in model.__dataclass_fields__}
    doc.update(changes)
    return TrainedModel(**doc)


def _prepare(X, y):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DimensionMismatch(f"X shape {X.shape} does not match {len(y)} labels")
    if not np.isfinite(X).all():
        raise NonFiniteInput("training data contains NaN or inf")
    return X, _check_labels(y)


def train_smo(X, y, kernel: KernelParams, cfg: SvmConfig = SvmConfig(solver=Solver.SMO)) -> TrainedModel:
    """Soft-margin dual via SMO. A model that hits ``max_passes`` has ``converged=False``."""
    X, yf = _prepare(X, y)
    cfg = SvmConfig(cfg.box_constraint, cfg.kkt_violation_fraction, cfg.kkt_tolerance,
                    cfg.max_passes, Solver.SMO)
    return _fit(X, yf, kernel_matrix(X, kernel), kernel, cfg)


def train_lssvm(X, y, kernel: KernelParams, cfg: SvmConfig = SvmConfig()) -> TrainedModel:
    """Least-squares SVM with regularizer gamma = C; every training row is a support vector."""
    X, yf = _prepare(X, y)
    cfg = SvmConfig(cfg.box_constraint, cfg.kkt_violation_fraction, cfg.kkt_tolerance,
                    cfg.max_passes, Solver.LEAST_SQUARES)
    return _fit(X, yf, kernel_matrix(X, kernel), kernel, cfg)


def train(X, y, kernel: KernelParams, cfg: SvmConfig = SvmConfig()) -> TrainedModel:
    if cfg.solver is Solver.SMO:
        return train_smo(X, y, kernel, cfg)
    return train_lssvm(X, y, kernel, cfg)


def dual_objective(alpha, y, K) -> float:
    """Dual objective ``sum(alpha) - 0.5 alpha^T Q alpha`` (to be maximized)."""
    ay = np.asarray(alpha) * np.asarray(y, dtype=np.float64)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


# prediction

def decision_value(model: TrainedModel, x):
    """Decision function for one row (returns float) or many rows (returns array)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"expected {model.n_features} features, got {X.shape[1]}")
    K = kernel_matrix(X, model.kernel, model.support_vectors)
    f = K @ model.coef + model.bias
    return float(f[0]) if single else f


def predict_label(model: TrainedModel, x):
    f = decision_value(model, x)
    if np.ndim(f) == 0:
        return 1 if f > 0 else -1
    return np.where(f > 0, 1, -1)


def _violation_fraction(model, K_sv, cfg):
    if len(model.alpha) == 0:
        return 0.0
    margin = model.labels * (K_sv @ model.coef + model.bias)
    viol = _kkt_violations(margin, model.alpha, model.box_constraint, cfg.kkt_tolerance)
    return float(viol.mean())


def kkt_violation_fraction(model: TrainedModel, X, y, cfg: SvmConfig = SvmConfig()) -> float:
    """Share of support vectors breaking the C-SVM KKT conditions by more than ``kkt_tolerance``.

    ``X``/``y`` are the training rows the model was fitted on.
    """
    if model.solver is not Solver.SMO:
        raise WrongSolver("least-squares models have no box KKT conditions")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    sv = X[model.sv_indices]
    if not np.array_equal(y[model.sv_indices], model.labels):
        raise DimensionMismatch("labels do not match the model's support vectors")
    K_sv = kernel_matrix(sv, model.kernel, model.support_vectors)
    return _violation_fraction(model, K_sv, cfg)


# grid search

def default_sigma_grid(X, exponents=range(-4, 5)) -> list[float]:
    base = median_distance(X)
    return [base * 2.0 ** e for e in exponents]


def default_c_grid(cfg: SvmConfig = SvmConfig(), exponents=range(-4, 5)) -> list[float]:
    return [cfg.box_constraint * 2.0 ** e for e in exponents]


@dataclass
class GridResult:
    kernel: KernelParams
    box_constraint: float
    model: TrainedModel
    scores: list[tuple[float, float, float]] = field(default_factory=list)
    """(sigma, C, holdout accuracy) for every grid point in evaluation order."""

    @property
    def accuracy(self) -> float:
        return max(s[2] for s in self.scores)


def grid_search(X, y, partition, sigma_grid=None, c_grid=None,
                cfg: SvmConfig = SvmConfig()) -> GridResult:
    """Train on ``partition.train_rows`` at every (sigma, C) and keep the best holdout accuracy.

    Ties go to the smaller C, then the smaller sigma.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    tr, ho = np.asarray(partition.train_rows), np.asarray(partition.holdout_rows)
    if sigma_grid is None:
        sigma_grid = default_sigma_grid(X[tr])
    if c_grid is None:
        c_grid = default_c_grid(cfg)
    sigma_grid, c_grid = list(sigma_grid), list(c_grid)
    if not sigma_grid or not c_grid:
        raise EmptyGrid("sigma and C grids must be non-empty")

    X_tr, y_tr = _prepare(X[tr], y[tr])
    D_tr = squared_distances(X_tr)
    D_ho = squared_distances(X[ho], X_tr)
    y_ho = y[ho]

    best = None
    scores = []
    for sigma in sigma_grid:
        kernel = KernelParams(float(sigma))
        K_tr = gaussian(D_tr, kernel)
        K_ho = gaussian(D_ho, kernel)
        for c in c_grid:
            model = _fit(X_tr, y_tr, K_tr, kernel, cfg.with_c(float(c)))
            coef = model.coef
            f = K_ho[:, model.sv_indices] @ coef + model.bias
            acc = float(np.mean(np.where(f > 0, 1, -1) == y_ho))
            scores.append((float(sigma), float(c), acc))
            key = (-acc, float(c), float(sigma))
            if best is None or key < best[0]:
                best = (key, kernel, float(c), model)
    _, kernel, c, model = best
    return GridResult(kernel, c, model, scores)
