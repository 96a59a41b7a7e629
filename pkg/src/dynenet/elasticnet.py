"""Elastic net by cyclic coordinate descent.

The objective minimised is

    (1/N) sum_i w_i (y_i - b0 - x_i'b)^2 + (lam/2) [ (1 - alpha) ||b||_2^2 + 2 alpha ||b||_1 ]

with an unpenalised intercept ``b0``.  Setting the derivative in ``b_j`` to
zero with the other coordinates fixed gives the update

    b_j <- S(rho_j, lam * alpha / 2) / (v_j + lam * (1 - alpha) / 2)

where ``rho_j = (1/N) sum_i w_i x_ij r_i^(-j)``, ``v_j = (1/N) sum_i w_i x_ij^2``
and ``S`` is soft-thresholding.  The same stationarity condition at ``b = 0``
gives ``lambda_max = 2 max_j |rho_j| / alpha``.

Note this is *not* the scikit-learn parameterisation; sklearn's
``ElasticNet(alpha=lam / 2, l1_ratio=alpha)`` minimises half of the objective
above and therefore has the same minimiser.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateColumn, DegenerateData, DegenerateResponse, NumericError

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.5
DEFAULT_TOLERANCE = 1e-7
DEFAULT_MAX_SWEEPS = 10_000
DEFAULT_N_LAMBDA = 100
DEFAULT_RATIO = 1e-4
# alpha used to cap the grid when alpha == 0 (pure ridge has no finite lambda_max)
RIDGE_CAP_ALPHA = 0.001
# relative slack on the soft-threshold so that |rho| == threshold up to
# rounding yields an exact zero
_THRESHOLD_SLACK = 1e-12
# restricted sweeps between exact solves on the active face
_FACE_EVERY = 5


@dataclass(frozen=True)
class ElasticNetProblem:
    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None
    alpha: float = DEFAULT_ALPHA
    lambda_grid: np.ndarray | None = None
    tolerance: float = DEFAULT_TOLERANCE
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    feature_names: tuple | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        n, p = X.shape
        if p < 1 or n < 2:
            raise ValueError(f"need >= 2 rows and >= 1 column, got {X.shape}")
        if y.shape[0] != n:
            raise ValueError("X and y have different row counts")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NumericError("non-finite values in X or y")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != n or np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ValueError("weights must be finite, nonnegative, not all zero, one per row")
        if self.lambda_grid is not None:
            grid = np.asarray(self.lambda_grid, dtype=float).ravel()
            if np.any(grid < 0) or np.any(np.diff(grid) >= 0):
                raise ValueError("lambda_grid must be nonnegative and strictly decreasing")
            object.__setattr__(self, "lambda_grid", grid)
        names = self.feature_names
        if names is None:
            names = tuple(f"x{j}" for j in range(p))
        elif len(names) != p:
            raise ValueError("feature_names length does not match X")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "feature_names", tuple(names))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass
class Coefficients:
    intercept: float
    beta: np.ndarray
    lam: float
    feature_names: tuple = ()
    converged: bool = True
    sweeps: int = 0
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def nonzero_set(self):
        return [self.feature_names[j] for j in np.flatnonzero(self.beta)]

    def predict(self, X):
        return self.intercept + np.asarray(X, dtype=float) @ self.beta


def objective(problem, intercept, beta, lam):
    """Value of the penalised objective at ``(intercept, beta)``."""
    r = problem.y - intercept - problem.X @ beta
    loss = np.dot(problem.weights, r * r) / problem.n
    a = problem.alpha
    return loss + 0.5 * lam * ((1.0 - a) * np.dot(beta, beta) + 2.0 * a * np.abs(beta).sum())


def standardize(X, names=None):
    """Centre each column and scale it to unit mean square.

    Returns ``(Z, means, scales)``; ``scales`` is the population standard
    deviation so that ``(1/N) sum z^2 == 1``.  Raises ``DegenerateColumn`` on a
    constant column.
    """
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    centred = X - means
    scales = np.sqrt((centred * centred).mean(axis=0))
    for j, s in enumerate(scales):
        # relative test: a column whose spread is at rounding level is constant
        if not s > 1e-13 * max(1.0, abs(means[j])):
            raise DegenerateColumn(names[j] if names is not None else j)
    return centred / scales, means, scales


def _null_fit(problem):
    w = problem.weights
    return float(np.dot(w, problem.y) / w.sum())


def lambda_max(problem, alpha=None):
    """Smallest lambda at which every penalised coefficient is exactly zero."""
    a = problem.alpha if alpha is None else alpha
    if a <= 0:
        raise ValueError("lambda_max is infinite for alpha = 0")
    b0 = _null_fit(problem)
    rho = problem.X.T @ (problem.weights * (problem.y - b0)) / problem.n
    return 2.0 * float(np.max(np.abs(rho))) / a


def lambda_grid(problem, n_lambda=DEFAULT_N_LAMBDA, ratio=DEFAULT_RATIO, ridge_cap_alpha=RIDGE_CAP_ALPHA):
    """Log-spaced decreasing grid from lambda_max down to lambda_max * ratio.

    For ``alpha == 0`` the top of the grid is ``lambda_max`` evaluated at
    ``ridge_cap_alpha``; pass ``ridge_cap_alpha=None`` to refuse instead.
    """
    if n_lambda < 1:
        raise ValueError("n_lambda must be >= 1")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    if problem.alpha > 0:
        top = lambda_max(problem)
    elif ridge_cap_alpha:
        top = lambda_max(problem, alpha=ridge_cap_alpha)
    else:
        raise ValueError("alpha = 0 needs a grid cap (ridge_cap_alpha)")
    if top <= 0:
        # y orthogonal to every column: any positive grid gives the null model
        top = 1.0
    if n_lambda == 1:
        return np.array([top])
    return top * np.logspace(0.0, np.log10(ratio), n_lambda)


@njit(cache=True)
def _prepare(Z, y, w, beta, b0):
    n, p = Z.shape
    v = np.empty(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += w[i] * Z[i, j] * Z[i, j]
        v[j] = acc / n
    r = y - b0 - Z @ beta
    return v, r


@njit(cache=True)
def _objective(w, r, beta, lam, alpha):
    n = r.shape[0]
    loss = 0.0
    for i in range(n):
        loss += w[i] * r[i] * r[i]
    l2 = 0.0
    l1 = 0.0
    for j in range(beta.shape[0]):
        l2 += beta[j] * beta[j]
        l1 += abs(beta[j])
    return loss / n + 0.5 * lam * ((1.0 - alpha) * l2 + 2.0 * alpha * l1)


@njit(cache=True)
def _face_solve(Z, y, w, r, beta, b0, lam, alpha):
    """Move towards the exact minimiser on the current active face.

    With signs held fixed the objective is a quadratic on the face.  If its
    minimiser keeps every sign it is taken outright; otherwise the step stops
    where the first coefficient reaches zero, which still lowers the
    objective because the face quadratic decreases along the whole segment.
    Applied in place only if the objective drops; returns the intercept.
    """
    n, p = Z.shape
    m = 0
    for j in range(p):
        if beta[j] != 0.0:
            m += 1
    if m == 0:
        return b0
    idx = np.empty(m, dtype=np.int64)
    k = 0
    for j in range(p):
        if beta[j] != 0.0:
            idx[k] = j
            k += 1
    M = np.empty((n, m + 1))
    for i in range(n):
        M[i, 0] = 1.0
        for k in range(m):
            M[i, k + 1] = Z[i, idx[k]]
    Mw = M.T.copy()
    for i in range(n):
        for k in range(m + 1):
            Mw[k, i] *= w[i]
    A = Mw @ M / n
    rhs = Mw @ y / n
    for k in range(m):
        A[k + 1, k + 1] += 0.5 * lam * (1.0 - alpha)
        rhs[k + 1] -= 0.5 * lam * alpha * np.sign(beta[idx[k]])
    try:
        sol = np.linalg.solve(A, rhs)
    except Exception:
        return b0
    for k in range(m + 1):
        if not np.isfinite(sol[k]):
            return b0
    # largest step along (sol - current) that keeps all signs
    step = 1.0
    hit = -1
    for k in range(m):
        bk = beta[idx[k]]
        if np.sign(sol[k + 1]) != np.sign(bk):
            t = bk / (bk - sol[k + 1])
            if t < step:
                step = t
                hit = k
    if step <= 0.0:
        return b0
    new_beta = np.zeros(p)
    new_b0 = b0 + step * (sol[0] - b0)
    for k in range(m):
        if k == hit:
            continue
        bk = beta[idx[k]]
        nb = bk + step * (sol[k + 1] - bk)
        if np.sign(nb) == np.sign(bk):
            new_beta[idx[k]] = nb
    new_r = y - new_b0 - Z @ new_beta
    if _objective(w, new_r, new_beta, lam, alpha) < _objective(w, r, beta, lam, alpha):
        beta[:] = new_beta
        r[:] = new_r
        return new_b0
    return b0


@njit(cache=True, fastmath={'reassoc', 'contract'})
def _sweeps(Z, y, w, v, wsum, r, beta, b0, lam, alpha, tol, max_sweeps, trace, record, slack, face_every):
    """Run sweeps in place on ``beta``/``r``; returns ``(b0, sweeps, converged)``.

    Every ``face_every`` consecutive active-set sweeps an exact solve on the
    active face is attempted (0 disables it).
    """
    n, p = Z.shape
    inv_n = 1.0 / n
    thr = 0.5 * lam * alpha
    cut = thr * (1.0 + slack)
    ridge = 0.5 * lam * (1.0 - alpha)
    full = True
    converged = False
    sweeps = 0
    restricted = 0
    while sweeps < max_sweeps:
        maxd = 0.0
        for j in range(p):
            bj = beta[j]
            if not full and bj == 0.0:
                continue
            acc = 0.0
            for i in range(n):
                acc += w[i] * Z[i, j] * r[i]
            rho = acc * inv_n + v[j] * bj
            denom = v[j] + ridge
            if denom <= 0.0:
                new = 0.0
            elif rho > cut:
                new = (rho - thr) / denom
            elif rho < -cut:
                new = (rho + thr) / denom
            else:
                new = 0.0
            if new != bj:
                d = new - bj
                for i in range(n):
                    r[i] -= Z[i, j] * d
                beta[j] = new
                if abs(d) > maxd:
                    maxd = abs(d)
        acc = 0.0
        for i in range(n):
            acc += w[i] * r[i]
        shift = acc / wsum
        if shift != 0.0:
            b0 += shift
            for i in range(n):
                r[i] -= shift
            if abs(shift) > maxd:
                maxd = abs(shift)
        if full:
            restricted = 0
        else:
            restricted += 1
            if face_every > 0 and restricted % face_every == 0 and maxd >= tol:
                b0 = _face_solve(Z, y, w, r, beta, b0, lam, alpha)
        if record:
            trace[sweeps] = _objective(w, r, beta, lam, alpha)
        sweeps += 1
        if maxd < tol:
            if full:
                converged = True
                break
            full = True
        else:
            full = False
    return b0, sweeps, converged


@njit(cache=True)
def _path_kernel(Z, y, w, lambdas, alpha, b0, tol, max_sweeps, slack, face_every):
    n, p = Z.shape
    L = lambdas.shape[0]
    beta = np.zeros(p)
    v, r = _prepare(Z, y, w, beta, b0)
    wsum = w.sum()
    betas = np.zeros((L, p))
    b0s = np.empty(L)
    sweeps = np.empty(L, dtype=np.int64)
    conv = np.empty(L, dtype=np.bool_)
    dummy = np.empty(1)
    for k in range(L):
        b0, s, c = _sweeps(
            Z, y, w, v, wsum, r, beta, b0, lambdas[k], alpha, tol, max_sweeps, dummy, False, slack,
            face_every,
        )
        betas[k] = beta
        b0s[k] = b0
        sweeps[k] = s
        conv[k] = c
    return betas, b0s, sweeps, conv


def _polish(problem, lam, intercept, beta):
    """Solve the stationarity equations exactly on the current active set.

    Returns ``(intercept, beta)`` or ``None`` when the system is singular or the
    solution changes a sign (the active set was not final).
    """
    active = np.flatnonzero(beta)
    a = problem.alpha
    X, y, w, n = problem.X, problem.y, problem.weights, problem.n
    M = np.empty((n, active.size + 1))
    M[:, 0] = 1.0
    M[:, 1:] = X[:, active]
    Mw = M.T * w
    A = Mw @ M / n
    idx = np.arange(1, active.size + 1)
    A[idx, idx] += 0.5 * lam * (1.0 - a)
    rhs = Mw @ y / n
    signs = np.sign(beta[active])
    rhs[1:] -= 0.5 * lam * a * signs
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)) or not np.all(np.sign(sol[1:]) == signs):
        return None
    new_beta = np.zeros_like(beta)
    new_beta[active] = sol[1:]
    return float(sol[0]), new_beta


def coordinate_descent(problem, lam, warm_start=None, polish=True):
    """Minimise the objective at one ``lam`` by cyclic coordinate descent.

    Coordinates are swept cyclically; after a full sweep, sweeps are restricted
    to the nonzero coordinates until they settle, then a full sweep re-checks
    every coordinate.  Terminates when the largest change in one sweep
    (intercept included) is below ``problem.tolerance`` on a full sweep, or at
    ``problem.max_sweeps`` with ``converged=False``.

    On convergence the active set is solved exactly (``polish``), which takes
    the small-lambda / OLS end of the path to machine precision; the polished
    point is kept only if its objective is no worse.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    p = problem.p
    if warm_start is None:
        beta = np.zeros(p)
        b0 = _null_fit(problem)
    else:
        beta = np.array(warm_start.beta, dtype=float, copy=True)
        b0 = float(warm_start.intercept)
    Z = np.asfortranarray(problem.X)
    trace = np.empty(problem.max_sweeps + 1)
    v, r = _prepare(Z, problem.y, problem.weights, beta, b0)
    b0, sweeps, converged = _sweeps(
        Z, problem.y, problem.weights, v, float(problem.weights.sum()), r, beta, b0, float(lam),
        float(problem.alpha), float(problem.tolerance), int(problem.max_sweeps), trace, True,
        _THRESHOLD_SLACK, _FACE_EVERY,
    )
    trace = trace[:sweeps]
    if polish and converged and np.any(beta):
        polished = _polish(problem, lam, b0, beta)
        if polished is not None:
            current = trace[-1] if sweeps else objective(problem, b0, beta, lam)
            value = objective(problem, polished[0], polished[1], lam)
            if value <= current:
                b0, beta = polished
                trace = np.append(trace, value)
    if not converged:
        logger.debug("coordinate descent hit max_sweeps=%d at lambda=%g", problem.max_sweeps, lam)
    return Coefficients(
        intercept=float(b0), beta=beta, lam=float(lam), feature_names=problem.feature_names,
        converged=bool(converged), sweeps=int(sweeps), objective_trace=trace,
    )


def solve_path(problem, lambdas):
    """Solve at each lambda in order, warm-starting from the previous solution.

    Runs the whole path inside one compiled loop without per-sweep traces or
    active-set polishing; use ``coordinate_descent`` for a single polished
    solve.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    Z = np.asfortranarray(problem.X)
    betas, b0s, sweeps, conv = _path_kernel(
        Z, problem.y, problem.weights, lambdas, float(problem.alpha), _null_fit(problem),
        float(problem.tolerance), int(problem.max_sweeps), _THRESHOLD_SLACK, _FACE_EVERY,
    )
    return [
        Coefficients(
            intercept=float(b0s[k]), beta=betas[k], lam=float(lambdas[k]),
            feature_names=problem.feature_names, converged=bool(conv[k]), sweeps=int(sweeps[k]),
        )
        for k in range(lambdas.size)
    ]


def explained_deviance(problem, coefficients):
    """Gaussian explained deviance, ``1 - RSS / TSS`` with observation weights."""
    w, y = problem.weights, problem.y
    ybar = np.dot(w, y) / w.sum()
    tss = float(np.dot(w, (y - ybar) ** 2))
    if tss <= 1e-300:
        raise DegenerateResponse("response has zero total sum of squares")
    resid = y - coefficients.predict(problem.X)
    return 1.0 - float(np.dot(w, resid * resid)) / tss


@dataclass
class FitResult:
    coefficients: Coefficients
    lambda_star: float
    lambda_grid: np.ndarray
    cv_curve: np.ndarray
    deviance: float
    deviance_path: np.ndarray
    converged: bool
    sweeps_used: int
    floor_met: bool
    standardized: Coefficients
    means: np.ndarray
    scales: np.ndarray
    path_converged: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))

    @property
    def nonzero_set(self):
        return self.coefficients.nonzero_set

    def predict(self, X):
        return self.coefficients.predict(X)

    def to_dict(self):
        return {
            "lambda_star": self.lambda_star,
            "deviance": self.deviance,
            "floor_met": self.floor_met,
            "converged": self.converged,
            "sweeps_used": self.sweeps_used,
            "intercept": self.coefficients.intercept,
            "nonzero_set": {
                name: float(self.coefficients.beta[j])
                for j, name in enumerate(self.coefficients.feature_names)
                if self.coefficients.beta[j] != 0
            },
            "lambda_grid": self.lambda_grid.tolist(),
            "cv_curve": self.cv_curve.tolist(),
        }


def forward_chain_folds(n, n_folds):
    """Split ``range(n)`` into ``n_folds + 1`` contiguous blocks.

    Fold ``f`` trains on blocks ``0..f`` and validates on block ``f + 1``.
    """
    if n < n_folds + 1:
        raise DegenerateData(f"{n} rows cannot form {n_folds + 1} forward-chaining blocks")
    blocks = np.array_split(np.arange(n), n_folds + 1)
    for f in range(n_folds):
        yield np.concatenate(blocks[: f + 1]), blocks[f + 1]


def _to_original_scale(coef, means, scales):
    beta = coef.beta / scales
    return Coefficients(
        intercept=float(coef.intercept - np.dot(beta, means)), beta=beta, lam=coef.lam,
        feature_names=coef.feature_names, converged=coef.converged, sweeps=coef.sweeps,
        objective_trace=coef.objective_trace,
    )


def _fold_predictions(problem, train, val, lambdas):
    """Validation predictions for every lambda from a model fit on ``train``."""
    Xt, yt = problem.X[train], problem.y[train]
    wt = problem.weights[train]
    Xv = problem.X[val]
    preds = np.empty((len(lambdas), val.size))
    ok = np.ones(problem.p, dtype=bool)
    if train.size >= 2:
        spread = Xt.std(axis=0)
        ok = spread > 1e-13 * np.maximum(1.0, np.abs(Xt.mean(axis=0)))
    if train.size < 2 or not ok.any() or np.ptp(yt) == 0:
        preds[:] = np.dot(wt, yt) / wt.sum()
        return preds
    Z, means, scales = standardize(Xt[:, ok])
    sub = ElasticNetProblem(
        Z, yt, weights=wt, alpha=problem.alpha, tolerance=problem.tolerance,
        max_sweeps=problem.max_sweeps,
    )
    Zv = (Xv[:, ok] - means) / scales
    for i, coef in enumerate(solve_path(sub, lambdas)):
        preds[i] = coef.predict(Zv)
    return preds


def cross_validate(problem, deviance_floor=0.5, n_folds=5, n_lambda=DEFAULT_N_LAMBDA, ratio=DEFAULT_RATIO):
    """Select lambda by forward-chaining cross-validation under a deviance floor.

    ``problem.X`` is on the original scale; it is standardised here (and
    separately inside every training fold) and the returned coefficients are
    back-transformed.  Rows must be in temporal order.

    ``lambda_star`` minimises the mean validation MSE among the lambdas whose
    full-data fit explains at least ``deviance_floor`` of the deviance.  When no
    lambda reaches the floor, the deviance-maximising lambda is used and
    ``floor_met`` is False.
    """
    folds = list(forward_chain_folds(problem.n, n_folds))
    if np.ptp(problem.y) == 0:
        raise DegenerateResponse("constant response")
    Z, means, scales = standardize(problem.X, problem.feature_names)
    std_problem = ElasticNetProblem(
        Z, problem.y, weights=problem.weights, alpha=problem.alpha, tolerance=problem.tolerance,
        max_sweeps=problem.max_sweeps, feature_names=problem.feature_names,
    )
    grid = problem.lambda_grid
    if grid is None:
        grid = lambda_grid(std_problem, n_lambda=n_lambda, ratio=ratio)

    sq_err = np.zeros((len(folds), grid.size))
    for f, (train, val) in enumerate(folds):
        preds = _fold_predictions(problem, train, val, grid)
        sq_err[f] = ((preds - problem.y[val]) ** 2).mean(axis=1)
    cv_curve = sq_err.mean(axis=0)

    path = solve_path(std_problem, grid)
    deviance_path = np.array([explained_deviance(std_problem, c) for c in path])
    path_converged = np.array([c.converged for c in path])

    eligible = np.flatnonzero(deviance_path >= deviance_floor)
    if eligible.size:
        best = int(eligible[np.argmin(cv_curve[eligible])])
        floor_met = True
    else:
        best = int(np.argmax(deviance_path))
        floor_met = False
        logger.warning("no lambda reaches deviance floor %.3f; using max-deviance lambda", deviance_floor)
    # re-solve from the path point so the reported fit is polished
    chosen = coordinate_descent(std_problem, grid[best], warm_start=path[best])
    return FitResult(
        coefficients=_to_original_scale(chosen, means, scales),
        lambda_star=float(grid[best]),
        lambda_grid=grid,
        cv_curve=cv_curve,
        deviance=float(deviance_path[best]),
        deviance_path=deviance_path,
        converged=chosen.converged,
        sweeps_used=int(sum(c.sweeps for c in path)),
        floor_met=floor_met,
        standardized=chosen,
        means=means,
        scales=scales,
        path_converged=path_converged,
    )
