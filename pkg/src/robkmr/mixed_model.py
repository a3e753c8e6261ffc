"""Variance-component mixed model fit by restricted maximum likelihood.

The model is y = X beta + sum_m h_m + e with each h_m drawn from a kernel
component tau_m K_m and e ~ N(0, sigma2 I).  Fitting uses Fisher scoring on
(sigma2, tau) with step halving, lower-bound clamping and a small grid of
starting points; the best converged endpoint wins.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernels import GramMatrix

TAU_FLOOR = 1e-8
MAX_HALVINGS = 10
JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
DEFAULT_MAX_ITER = 100
# scoring stops when the free-parameter score shrinks by 8 orders of
# magnitude relative to its starting size (scale-free criterion)
SCORE_RTOL = 1e-8
SCORE_ATOL = 1e-11
PLATEAU_LL_RTOL = 1e-11
PLATEAU_SCORE_RTOL = 1e-5
# once the likelihood has plateaued, residual score at this level is
# evaluation noise from the conditioning of Sigma, not real gradient
PLATEAU_SCORE_ATOL = 1e-3

_START_SEED = 1729  # fixed so that default fits are reproducible


@dataclass(frozen=True)
class ComponentSet:
    """Ordered kernel components with human-readable labels."""

    kernels: tuple[GramMatrix, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.kernels) != len(self.labels):
            raise ValueError("kernels and labels must align")
        if not self.kernels:
            raise ValueError("need at least one component")
        orders = {k.order for k in self.kernels}
        if len(orders) != 1:
            raise ValueError(f"component orders differ: {sorted(orders)}")

    @property
    def n_components(self) -> int:
        return len(self.kernels)

    @property
    def order(self) -> int:
        return self.kernels[0].order

    def drop_last(self) -> "ComponentSet":
        if len(self.kernels) < 2:
            raise ValueError("cannot drop the only component")
        return ComponentSet(self.kernels[:-1], self.labels[:-1])


def assemble_components(k1: GramMatrix, k2: GramMatrix, k3: GramMatrix) -> ComponentSet:
    """Mains, pairwise entrywise products and the triple product, in fixed order."""
    from .kernels import hadamard

    views = {"1": k1, "2": k2, "3": k3}
    kernels: list[GramMatrix] = [k1, k2, k3]
    labels: list[str] = ["1", "2", "3"]
    for a, b in combinations("123", 2):
        kernels.append(hadamard(views[a], views[b]))
        labels.append(f"{a}x{b}")
    kernels.append(hadamard(k1, k2, k3))
    labels.append("1x2x3")
    return ComponentSet(tuple(kernels), tuple(labels))


@dataclass(frozen=True)
class MixedModelFit:
    beta: np.ndarray
    sigma2: float
    tau: np.ndarray
    labels: tuple[str, ...]
    blups: np.ndarray  # (n_components, n) rows h_m
    alpha: np.ndarray  # (n_components, n) dual coefficients, h_m = K_m alpha_m
    reml_loglik: float
    converged: bool
    n_iter: int
    Sigma: np.ndarray
    start_logliks: tuple[float, ...]


class _RemlProblem:
    """Shared data plus likelihood/score/information evaluation at a point."""

    def __init__(self, y: np.ndarray, x: np.ndarray, kernels: tuple[GramMatrix, ...]):
        y = np.asarray(y, dtype=float).ravel()
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] != y.size:
            raise ValueError(f"design has {x.shape[0]} rows for {y.size} responses")
        if np.linalg.matrix_rank(x) < x.shape[1]:
            raise ValueError("design matrix is rank deficient")
        n, q = x.shape
        if n <= q + 1:
            raise ValueError("too few samples for the given design")
        for k in kernels:
            if k.order != n:
                raise ValueError("kernel order does not match sample count")
        self.y = y
        self.x = x
        self.n = n
        self.q = q
        self.kmats = [k.values for k in kernels]
        self.m = len(self.kmats)
        # OLS residual variance anchors starting values and floors
        beta0, *_ = np.linalg.lstsq(x, y, rcond=None)
        rss = float(np.sum((y - x @ beta0) ** 2))
        # rss is never an exact 0.0 in floating point, so test against the
        # response scale instead
        if rss <= 1e-12 * max(float(y @ y), np.finfo(float).tiny):
            raise ValueError("response lies exactly in the design span; no residual variance")
        self.s2_ols = rss / (n - q)
        self.sigma_floor = 1e-12 * self.s2_ols

    def sigma(self, theta: np.ndarray) -> np.ndarray:
        out = theta[0] * np.eye(self.n)
        for m, km in enumerate(self.kmats):
            out += theta[m + 1] * km
        return out

    def _chol_with_jitter(self, sig: np.ndarray):
        scale = float(np.mean(np.diag(sig)))
        try:
            return cho_factor(sig, lower=True)
        except np.linalg.LinAlgError:
            pass
        for jit in JITTER_LADDER:
            try:
                return cho_factor(sig + jit * scale * np.eye(self.n), lower=True)
            except np.linalg.LinAlgError:
                continue
        raise np.linalg.LinAlgError("covariance not positive definite even after jitter")

    def loglik(self, theta: np.ndarray) -> float:
        return self._eval(theta, with_info=False)[0]

    def score(self, theta: np.ndarray) -> np.ndarray:
        return self._eval(theta, with_info=False)[1]

    def _eval(self, theta: np.ndarray, with_info: bool = True):
        """Restricted log-likelihood, score vector and (optionally) Fisher information."""
        sig = self.sigma(theta)
        cf = self._chol_with_jitter(sig)
        ident = np.eye(self.n)
        sinv = cho_solve(cf, ident)
        a = sinv @ self.x
        gram = self.x.T @ a
        cg = cho_factor(gram, lower=True)
        p = sinv - a @ cho_solve(cg, a.T)
        py = p @ self.y
        ldet_s = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
        ldet_g = 2.0 * float(np.sum(np.log(np.diag(cg[0]))))
        ll = -0.5 * (
            ldet_s + ldet_g + float(self.y @ py) + (self.n - self.q) * np.log(2.0 * np.pi)
        )
        score = np.empty(self.m + 1)
        score[0] = -0.5 * (np.trace(p) - float(py @ py))
        for m, km in enumerate(self.kmats):
            score[m + 1] = -0.5 * (float(np.sum(p * km)) - float(py @ (km @ py)))
        if not with_info:
            return ll, score, None, None, None
        ws = [p] + [p @ km for km in self.kmats]
        info = np.empty((self.m + 1, self.m + 1))
        for i in range(self.m + 1):
            for j in range(i, self.m + 1):
                info[i, j] = info[j, i] = 0.5 * float(np.sum(ws[i] * ws[j].T))
        return ll, score, info, sinv, py

    def clamp(self, theta: np.ndarray) -> np.ndarray:
        out = theta.copy()
        out[0] = max(out[0], self.sigma_floor)
        out[1:] = np.maximum(out[1:], TAU_FLOOR)
        return out

    def default_starts(self) -> list[np.ndarray]:
        s2 = self.s2_ols
        starts = []
        for g in (0.1, 0.5, 0.9):
            starts.append(np.array([s2] + [g * s2] * self.m))
        rng = np.random.default_rng(_START_SEED)
        for _ in range(2):
            u = rng.uniform(0.0, 1.0, size=self.m + 1)
            u[0] = max(u[0], 0.05)  # keep sigma2 away from zero
            starts.append(u * s2)
        return [self.clamp(s) for s in starts]


def reml_loglik(
    y: np.ndarray,
    x: np.ndarray,
    components: ComponentSet | tuple[GramMatrix, ...],
    sigma2: float,
    tau: np.ndarray,
) -> float:
    """Restricted log-likelihood at the given variance parameters."""
    prob, theta = _problem_and_theta(y, x, components, sigma2, tau)
    return prob.loglik(theta)


def reml_score(
    y: np.ndarray,
    x: np.ndarray,
    components: ComponentSet | tuple[GramMatrix, ...],
    sigma2: float,
    tau: np.ndarray,
) -> np.ndarray:
    """Gradient of the restricted log-likelihood in (sigma2, tau) order."""
    prob, theta = _problem_and_theta(y, x, components, sigma2, tau)
    return prob.score(theta)


def _problem_and_theta(y, x, components, sigma2, tau):
    kernels = components.kernels if isinstance(components, ComponentSet) else tuple(components)
    prob = _RemlProblem(y, x, kernels)
    tau = np.asarray(tau, dtype=float).ravel()
    if tau.size != prob.m:
        raise ValueError(f"expected {prob.m} component variances, got {tau.size}")
    if sigma2 <= 0 or np.any(tau < 0):
        raise ValueError("variance parameters must be nonnegative with sigma2 > 0")
    return prob, np.concatenate([[sigma2], tau])


def _scoring_run(prob: _RemlProblem, theta0: np.ndarray, max_iter: int):
    """One Fisher-scoring trajectory from a single start."""
    theta = prob.clamp(theta0.copy())
    floors = np.concatenate([[prob.sigma_floor], np.full(prob.m, TAU_FLOOR)])
    ll, score, info, *_ = prob._eval(theta)
    s0 = max(float(np.abs(score).max()), 1.0)
    tol = max(SCORE_RTOL * s0, SCORE_ATOL)
    # boundary-pinned optima can zigzag against the clamp; once the
    # likelihood plateaus we settle for a modest KKT tolerance instead
    tol_loose = max(PLATEAU_SCORE_RTOL * s0, PLATEAU_SCORE_ATOL, tol)
    converged = False
    plateau = False
    n_iter = 0
    prev_move = np.zeros_like(theta)

    for it in range(1, max_iter + 1):
        n_iter = it
        at_floor = theta <= floors * (1.0 + 1e-10)
        free = ~at_floor | (score > 0.0)
        if not free.any():
            converged = True  # boundary point with all gradients pushing outward
            break
        s_free_norm = float(np.abs(score[free]).max())
        if s_free_norm <= tol:
            converged = True
            break
        if plateau:
            converged = s_free_norm <= tol_loose
            break
        sub = info[np.ix_(free, free)]
        s_free = score[free]
        try:
            delta = np.linalg.solve(sub, s_free)
            if not np.all(np.isfinite(delta)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            # singular information (confounded components): minimum-norm step
            delta = np.linalg.lstsq(sub, s_free, rcond=None)[0]
        full_delta = np.zeros_like(theta)
        full_delta[free] = delta
        # a direction reversal means the last full step overshot a ridge;
        # starting at half a step breaks the resulting two-cycle
        step = 0.5 if float(full_delta @ prev_move) < 0.0 else 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = theta.copy()
            cand[free] = cand[free] + step * delta
            cand = prob.clamp(cand)
            try:
                cll, cscore, cinfo, *_ = prob._eval(cand)
            except np.linalg.LinAlgError:
                step *= 0.5
                continue
            if cll > ll or np.array_equal(cand, theta):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # scoring direction cannot improve: numerically at an optimum or stuck
            converged = s_free_norm <= tol_loose
            break
        dll = abs(cll - ll)
        prev_move = cand - theta
        theta, ll, score, info = cand, cll, cscore, cinfo
        plateau = dll <= PLATEAU_LL_RTOL * (1.0 + abs(ll))

    return theta, ll, converged, n_iter


def reml_fit(
    y: np.ndarray,
    x: np.ndarray,
    components: ComponentSet | tuple[GramMatrix, ...],
    starts: list[np.ndarray] | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MixedModelFit:
    """Multi-start Fisher-scoring ReML fit; the highest endpoint wins.

    ``starts`` entries are (sigma2, tau_1..tau_m) vectors; by default a
    small grid anchored at the OLS residual variance plus two reproducible
    random points is used.  Component variances frozen at the lower clamp
    are reported as exactly zero.
    """
    if isinstance(components, ComponentSet):
        comps = components
    else:
        comps = ComponentSet(tuple(components), tuple(str(i + 1) for i in range(len(components))))
    prob = _RemlProblem(y, x, comps.kernels)
    if starts is None:
        start_list = prob.default_starts()
    else:
        start_list = [prob.clamp(np.asarray(s, dtype=float).ravel()) for s in starts]
        for s in start_list:
            if s.size != prob.m + 1:
                raise ValueError(f"start vectors need {prob.m + 1} entries")

    results = [_scoring_run(prob, s, max_iter) for s in start_list]
    lls = [r[1] for r in results]
    ll_max = max(lls)
    # among numerically tied endpoints prefer one whose run converged
    near = [i for i, v in enumerate(lls) if v >= ll_max - 1e-7 * (1.0 + abs(ll_max))]
    best = min(near, key=lambda i: (not results[i][2], i))
    theta, ll, converged, n_iter = results[best]

    # zero out components stuck at the clamp, then report everything at the
    # cleaned parameters so downstream algebra sees a consistent state
    tau = theta[1:].copy()
    tau[tau <= TAU_FLOOR * (1.0 + 1e-10)] = 0.0
    sigma2 = float(theta[0])
    sig = sigma2 * np.eye(prob.n)
    for m, km in enumerate(prob.kmats):
        if tau[m] > 0:
            sig += tau[m] * km
    cf = prob._chol_with_jitter(sig)
    sinv = cho_solve(cf, np.eye(prob.n))
    a = sinv @ prob.x
    gram = prob.x.T @ a
    beta = np.linalg.solve(gram, a.T @ prob.y)
    resid_si = sinv @ (prob.y - prob.x @ beta)
    alpha = np.array([tau[m] * resid_si for m in range(prob.m)])
    blups = np.array([prob.kmats[m] @ alpha[m] for m in range(prob.m)])

    return MixedModelFit(
        beta=beta,
        sigma2=sigma2,
        tau=tau,
        labels=comps.labels,
        blups=blups,
        alpha=alpha,
        reml_loglik=float(ll),
        converged=converged,
        n_iter=n_iter,
        Sigma=sig,
        start_logliks=tuple(float(v) for v in lls),
    )
