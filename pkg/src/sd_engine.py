"""
Three-component signal decomposition of the transformed signal.

    y = x1 + x2 + x3   on the known entries

x1 is a sparse residual (l1 cost), x2 the clear-sky component restricted to
the corpus affine set x2 = 1 mu^T + Z Q^T (nonnegative and concave across
bins), x3 the shade component (nonpositive and smooth in both directions).

The problem is solved with scaled, over-relaxed ADMM in consensus form over
the stacked unknowns xi = [vec(Z), vec(x3)]: every cost term is attached to
one row-scaled linear image u_i = L_i xi + c_i and handled by its proximal
operator, while the xi-update is a single sparse solve with the constant
matrix L^T L.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import brentq, linprog
from scipy.sparse.linalg import splu

from clearsky_corpus import ClearSkyCorpus
from errors import ArgumentError, BuildError
from matrix_io import write_document, write_matrix

logger = logging.getLogger(__name__)

WEIGHT_MODES = ("eigenvalue-inverse", "eigenvalue-inverse-sqrt")
NORM_MODES = ("unsquared", "squared")

CONE_TOL = 1e-7
AFFINE_TOL = 1e-6

RELAXATION = 1.6
RHO_UPDATE_EVERY = 25
RHO_MIN, RHO_MAX = 1e-6, 1e6


@dataclass(frozen=True)
class SdParams:
    lambda_2a: float = 0.05
    lambda_2b: float = 1e-4
    lambda_3: float = 1.0
    weight_mode: str = "eigenvalue-inverse"
    norm_mode: str = "unsquared"
    abs_tol: float = 1e-4
    rel_tol: float = 1e-3
    max_iter: int = 5000
    rho: float = 1.0
    adaptive_rho: bool = True

    def __post_init__(self):
        for name in ("lambda_2a", "lambda_2b", "lambda_3", "abs_tol", "rel_tol", "rho"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ArgumentError(f"{name} must be positive, got {value}")
        if self.max_iter < 1:
            raise ArgumentError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ArgumentError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.norm_mode not in NORM_MODES:
            raise ArgumentError(f"norm_mode must be one of {NORM_MODES}")


@dataclass(frozen=True)
class SdProblem:
    y: np.ndarray             # T x p, NaN outside the known set
    known_mask: np.ndarray    # T x p
    mu: np.ndarray            # p
    Q: np.ndarray             # p x k
    lam: np.ndarray           # k
    params: SdParams
    D2_rows: sparse.csr_matrix
    D2_cols: sparse.csr_matrix
    params_hash: str = ""

    @property
    def shape(self) -> Tuple[int, int]:
        return self.y.shape

    @property
    def k(self) -> int:
        return self.Q.shape[1]

    @property
    def y_known(self) -> np.ndarray:
        """y with every entry outside the known set replaced by 0."""
        return np.where(self.known_mask, np.nan_to_num(self.y, nan=0.0), 0.0)

    def weights(self) -> np.ndarray:
        if self.params.weight_mode == "eigenvalue-inverse":
            return 1.0 / self.lam
        return 1.0 / np.sqrt(self.lam)

    def clear_sky(self, Z: np.ndarray) -> np.ndarray:
        return self.mu[None, :] + Z @ self.Q.T


@dataclass
class Decomposition:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    Z: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    rho: float = 1.0
    objective_history: List[float] = field(default_factory=list)

    def diagnostics(self) -> Dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "converged": self.converged,
            "final_rho": self.rho,
        }


# --- Problem assembly ---

def second_diff(n: int) -> sparse.csr_matrix:
    """(n-2) x n second-difference operator; row j is x[j] - 2 x[j+1] + x[j+2]."""
    if n < 3:
        raise ArgumentError(f"Second difference needs n >= 3, got {n}")
    return sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n), format="csr")


def build_problem_from_arrays(y: np.ndarray, mu: np.ndarray, Q: np.ndarray, lam: np.ndarray,
                              params: SdParams = SdParams(),
                              known_mask: Optional[np.ndarray] = None,
                              params_hash: str = "") -> SdProblem:
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise BuildError(f"Signal must be a matrix, got shape {y.shape}")
    T, p = y.shape
    mu = np.asarray(mu, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    lam = np.asarray(lam, dtype=float)
    if len(mu) != p:
        raise BuildError(f"Corpus has p={len(mu)} samples per day but the signal has {p}")
    if Q.shape[1] == 0:
        raise BuildError("Corpus has no eigenpairs (effective k = 0)")
    if len(lam) != Q.shape[1] or np.any(lam <= 0):
        raise BuildError("Corpus eigenvalues must be positive and match Q")
    if T < 3 or p < 3:
        raise BuildError(f"Signal must be at least 3 x 3, got {y.shape}")
    if known_mask is None:
        known_rows = np.all(np.isfinite(y), axis=1)
        known_mask = np.repeat(known_rows[:, None], p, axis=1)
    known_mask = np.asarray(known_mask, dtype=bool)
    if known_mask.shape != y.shape:
        raise BuildError("Known mask shape does not match the signal")
    return SdProblem(y=y, known_mask=known_mask, mu=mu, Q=Q, lam=lam, params=params,
                     D2_rows=second_diff(T), D2_cols=second_diff(p), params_hash=params_hash)


def build_problem(ts, corpus: ClearSkyCorpus, params: SdParams = SdParams()) -> SdProblem:
    """Assemble a problem from a TransformedSignal and a fitted corpus."""
    if ts.y.shape[1] != corpus.p:
        raise BuildError(f"Corpus has p={corpus.p} but the signal has {ts.y.shape[1]} columns")
    return build_problem_from_arrays(ts.y, corpus.mu, corpus.Q, corpus.lam, params,
                                     ts.known_mask, ts.params_hash)


# --- Objective ---

def _norm_term(v: np.ndarray, squared: bool) -> float:
    n = float(np.linalg.norm(v))
    return n * n if squared else n


def _penalties(prob: SdProblem, x2: np.ndarray, x3: np.ndarray, Z: np.ndarray) -> float:
    prm = prob.params
    sq = prm.norm_mode == "squared"
    resid = np.where(prob.known_mask, prob.y_known - x2 - x3, 0.0)
    return (np.abs(resid).sum()
            + prm.lambda_2a * _norm_term(Z * prob.weights()[None, :], sq)
            + prm.lambda_2b * _norm_term(prob.D2_rows @ x2, sq)
            + prm.lambda_3 * (_norm_term(prob.D2_rows @ x3, sq)
                              + _norm_term(prob.D2_cols @ x3.T, sq)))


def constraint_violations(prob: SdProblem, x2: np.ndarray, x3: np.ndarray,
                          Z: np.ndarray) -> Dict[str, float]:
    """Largest violation of each hard constraint (0 when satisfied)."""
    return {
        "shade_positive": float(max(np.max(x3), 0.0)),
        "clear_negative": float(max(-np.min(x2), 0.0)),
        "clear_concavity": float(max(np.max(prob.D2_rows @ x2), 0.0)),
        "clear_boundary": float(np.max(np.abs(x2[:, [0, -1]]))),
        "corpus_span": float(np.max(np.abs(x2 - prob.clear_sky(Z)))),
    }


def evaluate_objective(prob: SdProblem, x2: np.ndarray, x3: np.ndarray, Z: np.ndarray) -> float:
    """Objective value, or +inf when a hard constraint is violated."""
    x2, x3, Z = (np.asarray(a, dtype=float) for a in (x2, x3, Z))
    if x2.shape != prob.shape or x3.shape != prob.shape or Z.shape != (prob.shape[0], prob.k):
        raise ArgumentError("Component shapes do not match the problem")
    v = constraint_violations(prob, x2, x3, Z)
    if (v["shade_positive"] > CONE_TOL or v["clear_negative"] > CONE_TOL
            or v["clear_concavity"] > CONE_TOL or v["clear_boundary"] > CONE_TOL
            or v["corpus_span"] > AFFINE_TOL):
        return float("inf")
    return float(_penalties(prob, x2, x3, Z))


# --- Proximal operators ---

def _soft_threshold(a: np.ndarray, t: float) -> np.ndarray:
    return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)


def _shrink_norm(a: np.ndarray, t: float) -> np.ndarray:
    n = np.linalg.norm(a)
    if n <= t:
        return np.zeros_like(a)
    return a * (1.0 - t / n)


def _shrink_weighted_norm(a: np.ndarray, w: np.ndarray, t: float) -> np.ndarray:
    """argmin_v t ||w * v|| + 0.5 ||v - a||^2 for positive weights w."""
    if np.linalg.norm(a / w) <= t:
        return np.zeros_like(a)

    def gap(gamma: float) -> float:
        return gamma * np.linalg.norm(w * a / (1.0 + gamma * w * w)) - t

    hi = 1.0
    while gap(hi) < 0:
        hi *= 2.0
    gamma = brentq(gap, 0.0, hi, xtol=1e-14, rtol=1e-12)
    return a / (1.0 + gamma * w * w)


def _norm_prox(weight: float, squared: bool,
               cone: Optional[Callable] = None) -> Callable[[np.ndarray, float], np.ndarray]:
    def prox(a: np.ndarray, t: float) -> np.ndarray:
        if cone is not None:
            a = cone(a)
        if squared:
            return a / (1.0 + 2.0 * weight * t)
        return _shrink_norm(a, weight * t)
    return prox


def _weighted_norm_prox(weight: float, w: np.ndarray,
                        squared: bool) -> Callable[[np.ndarray, float], np.ndarray]:
    def prox(a: np.ndarray, t: float) -> np.ndarray:
        if squared:
            return a / (1.0 + 2.0 * weight * t * w * w)
        return _shrink_weighted_norm(a, w, weight * t)
    return prox


def _nonpos(a: np.ndarray) -> np.ndarray:
    return np.minimum(a, 0.0)


def _nonneg(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


@dataclass
class _Splitting:
    """Stacked linear images L xi + c with one proximal operator per block."""
    L: sparse.csr_matrix
    c: np.ndarray
    blocks: List[Tuple[str, slice, Callable]]
    n_z: int

    def prox(self, a: np.ndarray, rho: float) -> np.ndarray:
        out = np.empty_like(a)
        t = 1.0 / rho
        for _, sl, fn in self.blocks:
            out[sl] = fn(a[sl], t)
        return out


def _row_scale(mat: sparse.csr_matrix) -> float:
    """Factor that brings the RMS row norm of a block to one."""
    rms = np.sqrt(mat.multiply(mat).sum() / max(mat.shape[0], 1))
    return 1.0 / rms if rms > 0 else 1.0


def _splitting(prob: SdProblem) -> _Splitting:
    """
    Consensus blocks of the decomposition. Each block is scaled so its rows
    have unit RMS norm; a cost f(u) on block u = L_i xi + c_i becomes
    f(v / s) on v = s (L_i xi + c_i), so norm weights pick up 1/s (1/s^2
    when squared) and cones are unchanged.
    """
    T, p = prob.shape
    k = prob.k
    prm = prob.params
    sq = prm.norm_mode == "squared"

    eye_T = sparse.identity(T, format="csr")
    QQ = sparse.kron(eye_T, sparse.csr_matrix(prob.Q), format="csr")
    DT = sparse.kron(prob.D2_rows, sparse.identity(p), format="csr")
    DP = sparse.kron(eye_T, prob.D2_cols, format="csr")
    known_idx = np.flatnonzero(prob.known_mask.ravel())
    PK = sparse.identity(T * p, format="csr")[known_idx]
    IZ = sparse.identity(T * k, format="csr")
    I3 = sparse.identity(T * p, format="csr")
    mu_tiled = np.tile(prob.mu, T)
    y_vec = prob.y_known.ravel()
    w_tiled = np.tile(prob.weights(), T)

    def row(left, right):
        return sparse.hstack([left, right], format="csr")

    def scaled(weight: float, s: float) -> float:
        return weight / (s * s) if sq else weight / s

    zero = sparse.csr_matrix
    parts = [
        ("residual", row(-PK @ QQ, -PK), PK @ (y_vec - mu_tiled),
         lambda s: lambda a, t: _soft_threshold(a, t / s)),
        ("clear_curvature", row(DT @ QQ, zero((DT.shape[0], T * p))), DT @ mu_tiled,
         lambda s: _norm_prox(scaled(prm.lambda_2b, s), sq, _nonpos)),
        ("clear_nonneg", row(QQ, zero((T * p, T * p))), mu_tiled,
         lambda s: lambda a, t: _nonneg(a)),
        ("shade_rows", row(zero((DT.shape[0], T * k)), DT), np.zeros(DT.shape[0]),
         lambda s: _norm_prox(scaled(prm.lambda_3, s), sq)),
        ("shade_cols", row(zero((DP.shape[0], T * k)), DP), np.zeros(DP.shape[0]),
         lambda s: _norm_prox(scaled(prm.lambda_3, s), sq)),
        ("shade_nonpos", row(zero((T * p, T * k)), I3), np.zeros(T * p),
         lambda s: lambda a, t: _nonpos(a)),
        ("corpus_weight", row(IZ, zero((T * k, T * p))), np.zeros(T * k),
         lambda s: _weighted_norm_prox(scaled(prm.lambda_2a, s), w_tiled, sq)),
    ]
    blocks, mats, consts, start = [], [], [], 0
    for name, mat, const, make_prox in parts:
        s = _row_scale(mat)
        blocks.append((name, slice(start, start + mat.shape[0]), make_prox(s)))
        mats.append(mat * s)
        consts.append(const * s)
        start += mat.shape[0]
    L = sparse.vstack(mats, format="csr")
    return _Splitting(L=L, c=np.concatenate(consts), blocks=blocks, n_z=T * k)


# --- Solver ---

def warm_start(prob: SdProblem) -> Tuple[np.ndarray, np.ndarray]:
    """Z from projecting known rows onto the corpus span, interpolated over missing rows."""
    T, _ = prob.shape
    known_rows = prob.known_mask.all(axis=1)
    Z = np.zeros((T, prob.k))
    if known_rows.any():
        idx = np.flatnonzero(known_rows)
        Z_known = (prob.y_known[idx] - prob.mu[None, :]) @ prob.Q
        for j in range(prob.k):
            Z[:, j] = np.interp(np.arange(T), idx, Z_known[:, j])
    return Z, np.zeros(prob.shape)


def _unpack(prob: SdProblem, xi: np.ndarray, n_z: int) -> Tuple[np.ndarray, np.ndarray]:
    T, p = prob.shape
    return xi[:n_z].reshape(T, prob.k), xi[n_z:].reshape(T, p)


def _surrogate_objective(prob: SdProblem, Z: np.ndarray, x3: np.ndarray) -> float:
    x2 = np.maximum(prob.clear_sky(Z), 0.0)
    return float(_penalties(prob, x2, np.minimum(x3, 0.0), Z))


def restore_feasibility(prob: SdProblem, Z: np.ndarray) -> np.ndarray:
    """
    Smallest max-norm change of Z that makes x2 nonnegative and concave
    across bins. Returns Z unchanged if it is already feasible.
    """
    T, p = prob.shape
    k = prob.k
    x2 = prob.clear_sky(Z)
    if np.min(x2) >= 0 and np.max(prob.D2_rows @ x2) <= 0:
        return Z

    QQ = sparse.kron(sparse.identity(T), sparse.csr_matrix(prob.Q), format="csr")
    DTQQ = sparse.kron(prob.D2_rows, sparse.csr_matrix(prob.Q), format="csr")
    mu_tiled = np.tile(prob.mu, T)
    n = T * k
    z0 = Z.ravel()
    ones = sparse.csr_matrix(np.ones((n, 1)))
    eye = sparse.identity(n, format="csr")
    A_ub = sparse.vstack([
        sparse.hstack([-QQ, sparse.csr_matrix((T * p, 1))]),
        sparse.hstack([DTQQ, sparse.csr_matrix((DTQQ.shape[0], 1))]),
        sparse.hstack([eye, -ones]),
        sparse.hstack([-eye, -ones]),
    ], format="csr")
    b_ub = np.concatenate([mu_tiled,
                           -(sparse.kron(prob.D2_rows, sparse.identity(p)) @ mu_tiled),
                           z0, -z0])
    cost = np.zeros(n + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * n + [(0, None)]
    result = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                     options={"primal_feasibility_tolerance": 1e-10})
    if result.status != 0:
        logger.warning("Feasibility restoration failed (%s); using the corpus mean", result.message)
        return np.zeros_like(Z)
    return result.x[:n].reshape(T, k)


def _finalize(prob: SdProblem, Z: np.ndarray, x3: np.ndarray):
    Z = restore_feasibility(prob, Z)
    x2 = np.maximum(prob.clear_sky(Z), 0.0)
    x3 = np.minimum(x3, 0.0)
    return Z, x2, x3, evaluate_objective(prob, x2, x3, Z)


def solve(prob: SdProblem, progress: Optional[Callable[[int, float], None]] = None) -> Decomposition:
    """
    Run over-relaxed ADMM until the RMS primal and dual residuals meet the
    tolerances or max_iter is reached, then restore exact feasibility of the
    best and the final iterate and return the one with the lower objective.
    """
    prm = prob.params
    split = _splitting(prob)
    L, c = split.L, split.c
    Lt = L.T.tocsr()
    lu = splu((Lt @ L).tocsc())
    m, n = L.shape

    Z0, x30 = warm_start(prob)
    xi = np.concatenate([Z0.ravel(), x30.ravel()])
    rho = prm.rho
    u = split.prox(L @ xi + c, rho)
    w = np.zeros(m)

    best_value = _surrogate_objective(prob, Z0, x30)
    best_xi = xi.copy()
    history: List[float] = []
    converged = False
    r_rms = s_rms = np.inf
    it = 0
    for it in range(1, prm.max_iter + 1):
        xi = lu.solve(Lt @ (u - c - w))
        Lx = L @ xi
        h = RELAXATION * (Lx + c) + (1.0 - RELAXATION) * u
        u_old = u
        u = split.prox(h + w, rho)
        w += h - u
        r_rms = np.linalg.norm(Lx + c - u) / np.sqrt(m)
        s_rms = rho * np.linalg.norm(Lt @ (u - u_old)) / np.sqrt(n)

        value = _surrogate_objective(prob, *_unpack(prob, xi, split.n_z))
        if value < best_value:
            best_value = value
            best_xi = xi.copy()
        history.append(best_value)
        if progress is not None:
            progress(it, best_value)

        primal_scale = max(np.linalg.norm(Lx), np.linalg.norm(u), np.linalg.norm(c)) / np.sqrt(m)
        dual_scale = rho * np.linalg.norm(Lt @ w) / np.sqrt(n)
        eps_pri = prm.abs_tol + prm.rel_tol * primal_scale
        eps_dual = prm.abs_tol + prm.rel_tol * dual_scale
        if r_rms <= eps_pri and s_rms <= eps_dual:
            converged = True
            break
        if prm.adaptive_rho and it % RHO_UPDATE_EVERY == 0 and s_rms > 0 and dual_scale > 0:
            ratio = np.sqrt((r_rms / max(primal_scale, 1e-12)) / (s_rms / dual_scale))
            new_rho = float(np.clip(rho * ratio, RHO_MIN, RHO_MAX))
            if new_rho > 5.0 * rho or new_rho < 0.2 * rho:
                w *= rho / new_rho
                rho = new_rho

    if not converged:
        logger.warning("Decomposition did not converge in %d iterations "
                       "(primal %.3g, dual %.3g)", prm.max_iter, r_rms, s_rms)

    candidates = [_finalize(prob, *_unpack(prob, best_xi, split.n_z)),
                  _finalize(prob, *_unpack(prob, xi, split.n_z))]
    Z, x2, x3, objective = min(candidates, key=lambda cand: cand[3])
    x1 = np.where(prob.known_mask, prob.y_known - x2 - x3, 0.0)
    return Decomposition(x1=x1, x2=x2, x3=x3, Z=Z, objective=objective, iterations=it,
                         primal_residual=float(r_rms), dual_residual=float(s_rms),
                         converged=converged, rho=rho, objective_history=history)


def check_invariants(prob: SdProblem, dec: Decomposition) -> Dict[str, float]:
    """Violation norms of every structural property of a decomposition."""
    report = constraint_violations(prob, dec.x2, dec.x3, dec.Z)
    recon = np.where(prob.known_mask, dec.x1 + dec.x2 + dec.x3 - prob.y_known, 0.0)
    report["reconstruction"] = float(np.max(np.abs(recon)))
    report["residual_outside_known"] = float(np.max(np.abs(np.where(prob.known_mask, 0.0, dec.x1))))
    return report


def with_params(prob: SdProblem, **changes) -> SdProblem:
    """Copy of a problem with some SdParams fields replaced."""
    return replace(prob, params=replace(prob.params, **changes))


def save_decomposition(dec: Decomposition, prob: SdProblem, out_dir: Path,
                       stem: str = "decomposition") -> Dict[str, Path]:
    out_dir = Path(out_dir)
    h = prob.params_hash
    paths = {name: write_matrix(out_dir / f"{stem}_{name}.csv", getattr(dec, name), h)
             for name in ("x1", "x2", "x3", "Z")}
    paths["diagnostics"] = write_document(out_dir / f"{stem}_diagnostics.json", {
        "params_hash": h,
        **dec.diagnostics(),
        "params": asdict(prob.params),
        "invariants": check_invariants(prob, dec),
        "objective_history_tail": dec.objective_history[-10:],
    })
    return paths
