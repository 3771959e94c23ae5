"""Linear autoencoder laboratory.

Data ``x_k`` lie in an m-dimensional subspace L of R^n and are observed as
``x'_k = x_k + eps_k``. Two linear models are compared:

* reformulated (implicit-style): reconstruct ``x_k`` from ``x'_k``; its encoder
  basis is the leading eigenvectors of ``(X'X^T)^T (X'X'^T)^+ (X'X^T)``;
* standard: reconstruct ``x'_k`` from itself; its encoder is PCA of ``X'``.

Encoders are compared with the Procrustes deviation ``Q1 - Q2 R`` where ``R``
is the best orthogonal alignment (reflections allowed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericalDegeneracy

GAP_RTOL = 1e-6
PINV_RTOL = 1e-12
PROP1_TOL = 1e-8


@dataclass(frozen=True)
class LinearAEProblem:
    L_basis: np.ndarray  # n x m, orthonormal
    X: np.ndarray        # n x N, columns in span(L_basis)
    E: np.ndarray        # n x N noise

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.L_basis.shape[1]

    @property
    def X_prime(self) -> np.ndarray:
        return self.X + self.E

    def complement_projector(self) -> np.ndarray:
        return np.eye(self.n) - self.L_basis @ self.L_basis.T

    def with_noise(self, E) -> "LinearAEProblem":
        return LinearAEProblem(self.L_basis, self.X, np.asarray(E, dtype=np.float64))


@dataclass(frozen=True)
class EncoderSolution:
    Q: np.ndarray
    A: np.ndarray
    eigenvalues: np.ndarray


@dataclass(frozen=True)
class Deviation:
    D: np.ndarray
    R_align: np.ndarray

    @property
    def frobenius(self) -> float:
        return float(np.linalg.norm(self.D))


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _check_gaps(vals: np.ndarray, m: int, what: str) -> None:
    top = vals[:m]
    lam1 = abs(vals[0])
    if lam1 == 0:
        raise NumericalDegeneracy(f"{what}: all eigenvalues vanish")
    nxt = vals[m] if len(vals) > m else 0.0
    gaps = np.diff(np.append(top, nxt))
    if np.any(-gaps <= GAP_RTOL * lam1):
        raise NumericalDegeneracy(f"{what}: top-{m} eigenvalues not separated ({top})")


def top_eigvecs_sym(M: np.ndarray, m: int):
    """Leading ``m`` eigenpairs of a symmetric matrix, eigenvalues descending."""
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    return w[:m].copy(), _fix_signs(V[:, :m]), w


def make_problem(n: int, m: int, N: int, noise_scale: float, rng: np.random.Generator,
                 orthogonal_noise: bool = True, max_retries: int = 50) -> LinearAEProblem:
    """Random subspace data plus noise confined to the orthogonal complement.

    With ``orthogonal_noise=False`` the noise is unconstrained (control case).
    Instances whose top-m eigenvalues of XX^T are not separated by more than
    ``1e-6 * lambda_1`` are redrawn.
    """
    if not (0 < m < n < N):
        raise InvalidInput(f"need 0 < m < n < N, got m={m}, n={n}, N={N}")
    if noise_scale < 0:
        raise InvalidInput("noise_scale must be nonnegative")
    for _ in range(max_retries):
        L, _ = np.linalg.qr(rng.standard_normal((n, m)))
        X = L @ rng.standard_normal((m, N))
        G = rng.standard_normal((n, N))
        w = np.linalg.eigvalsh(X @ X.T)[::-1]
        try:
            _check_gaps(w, m, "make_problem")
        except NumericalDegeneracy:
            continue
        if orthogonal_noise:
            G = G - L @ (L.T @ G)
        return LinearAEProblem(L, X, noise_scale * G)
    raise NumericalDegeneracy(f"no well-separated instance after {max_retries} draws")


def cross_covariance(X: np.ndarray, X_prime: np.ndarray) -> np.ndarray:
    """``sum_k x_k x'_k^T`` (not symmetric in general)."""
    if X.shape != X_prime.shape:
        raise InvalidInput("X and X_prime must have equal shapes")
    return X @ X_prime.T


def top_eigvecs_cross(C: np.ndarray, m: int):
    """Leading ``m`` (right) eigenvectors of the cross-covariance, orthonormalised.

    Eigenvectors with nonzero eigenvalue lie in the range of ``C``; they are
    found by Rayleigh-Ritz on an orthonormal basis of that range.
    """
    U, s, _ = np.linalg.svd(C)
    rank = int(np.sum(s > PINV_RTOL * s[0])) if s[0] > 0 else 0
    if m > rank:
        raise InvalidInput(f"m={m} exceeds rank {rank} of the cross-covariance")
    Ur = U[:, :rank]
    w, Y = np.linalg.eig(Ur.T @ C @ Ur)
    order = np.argsort(-w.real)
    w = w.real[order]
    _check_gaps(np.append(w, np.zeros(max(0, C.shape[0] - rank))), m, "cross_covariance")
    V = Ur @ Y[:, order[:m]].real
    Qm, _ = np.linalg.qr(V)
    # QR may flip signs; restore column orientation before the sign convention
    Qm *= np.sign(np.sum(Qm * V, axis=0))
    return w[:m].copy(), _fix_signs(Qm)


def pseudo_inverse(M: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric PSD matrix via eigendecomposition."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInput("pseudo_inverse needs a square matrix")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M - M.T).max(initial=0.0) > 1e-10 * scale:
        raise InvalidInput("pseudo_inverse needs a symmetric matrix")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    lam_max = np.abs(w).max(initial=0.0)
    keep = np.abs(w) > rtol * lam_max
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (V * inv) @ V.T


def _rank(M: np.ndarray) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > 1e-9 * s[0])) if s.size and s[0] > 0 else 0


def reformulated_matrix(X: np.ndarray, X_prime: np.ndarray) -> np.ndarray:
    """``(X'X^T)^T (X'X'^T)^+ (X'X^T)``."""
    A = X_prime @ X.T
    return A.T @ pseudo_inverse(X_prime @ X_prime.T) @ A


def solve_reformulated(X: np.ndarray, X_prime: np.ndarray, m: int) -> EncoderSolution:
    """Closed-form optimum of ``min ||R B^T x'_k - x_k||^2`` with ``R^T R = I``.

    Returns ``Q = R*`` (decoder basis) and ``A = B*`` (applied to ``x'``).
    """
    if m > _rank(X_prime):
        raise InvalidInput(f"m={m} exceeds rank of X_prime")
    vals, R, _ = top_eigvecs_sym(reformulated_matrix(X, X_prime), m)
    B = pseudo_inverse(X_prime @ X_prime.T) @ (X_prime @ X.T) @ R
    return EncoderSolution(R, B, vals)


def reformulated_objective(R: np.ndarray, B: np.ndarray, X: np.ndarray, X_prime: np.ndarray) -> float:
    return float(np.sum((R @ (B.T @ X_prime) - X) ** 2))


def solve_standard(X_prime: np.ndarray, m: int) -> EncoderSolution:
    """PCA encoder: top-m eigenvectors of ``X'X'^T`` (encoder equals decoder)."""
    if m > _rank(X_prime):
        raise InvalidInput(f"m={m} exceeds rank of X_prime")
    vals, Q, _ = top_eigvecs_sym(X_prime @ X_prime.T, m)
    return EncoderSolution(Q, Q, vals)


def _check_orthonormal(Q, name, tol=1e-8):
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] > Q.shape[0]:
        raise InvalidInput(f"{name} must be a tall n x m matrix")
    if np.abs(Q.T @ Q - np.eye(Q.shape[1])).max() > tol:
        raise InvalidInput(f"{name} does not have orthonormal columns")
    return Q


def deviation(Q1: np.ndarray, Q2: np.ndarray) -> Deviation:
    """``Q1 - Q2 R`` with ``R = argmin_{R in O(m)} ||Q1 - Q2 R||_F``."""
    Q1 = _check_orthonormal(Q1, "Q1")
    Q2 = _check_orthonormal(Q2, "Q2")
    if Q1.shape != Q2.shape:
        raise InvalidInput("Q1 and Q2 shapes differ")
    U, _, Vt = np.linalg.svd(Q2.T @ Q1)
    R = U @ Vt
    return Deviation(Q1 - Q2 @ R, R)


@dataclass(frozen=True)
class Prop1Report:
    deviation_norm: float
    passed: bool


def clean_encoder(problem: LinearAEProblem):
    """Eigenpairs of the cross-covariance: the noise-free reference encoder."""
    return top_eigvecs_cross(cross_covariance(problem.X, problem.X_prime), problem.m)


def verify_prop1(problem: LinearAEProblem, tol: float = PROP1_TOL) -> Prop1Report:
    """Check that the reformulated encoder ignores noise orthogonal to L."""
    _, Q = clean_encoder(problem)
    R = solve_reformulated(problem.X, problem.X_prime, problem.m).Q
    dev = deviation(R, Q).frobenius
    return Prop1Report(dev, dev <= tol)


def prop2_derivative(Q: np.ndarray, Lambda, x_k: np.ndarray, i: int) -> np.ndarray:
    """Analytic derivative of the standard encoder's deviation w.r.t. ``eps_{k,i}``:
    ``(I - QQ^T) e_i x_k^T Q Lambda^+``, evaluated at zero noise."""
    Q = np.asarray(Q, dtype=np.float64)
    lam = np.asarray(Lambda, dtype=np.float64)
    if lam.ndim == 2:
        lam = np.diag(lam)
    n, m = Q.shape
    if not 0 <= i < n:
        raise InvalidInput(f"axis index {i} out of range")
    if np.any(lam <= 0):
        raise NumericalDegeneracy("eigenvalues must be positive")
    srt = np.sort(lam)
    if np.any(np.diff(srt) <= GAP_RTOL * srt[-1]):
        raise NumericalDegeneracy("repeated eigenvalues")
    e_i = np.zeros(n)
    e_i[i] = 1.0
    proj = e_i - Q @ Q[i]
    return np.outer(proj, (np.asarray(x_k, dtype=np.float64) @ Q) / lam)


def _standard_deviation_mp_matrix(Xm, m: int, Q_ref: np.ndarray):
    """Procrustes deviation of the PCA encoder of an mpmath data matrix."""
    import mpmath

    n = Xm.rows
    w, V = mpmath.eigsy(Xm * Xm.T)
    order = sorted(range(n), key=lambda j: -w[j])[:m]
    Qr = mpmath.matrix(Q_ref.tolist())
    Qh = mpmath.matrix(n, m)
    for c, j in enumerate(order):
        sgn = 1 if mpmath.fsum(V[r, j] * Qr[r, c] for r in range(n)) >= 0 else -1
        for r in range(n):
            Qh[r, c] = sgn * V[r, j]
    corr = Qr.T * Qh
    if any(abs(corr[c, c]) < 0.9 for c in range(m)):
        raise NumericalDegeneracy("eigenvector tracking failed under perturbation")
    U, _, Vt = mpmath.svd_r(corr)
    return Qh - Qr * (U * Vt)


def finite_diff_deviation(problem: LinearAEProblem, k: int, i: int, h: float = 1e-5,
                          Q_ref: np.ndarray | None = None, dps: int | None = None) -> np.ndarray:
    """Central difference of ``D(Q_hat(eps), Q)`` along ``eps_{k,i}``.

    The perturbation direction ``e_i`` is first projected onto the orthogonal
    complement of L so the perturbed problem keeps noise in L-perp. With
    ``dps`` set, the eigensolves run in mpmath at that many decimal digits;
    in float64 the eigensolver's rounding (about 1e-14 / h) swamps the
    O(h^2) truncation error once h drops below roughly 1e-4.
    """
    if h <= 0:
        raise InvalidInput("step must be positive")
    if Q_ref is None:
        _, Q_ref = clean_encoder(problem)
    direction = problem.complement_projector()[:, i]
    if dps is not None:
        import mpmath

        with mpmath.workdps(dps):
            Xp = problem.X_prime
            hm = mpmath.mpf(h)
            devs = []
            for sign in (1, -1):
                Xm = mpmath.matrix(Xp.tolist())
                for r in range(problem.n):
                    Xm[r, k] += sign * hm * mpmath.mpf(float(direction[r]))
                devs.append(_standard_deviation_mp_matrix(Xm, problem.m, Q_ref))
            diff = (devs[0] - devs[1]) / (2 * hm)
            return np.array([[float(diff[r, c]) for c in range(problem.m)] for r in range(problem.n)])
    out = []
    for sign in (1.0, -1.0):
        E = problem.E.copy()
        E[:, k] += sign * h * direction
        Qh = solve_standard(problem.X + E, problem.m).Q
        corr = np.sum(Qh * Q_ref, axis=0)
        if np.any(np.abs(corr) < 0.9):
            raise NumericalDegeneracy("eigenvector tracking failed under perturbation")
        Qh = Qh * np.sign(corr)
        out.append(deviation(Qh, Q_ref).D)
    return (out[0] - out[1]) / (2 * h)


def _polar(M: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M, full_matrices=False)
    return U @ Vt


def gd_oracle(X: np.ndarray, X_prime: np.ndarray, m: int, steps: int = 10_000,
              step_size: float | None = None, rng: np.random.Generator | None = None,
              init: tuple[np.ndarray, np.ndarray] | None = None, backtrack: bool = True):
    """Projected gradient descent on ``sum ||R B^T x'_k - x_k||^2``.

    ``R`` is projected back onto orthonormal matrices by its polar factor after
    each step. With ``backtrack`` a step is accepted only if it does not raise
    the objective (the step size halves until it does, and grows by 1.5 after
    each accepted step). Returns ``(best objective, R, B)``.
    """
    n = X.shape[0]
    if step_size is None:
        step_size = 0.5 / max(np.linalg.norm(X_prime, 2) ** 2, 1e-300)
    if step_size <= 0:
        raise InvalidInput("step_size must be positive")
    if init is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        R = _polar(rng.standard_normal((n, m)))
        B = rng.standard_normal((n, m)) / np.sqrt(n)
    else:
        R, B = (np.array(a, dtype=np.float64) for a in init)
        R = _polar(R)
    f = f0 = reformulated_objective(R, B, X, X_prime)
    best = (f, R, B)
    lr = step_size
    for _ in range(steps):
        res = R @ (B.T @ X_prime) - X
        gR = 2.0 * res @ (X_prime.T @ B)
        gB = 2.0 * X_prime @ (res.T @ R)
        while True:
            R_new = _polar(R - lr * gR)
            B_new = B - lr * gB
            f_new = reformulated_objective(R_new, B_new, X, X_prime)
            if not backtrack or (np.isfinite(f_new) and f_new <= f):
                break
            lr *= 0.5
            if lr < 1e-30 * step_size:
                return best
        if not np.isfinite(f_new) or f_new > 10 * f0 + 1e-300:
            raise NumericalDegeneracy("gradient descent diverged")
        R, B, f = R_new, B_new, f_new
        if f <= best[0]:
            best = (f, R, B)
        if backtrack:
            lr *= 1.5
    return best


def sensitivity_sweep(n: int, m: int, N: int, noise_scales, seeds):
    """Deviation of both encoders from the clean encoder across noise levels.

    Each seed fixes the data and a noise direction; the scale only stretches
    the noise. Rows: ``(noise_scale, seed, dev_reformulated, dev_standard)``.
    """
    rows = []
    for seed in seeds:
        base = make_problem(n, m, N, 1.0, np.random.default_rng(seed))
        for scale in noise_scales:
            prob = base.with_noise(scale * base.E)
            _, Q = clean_encoder(prob)
            R = solve_reformulated(prob.X, prob.X_prime, m).Q
            Qs = solve_standard(prob.X_prime, m).Q
            rows.append((float(scale), int(seed), deviation(R, Q).frobenius, deviation(Qs, Q).frobenius))
    return rows


def sweep_means(rows):
    """Per-scale means ``{scale: (mean dev_reformulated, mean dev_standard)}``."""
    out = {}
    for scale in sorted({r[0] for r in rows}):
        sel = np.array([r[2:] for r in rows if r[0] == scale])
        out[scale] = (float(sel[:, 0].mean()), float(sel[:, 1].mean()))
    return out


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["noise_scale", "seed", "dev_reformulated", "dev_standard"])
        for scale, seed, dr, ds in rows:
            w.writerow([repr(scale), seed, repr(dr), repr(ds)])
