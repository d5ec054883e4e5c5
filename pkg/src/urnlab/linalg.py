"""Dense matrix kernels: exponential, real powers, Lyapunov solves,
two-sided eigensystems, and the exp-sandwich quadrature.

Decompositions (Schur, eig, svd) come from scipy; everything assembled on
top of them lives here so tolerances and error behaviour are under our
control.
"""

import dataclasses

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, NonConvergenceError, SpectrumError

# degree-13 Pade numerator coefficients for expm, largest first norm bound
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def _check_square(A, name):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return A


def check_sym_psd(G, name="G", tol=1e-10):
    """Validate symmetry and positive semidefiniteness; returns symmetrized G."""
    G = _check_square(G, name)
    if np.iscomplexobj(G):
        raise InvalidArgumentError(f"{name} must be real")
    G = G.astype(float)
    gnorm = np.linalg.norm(G, "fro")
    if np.linalg.norm(G - G.T, "fro") > tol * (1.0 + gnorm):
        raise InvalidArgumentError(f"{name} must be symmetric")
    Gs = 0.5 * (G + G.T)
    ev = np.linalg.eigvalsh(Gs)
    if ev[0] < -tol * (1.0 + max(ev[-1], 0.0)):
        raise InvalidArgumentError(
            f"{name} must be positive semidefinite, min eigenvalue {ev[0]:.3e}")
    return Gs


def mat_exp(A):
    """Matrix exponential by scaling and squaring with degree-13 Pade."""
    A = _check_square(A, "A")
    dtype = complex if np.iscomplexobj(A) else float
    A = A.astype(dtype)
    d = A.shape[0]
    eye = np.eye(d, dtype=dtype)
    nrm = np.linalg.norm(A, 1)
    s = 0
    if nrm > _THETA13:
        s = int(np.ceil(np.log2(nrm / _THETA13)))
        A = A / (2.0 ** s)
    b = _PADE13
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def mat_power(A, t):
    """A^t = exp(A log t) for real t > 0."""
    A = _check_square(A, "A")
    t = float(t)
    if t <= 0.0:
        raise InvalidArgumentError(f"matrix power needs t > 0, got {t}")
    return mat_exp(A * np.log(t))


def solve_lyapunov(B, G, residual_tol=1e-10):
    """Solve B^T X + X B = G for symmetric PSD G.

    Requires every eigenvalue of B to have positive real part, so that
    X = integral_0^inf exp(-B^T u) G exp(-B u) du exists and is the unique
    solution. Bartels-Stewart on the complex Schur form of B^T.
    """
    B = _check_square(B, "B")
    G = _check_square(G, "G")
    if B.shape != G.shape:
        raise InvalidArgumentError(f"shape mismatch: B {B.shape} vs G {G.shape}")
    if np.iscomplexobj(B) or np.iscomplexobj(G):
        raise InvalidArgumentError("solve_lyapunov expects real matrices")
    B = B.astype(float)
    G = G.astype(float)
    gnorm = np.linalg.norm(G, "fro")
    Gs = check_sym_psd(G, "G")

    w = np.linalg.eigvals(B)
    i_min = int(np.argmin(w.real))
    if w[i_min].real <= 0.0:
        raise SpectrumError(
            f"eigenvalue {w[i_min]:.6g} of B has non-positive real part; "
            "stationary solution does not exist", eigenvalue=complex(w[i_min]))

    # B^T X + X B = G with real B is A X + X A^H = G for A = B^T
    T, Q = scipy.linalg.schur(B.T, output="complex")
    C = Q.conj().T @ Gs.astype(complex) @ Q
    d = B.shape[0]
    Y = np.zeros((d, d), dtype=complex)
    for i in range(d - 1, -1, -1):
        for j in range(d - 1, -1, -1):
            rhs = C[i, j]
            if i < d - 1:
                rhs -= T[i, i + 1:] @ Y[i + 1:, j]
            if j < d - 1:
                rhs -= Y[i, j + 1:] @ T[j, j + 1:].conj()
            Y[i, j] = rhs / (T[i, i] + T[j, j].conjugate())
    X = Q @ Y @ Q.conj().T
    X = 0.5 * (X + X.conj().T)
    X = X.real

    resid = np.linalg.norm(B.T @ X + X @ B - Gs, "fro")
    if resid > residual_tol * (1.0 + gnorm):
        raise NonConvergenceError(
            f"Lyapunov residual {resid:.3e} exceeds tolerance", residual=resid)
    return X


@dataclasses.dataclass(frozen=True)
class ComplexSpectrum:
    """Two-sided eigensystem of a square matrix.

    ``A @ right[:, i] = values[i] * right[:, i]`` and
    ``left[i, :] @ A = values[i] * left[i, :]``. Values are sorted by
    descending real part, ties by descending imaginary part. Pairs whose
    eigenvalue is simple (relative gap 1e-7) are scaled so that
    ``left[i] @ right[:, i] = 1``. ``residual`` is the worst normalized
    defect over all reported pairs.
    """

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    residual: float


def eigen_left_right(A, residual_tol=1e-6):
    """Eigenvalues with matched right columns and left rows."""
    A = _check_square(A, "A")
    try:
        w, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NonConvergenceError(f"eigendecomposition failed: {exc}") from exc
    order = np.lexsort((-w.imag, -w.real))
    w = w[order]
    vr = vr[:, order]
    left = vl[:, order].conj().T

    scale = max(1.0, float(np.max(np.abs(w))))
    for i in range(w.size):
        gaps = np.abs(w - w[i])
        gaps[i] = np.inf
        if gaps.min() > 1e-7 * scale:
            dot = left[i] @ vr[:, i]
            if abs(dot) > 1e-12:
                left[i] = left[i] / dot

    resid = 0.0
    anorm = max(1.0, np.linalg.norm(A, 1))
    for i in range(w.size):
        dr = np.linalg.norm(A @ vr[:, i] - w[i] * vr[:, i])
        dl = np.linalg.norm(left[i] @ A - w[i] * left[i])
        resid = max(resid,
                    dr / (anorm * np.linalg.norm(vr[:, i])),
                    dl / (anorm * np.linalg.norm(left[i])))
    if resid > residual_tol:
        raise NonConvergenceError(
            f"eigenpair residual {resid:.3e} exceeds {residual_tol:.1e}",
            residual=resid)
    return ComplexSpectrum(values=w, right=vr, left=left, residual=resid)


def numerical_rank(A, tol=1e-8):
    """Number of singular values above tol * sigma_max."""
    A = np.asarray(A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def integral_exp_sandwich(B, G, upper, tol=1e-10, max_depth=30, strict=False,
                          max_nodes=200000):
    """integral_0^upper exp(-B^T u) G exp(-B u) du, adaptive Simpson.

    Entrywise absolute tolerance. Recursion past max_depth keeps the
    Richardson-corrected local estimate unless ``strict`` is set, in which
    case an unmet tolerance raises instead. Exceeding the evaluation budget
    raises in either mode (the alternative is an unbounded subdivision tree
    when the integrand outruns the tolerance).
    """
    B = _check_square(B, "B").astype(float)
    G = _check_square(G, "G").astype(float)
    upper = float(upper)
    if upper <= 0.0:
        raise InvalidArgumentError(f"upper limit must be positive, got {upper}")
    nodes = [3]

    def f(u):
        E = mat_exp(-B * u)
        with np.errstate(over="ignore", invalid="ignore"):
            out = E.T @ G @ E
        if not np.all(np.isfinite(out)):
            raise NonConvergenceError(f"integrand overflows at u = {u:g}",
                                      residual=float("inf"))
        return out

    def simpson(fa, fm, fb, h):
        return (h / 6.0) * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, S, tol, depth):
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = f(lm)
        frm = f(rm)
        nodes[0] += 2
        Sl = simpson(fa, flm, fm, m - a)
        Sr = simpson(fm, frm, fb, b - m)
        S2 = Sl + Sr
        err = np.max(np.abs(S2 - S))
        if err <= 15.0 * tol:
            return S2 + (S2 - S) / 15.0
        if depth >= max_depth or nodes[0] > max_nodes:
            if strict or nodes[0] > max_nodes:
                raise NonConvergenceError(
                    f"quadrature tolerance not reached on [{a:g}, {b:g}] "
                    f"(local error {err / 15.0:.3g})", residual=err / 15.0)
            return S2 + (S2 - S) / 15.0
        half = 0.5 * tol
        return (recurse(a, m, fa, flm, fm, Sl, half, depth + 1)
                + recurse(m, b, fm, frm, fb, Sr, half, depth + 1))

    fa = f(0.0)
    fm = f(0.5 * upper)
    fb = f(upper)
    S = simpson(fa, fm, fb, upper)
    return recurse(0.0, upper, fa, fm, fb, S, tol, 0)
