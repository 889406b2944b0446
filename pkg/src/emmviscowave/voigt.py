"""Kelvin-Mandel algebra for symmetric rank-2 and rank-4 tensors.

A symmetric d x d matrix ``w`` is stored as a vector of length
``m = d(d+1)/2`` with the off-diagonal entries scaled by sqrt(2)::

    d = 2:  (w11, w22, sqrt(2) w12)
    d = 3:  (w11, w22, w33, sqrt(2) w23, sqrt(2) w13, sqrt(2) w12)

With this scaling the Euclidean norm of the vector is the Frobenius norm of
the matrix, and a fully symmetric stiffness tensor becomes a symmetric
m x m matrix whose matrix functions (exponential, inverse, ...) are exactly
the corresponding tensor functions.

All routines accept stacked inputs of shape ``(..., m, m)`` where it makes
sense, so per-element material arrays can be processed in one call.
"""
import numpy as np

SQRT2 = np.sqrt(2.0)

# (row, col) index pairs in Kelvin order
_PAIRS = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}
_DIMS = {3: 2, 6: 3}

SYM_TOL = 1e-14


class SingularSpectrumError(ValueError):
    """A matrix function hit a pole of the requested scalar function.

    The offending (shifted) eigenvalue is kept in :attr:`eigenvalue`.
    """

    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = eigenvalue


def voigt_dim(d):
    """Length of the Kelvin vector for spatial dimension ``d``."""
    if d not in _PAIRS:
        raise ValueError(f"unsupported spatial dimension {d}")
    return d * (d + 1) // 2


def _weights(d):
    return np.array([1.0 if i == j else SQRT2 for i, j in _PAIRS[d]])


def _check_symmetric(a, tol=SYM_TOL, what="matrix"):
    a = np.asarray(a)
    scale = max(np.max(np.abs(a), initial=0.0), np.finfo(float).tiny)
    asym = np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0)
    if asym > tol * scale:
        raise ValueError(f"{what} is not symmetric (relative asymmetry {asym / scale:.3e})")


def to_voigt(w):
    """Kelvin-Mandel vector of a symmetric ``(..., d, d)`` array."""
    w = np.asarray(w, dtype=float)
    d = w.shape[-1]
    if w.shape[-2] != d:
        raise ValueError(f"expected square matrices, got shape {w.shape}")
    _check_symmetric(w, what="strain")
    idx = _PAIRS.get(d)
    if idx is None:
        raise ValueError(f"unsupported spatial dimension {d}")
    out = np.stack([w[..., i, j] for i, j in idx], axis=-1)
    return out * _weights(d)


def from_voigt(vec):
    """Inverse of :func:`to_voigt`."""
    vec = np.asarray(vec, dtype=float)
    m = vec.shape[-1]
    if m not in _DIMS:
        raise ValueError(f"Kelvin vector length must be 3 or 6, got {m}")
    d = _DIMS[m]
    vec = vec / _weights(d)
    w = np.zeros(vec.shape[:-1] + (d, d))
    for k, (i, j) in enumerate(_PAIRS[d]):
        w[..., i, j] = vec[..., k]
        w[..., j, i] = vec[..., k]
    return w


def tensor_to_kelvin(C):
    """Kelvin matrix of a fully symmetric ``(d, d, d, d)`` tensor."""
    C = np.asarray(C, dtype=float)
    d = C.shape[0]
    pairs = _PAIRS[d]
    wts = _weights(d)
    m = len(pairs)
    K = np.empty((m, m))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            K[a, b] = wts[a] * wts[b] * C[i, j, k, l]
    return K


def kelvin_to_tensor(K):
    """Fully symmetric rank-4 tensor from its Kelvin matrix."""
    K = np.asarray(K, dtype=float)
    m = K.shape[0]
    d = _DIMS[m]
    pairs = _PAIRS[d]
    wts = _weights(d)
    C = np.zeros((d, d, d, d))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            val = K[a, b] / (wts[a] * wts[b])
            for p, q in {(i, j), (j, i)}:
                for r, s in {(k, l), (l, k)}:
                    C[p, q, r, s] = val
    return C


def check_stiffness(K, alpha0=None):
    """Validate a Kelvin stiffness matrix: symmetric and strongly convex.

    ``alpha0`` defaults to 1e-8 times the largest eigenvalue. Returns the
    smallest eigenvalue.
    """
    K = np.asarray(K, dtype=float)
    if K.shape[-1] not in _DIMS or K.shape[-2] != K.shape[-1]:
        raise ValueError(f"stiffness must be 3x3 or 6x6 in Kelvin form, got {K.shape}")
    _check_symmetric(K, what="stiffness")
    ev = np.linalg.eigvalsh(K)
    lo, hi = ev[..., 0].min(), ev[..., -1].max()
    if alpha0 is None:
        alpha0 = 1e-8 * hi
    if not hi > 0 or lo < alpha0:
        raise ValueError(f"stiffness is not strongly convex: smallest eigenvalue {lo:.6g} < {alpha0:.6g}")
    return float(lo)


def spd_function(K, f, *, t=None, lam=None, mu=None):
    """Matrix function of a symmetric Kelvin matrix via eigendecomposition.

    Parameters
    ----------
    K : array_like, shape (..., m, m)
        Symmetric matrix (or stack of them).
    f : str or callable
        ``"exp"``: exp(-t K); ``"shift_inv"``: (lam I + K)^-1 with real or
        complex ``lam``; ``"sq_shift_inv"``: (mu^2 I + K^2)^-1; ``"inv"``:
        K^-1. A callable is applied elementwise to the eigenvalues.

    Raises
    ------
    SingularSpectrumError
        If an inverse-type function meets a zero shifted eigenvalue.
    """
    K = np.asarray(K, dtype=float)
    _check_symmetric(K)
    ev, Q = np.linalg.eigh(K)
    scale = max(np.max(np.abs(ev), initial=0.0), 1.0)

    def _inverted(den, label):
        bad = np.abs(den) <= 1e-14 * scale
        if np.any(bad):
            raise SingularSpectrumError(f"{label} is singular", complex(np.asarray(den)[bad].flat[0]))
        return 1.0 / den

    if callable(f):
        fe = f(ev)
    elif f == "exp":
        if t is None:
            raise TypeError("exp needs t")
        fe = np.exp(-t * ev)
    elif f == "shift_inv":
        if lam is None:
            raise TypeError("shift_inv needs lam")
        fe = _inverted(lam + ev, "lam I + K")
    elif f == "sq_shift_inv":
        if mu is None:
            raise TypeError("sq_shift_inv needs mu")
        fe = _inverted(mu * mu + ev * ev, "mu^2 I + K^2")
    elif f == "inv":
        fe = _inverted(ev + 0.0, "K")
    else:
        raise ValueError(f"unknown matrix function tag {f!r}")
    return (Q * fe[..., None, :]) @ np.swapaxes(Q, -1, -2)


def check_elimination_identity(C, eta, lam):
    """Max-norm relative residual of the elimination identity

    lam (lam I + C/eta)^-1 C  ==  C - (C/eta) (lam I + C/eta)^-1 C
    """
    C = np.asarray(C, dtype=float)
    K = C / eta
    R = spd_function(K, "shift_inv", lam=lam)
    lhs = lam * R @ C
    rhs = C - K @ R @ C
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(C)))


def resolvent_split(K, mu):
    """Real and imaginary parts of (i mu I + K)^-1 for symmetric positive K.

    Returns ``(Q, R)`` with ``Q = K^-1 - mu^2 K^-1 (mu^2 I + K^2)^-1`` and
    ``R = -mu (mu^2 I + K^2)^-1``.
    """
    K = np.asarray(K, dtype=float)
    Kinv = spd_function(K, "inv")
    S = spd_function(K, "sq_shift_inv", mu=mu)
    Q = Kinv - mu * mu * Kinv @ S
    R = -mu * S
    return Q, R


def random_spd(rng, m=3, cond=10.0, scale=1.0):
    """Random symmetric positive definite m x m matrix with given condition number."""
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    ev = scale * np.exp(rng.uniform(0.0, np.log(cond), size=m))
    ev[0], ev[-1] = scale, scale * cond
    return (Q * ev) @ Q.T
