"""Far-field response model of a filter-and-sum linear microphone array.

Conventions: ``omega`` is normalized angular frequency in radians/sample
(``2*pi*f/fs``), ``theta`` is the arrival angle in radians measured from the
array axis, and every delay is in samples.  A filter bank ``x`` is an
``(N, L)`` real array; its flattened form stacks the rows, i.e.
``[x_0^T x_1^T ... x_{N-1}^T]``.

The per-point routines (``*_rows``) return values together with gradients
with respect to the flattened coefficient vector; those are the linearization
blocks used by the iterative designer.  The grid routines exploit the
separable structure ``B = sum_n exp(-j w D_n(theta)) X_n(w)`` and never build
the full steering matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AsymmetricGeometry, NearZeroResponse, ShapeMismatch, ZeroFilterEnergy

GD_GUARD = 1e-12
WNG_GUARD = 1e-300
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions (m, signed, along the array axis), ``fs`` (Hz) and ``c`` (m/s)."""

    positions: tuple
    sample_rate: float
    sound_speed: float = 340.0

    def __post_init__(self):
        pos = tuple(float(p) for p in np.atleast_1d(np.asarray(self.positions, dtype=float)))
        object.__setattr__(self, "positions", pos)
        if len(pos) < 2:
            raise ValueError("an array needs at least 2 microphones")
        if np.any(np.diff(pos) <= 0):
            raise ValueError("microphone positions must be strictly increasing")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not self.sound_speed > 0:
            raise ValueError("sound_speed must be positive")

    @classmethod
    def uniform(cls, n_mics: int, spacing: float, sample_rate: float, sound_speed: float = 340.0):
        """Uniform linear array centred on the origin."""
        pos = (np.arange(n_mics) - (n_mics - 1) / 2.0) * spacing
        return cls(tuple(pos), sample_rate, sound_speed)

    @property
    def n_mics(self) -> int:
        return len(self.positions)

    @property
    def d(self) -> np.ndarray:
        return np.asarray(self.positions)

    def is_symmetric(self, tol: float = SYMMETRY_TOL) -> bool:
        d = self.d
        return bool(np.all(np.abs(d[::-1] + d) <= tol))

    def delays(self, theta) -> np.ndarray:
        """Per-microphone propagation delay ``fs*d_n*cos(theta)/c`` in samples, shape ``theta.shape + (N,)``."""
        theta = np.asarray(theta, dtype=float)
        return self.sample_rate * np.cos(theta)[..., None] * self.d / self.sound_speed


class FilterBank:
    """The ``N x L`` real coefficient matrix of the beamformer."""

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim != 2:
            raise ShapeMismatch(f"coefficients must be 2-D (N, L), got shape {coeffs.shape}")
        self.coeffs = coeffs

    @property
    def n_mics(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_taps(self) -> int:
        return self.coeffs.shape[1]

    def flatten(self) -> np.ndarray:
        return self.coeffs.reshape(-1).copy()

    @classmethod
    def from_flat(cls, vec, n_mics: int, n_taps: int) -> "FilterBank":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (n_mics * n_taps,):
            raise ShapeMismatch(f"expected {n_mics * n_taps} coefficients, got {vec.shape}")
        return cls(vec.reshape(n_mics, n_taps))

    def __repr__(self):
        return f"FilterBank(N={self.n_mics}, L={self.n_taps})"


def as_coeffs(x, geom: ArrayGeometry | None = None) -> np.ndarray:
    c = x.coeffs if isinstance(x, FilterBank) else np.asarray(x, dtype=float)
    if c.ndim != 2:
        raise ShapeMismatch(f"coefficients must be 2-D (N, L), got shape {c.shape}")
    if geom is not None and c.shape[0] != geom.n_mics:
        raise ShapeMismatch(f"{c.shape[0]} filters for {geom.n_mics} microphones")
    return c


# --------------------------------------------------------------------------
# steering vectors

def phase_slopes(geom: ArrayGeometry, n_taps: int, theta) -> np.ndarray:
    """``k_nl = -fs*d_n*cos(theta)/c - l``, shape ``theta.shape + (N, L)``."""
    return -geom.delays(theta)[..., None] - np.arange(n_taps)


def steering_vector(geom: ArrayGeometry, n_taps: int, omega: float, theta: float) -> np.ndarray:
    """Stacked steering vector ``g(omega, theta)`` of length ``N*L``."""
    return np.exp(1j * omega * phase_slopes(geom, n_taps, theta)).reshape(-1)


def steering_matrix(geom: ArrayGeometry, n_taps: int, omegas, thetas) -> np.ndarray:
    """Rows ``g(omega_i, theta_i)^T`` for paired sample points, shape ``(P, N*L)``."""
    omegas, thetas = np.broadcast_arrays(np.asarray(omegas, float), np.asarray(thetas, float))
    omegas, thetas = omegas.reshape(-1), thetas.reshape(-1)
    k = phase_slopes(geom, n_taps, thetas)
    return np.exp(1j * omegas[:, None, None] * k).reshape(len(omegas), -1)


def wng_matrix(n_mics: int, n_taps: int, omega: float) -> np.ndarray:
    """``A(omega) = I_N kron a(omega)^T`` with ``a = [1, e^{-jw}, ..., e^{-jw(L-1)}]``."""
    a = np.exp(-1j * omega * np.arange(n_taps))
    return np.kron(np.eye(n_mics), a[None, :])


# --------------------------------------------------------------------------
# responses

def _filter_dft(coeffs: np.ndarray, omegas: np.ndarray):
    """Per-filter DFT ``X_n(w)`` and its omega derivative, both shaped ``omegas.shape + (N,)``."""
    ell = np.arange(coeffs.shape[1])
    e = np.exp(-1j * omegas[..., None] * ell)
    X = e @ coeffs.T
    dX = (e * (-1j * ell)) @ coeffs.T
    return X, dX


def response(geom: ArrayGeometry, x, omega: float, theta: float) -> complex:
    """Complex response ``B = g(omega, theta)^T x``."""
    c = as_coeffs(x, geom)
    return complex(steering_vector(geom, c.shape[1], omega, theta) @ c.reshape(-1))


def response_points(geom: ArrayGeometry, x, omegas, thetas, derivative: bool = False):
    """Response at paired points; with ``derivative`` also return ``dB/domega``."""
    c = as_coeffs(x, geom)
    omegas, thetas = np.broadcast_arrays(np.asarray(omegas, float), np.asarray(thetas, float))
    X, dX = _filter_dft(c, omegas)
    D = geom.delays(thetas)
    steer = np.exp(-1j * omegas[..., None] * D)
    B = np.sum(steer * X, axis=-1)
    if not derivative:
        return B
    dB = np.sum(steer * (dX - 1j * D * X), axis=-1)
    return B, dB


def response_grid(geom: ArrayGeometry, x, omegas, thetas, derivative: bool = False):
    """Response on the Cartesian grid ``omegas x thetas`` (shape ``(P, Q)``)."""
    c = as_coeffs(x, geom)
    omegas = np.asarray(omegas, float).reshape(-1)
    thetas = np.asarray(thetas, float).reshape(-1)
    X, dX = _filter_dft(c, omegas)                       # (P, N)
    D = geom.delays(thetas)                              # (Q, N)
    B = np.empty((len(omegas), len(thetas)), complex)
    dB = np.empty_like(B) if derivative else None
    step = max(1, 2_000_000 // max(1, len(thetas) * c.shape[0]))
    for s in range(0, len(omegas), step):
        w = omegas[s:s + step, None, None]
        steer = np.exp(-1j * w * D[None])                # (p, Q, N)
        Xs = X[s:s + step, None, :]
        B[s:s + step] = np.sum(steer * Xs, axis=-1)
        if derivative:
            dB[s:s + step] = np.sum(steer * (dX[s:s + step, None, :] - 1j * D[None] * Xs), axis=-1)
    return (B, dB) if derivative else B


def _gd_from(B, dB, scale2):
    den = np.abs(B) ** 2
    ok = den >= GD_GUARD * scale2
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(ok, -np.imag(np.conj(B) * dB) / np.where(ok, den, 1.0), np.nan)
    return tau, ok


def group_delay(geom: ArrayGeometry, x, omega: float, theta: float) -> float:
    """Group delay ``-(a1*a2 + b1*b2)/(a1^2 + b1^2)`` in samples.

    Raises NearZeroResponse when ``|B|^2`` is below ``1e-12 * ||x||^2``.
    """
    c = as_coeffs(x, geom)
    k = phase_slopes(geom, c.shape[1], theta)
    cs, sn = np.cos(omega * k), np.sin(omega * k)
    a1, a2 = np.sum(c * cs), np.sum(c * k * cs)
    b1, b2 = np.sum(c * sn), np.sum(c * k * sn)
    den = a1 * a1 + b1 * b1
    if den < GD_GUARD * np.sum(c * c):
        raise NearZeroResponse(f"|B|^2={den:.3g} at omega={omega:.6g}, theta={theta:.6g}")
    return float(-(a1 * a2 + b1 * b2) / den)


def group_delay_points(geom: ArrayGeometry, x, omegas, thetas):
    """Vectorized group delay; returns ``(tau, ok)`` with NaN where the guard fails."""
    c = as_coeffs(x, geom)
    B, dB = response_points(geom, c, omegas, thetas, derivative=True)
    return _gd_from(B, dB, np.sum(c * c))


def group_delay_grid(geom: ArrayGeometry, x, omegas, thetas):
    c = as_coeffs(x, geom)
    B, dB = response_grid(geom, c, omegas, thetas, derivative=True)
    return _gd_from(B, dB, np.sum(c * c))


# --------------------------------------------------------------------------
# white noise gain

def white_noise_gain(geom: ArrayGeometry, x, omega: float, theta_d: float, form: str = "dft") -> float:
    """``|B(omega, theta_d)|^2 / sum_n |X_n(omega)|^2``.

    ``form="matrix"`` evaluates the denominator as ``||A(omega) x||^2`` instead of
    through the per-filter DFTs; both must agree.
    """
    c = as_coeffs(x, geom)
    if form == "dft":
        X, _ = _filter_dft(c, np.asarray(omega, float))
        den = float(np.sum(np.abs(X) ** 2))
        num = abs(response(geom, c, omega, theta_d)) ** 2
    elif form == "matrix":
        den = float(np.linalg.norm(wng_matrix(*c.shape, omega) @ c.reshape(-1)) ** 2)
        num = abs(steering_vector(geom, c.shape[1], omega, theta_d) @ c.reshape(-1)) ** 2
    else:
        raise ValueError(f"unknown form {form!r}")
    if den <= WNG_GUARD:
        raise ZeroFilterEnergy(f"all filters are null at omega={omega:.6g}")
    return num / den


def wng_curve(geom: ArrayGeometry, x, omegas, theta_d: float) -> np.ndarray:
    c = as_coeffs(x, geom)
    omegas = np.asarray(omegas, float)
    X, _ = _filter_dft(c, omegas)
    den = np.sum(np.abs(X) ** 2, axis=-1)
    if np.any(den <= WNG_GUARD):
        raise ZeroFilterEnergy("all filters are null at some requested frequency")
    B = response_points(geom, c, omegas, theta_d)
    return np.abs(B) ** 2 / den


# --------------------------------------------------------------------------
# errors and analytic gradients (rows for the linearized problems)

def _point_arrays(geom, c, omegas, thetas):
    omegas, thetas = np.broadcast_arrays(np.atleast_1d(np.asarray(omegas, float)),
                                         np.atleast_1d(np.asarray(thetas, float)))
    omegas, thetas = omegas.reshape(-1), thetas.reshape(-1)
    k = phase_slopes(geom, c.shape[1], thetas).reshape(len(thetas), -1)
    ph = omegas[:, None] * k
    return k, np.cos(ph), np.sin(ph)


def group_delay_rows(geom: ArrayGeometry, x, omegas, thetas):
    """Group delay and its gradient at paired points: ``(tau (P,), grad (P, N*L))``.

    Quotient rule on ``-(a1*a2 + b1*b2)/(a1^2 + b1^2)``; every ``a``/``b`` term is
    linear in ``x`` so their gradients are the cosine/sine rows.
    """
    c = as_coeffs(x, geom)
    xf = c.reshape(-1)
    k, cs, sn = _point_arrays(geom, c, omegas, thetas)
    kc, ks = k * cs, k * sn
    a1, a2, b1, b2 = cs @ xf, kc @ xf, sn @ xf, ks @ xf
    num = a1 * a2 + b1 * b2
    den = a1 * a1 + b1 * b1
    bad = den < GD_GUARD * (xf @ xf)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NearZeroResponse(f"|B|^2={den[i]:.3g} at sample {i}")
    gnum = a2[:, None] * cs + a1[:, None] * kc + b2[:, None] * sn + b1[:, None] * ks
    gden = 2.0 * (a1[:, None] * cs + b1[:, None] * sn)
    tau = -num / den
    grad = -(gnum * den[:, None] - num[:, None] * gden) / (den * den)[:, None]
    return tau, grad


def group_delay_gradient(geom: ArrayGeometry, x, omega: float, theta: float) -> np.ndarray:
    return group_delay_rows(geom, x, omega, theta)[1][0]


def magsq_rows(geom: ArrayGeometry, x, omegas, thetas, bd_magsq=1.0):
    """``e_r = |B|^2 - |B_d|^2`` and its (exact) gradient at paired points."""
    c = as_coeffs(x, geom)
    xf = c.reshape(-1)
    _, cs, sn = _point_arrays(geom, c, omegas, thetas)
    re, im = cs @ xf, sn @ xf
    e = re * re + im * im - bd_magsq
    grad = 2.0 * (re[:, None] * cs + im[:, None] * sn)
    return e, grad


def magsq_error_gradient(geom: ArrayGeometry, x, omega: float, theta: float, bd_magsq: float = 1.0):
    e, g = magsq_rows(geom, x, omega, theta, bd_magsq)
    return float(e[0]), g[0]


def wng_rows(geom: ArrayGeometry, x, omegas, theta_d: float, floor=1.0):
    """``e_w = G_w - floor`` and its gradient at each frequency in ``omegas``."""
    c = as_coeffs(x, geom)
    xf = c.reshape(-1)
    omegas = np.atleast_1d(np.asarray(omegas, float)).reshape(-1)
    _, cs, sn = _point_arrays(geom, c, omegas, theta_d)
    re, im = cs @ xf, sn @ xf
    num = re * re + im * im
    gnum = 2.0 * (re[:, None] * cs + im[:, None] * sn)
    L = c.shape[1]
    e = np.exp(-1j * omegas[:, None] * np.arange(L))          # (P, L)
    X = e @ c.T                                               # (P, N)
    den = np.sum(np.abs(X) ** 2, axis=1)
    if np.any(den <= WNG_GUARD):
        raise ZeroFilterEnergy("all filters are null at some requested frequency")
    # d|X_n|^2 / dx_{n,l} = 2 Re(conj(X_n) e^{-j w l})
    gden = 2.0 * np.real(np.conj(X)[:, :, None] * e[:, None, :]).reshape(len(omegas), -1)
    gw = num / den
    grad = (gnum * den[:, None] - num[:, None] * gden) / (den * den)[:, None]
    return gw - np.asarray(floor, float), grad


def wng_error_gradient(geom: ArrayGeometry, x, omega: float, theta_d: float, floor: float = 1.0):
    e, g = wng_rows(geom, x, omega, theta_d, floor)
    return float(e[0]), g[0]


# --------------------------------------------------------------------------
# reduced parameterizations

def _require_symmetric(geom):
    if not geom.is_symmetric():
        raise AsymmetricGeometry("reduced parameterization needs d[N-1-n] == -d[n]")


def symmetric_expansion(n_mics: int, n_taps: int) -> np.ndarray:
    """0/1 matrix ``E`` with ``x = E @ xr`` enforcing ``x[n, l] == x[N-1-n, l]``.

    Reduced variables are rows ``n = 0 .. ceil(N/2)-1`` of the bank; with odd
    ``N`` the centre microphone is its own mirror image.
    """
    half = (n_mics + 1) // 2
    E = np.zeros((n_mics * n_taps, half * n_taps))
    for n in range(half):
        for l in range(n_taps):
            E[n * n_taps + l, n * n_taps + l] = 1.0
            E[(n_mics - 1 - n) * n_taps + l, n * n_taps + l] = 1.0
    return E


def _linear_phase_pairs(n_mics: int, n_taps: int):
    pairs = []
    for n in range(n_mics // 2):
        for l in range(n_taps):
            pairs.append(((n, l), (n_mics - 1 - n, n_taps - 1 - l)))
    if n_mics % 2:
        m = n_mics // 2
        for l in range((n_taps + 1) // 2):
            pairs.append(((m, l), (m, n_taps - 1 - l)))
    return pairs


def linear_phase_expansion(n_mics: int, n_taps: int) -> np.ndarray:
    """0/1 matrix ``E`` with ``x = E @ xr`` enforcing ``x[n, l] == x[N-1-n, L-1-l]``."""
    pairs = _linear_phase_pairs(n_mics, n_taps)
    E = np.zeros((n_mics * n_taps, len(pairs)))
    for j, ((n, l), (n2, l2)) in enumerate(pairs):
        E[n * n_taps + l, j] = 1.0
        E[n2 * n_taps + l2, j] = 1.0
    return E


def reduce_coeffs(E: np.ndarray, x) -> np.ndarray:
    """Representative reduced coefficients of a bank that already satisfies ``E``'s pairing."""
    xf = x.flatten() if isinstance(x, FilterBank) else np.asarray(x, float).reshape(-1)
    return (E.T @ xf) / E.sum(axis=0)


def reduced_steering_symmetric(geom: ArrayGeometry, n_taps: int, omega: float, theta: float) -> np.ndarray:
    """``2 cos(w fs d_n cos(theta)/c) exp(-j w l)`` for mirrored microphone pairs.

    The centre microphone of an odd array keeps weight 1.
    """
    _require_symmetric(geom)
    N = geom.n_mics
    half = (N + 1) // 2
    D = geom.delays(theta)[:half]
    w = np.full(half, 2.0)
    if N % 2:
        w[-1] = 1.0
    amp = w * np.cos(omega * D)
    return (amp[:, None] * np.exp(-1j * omega * np.arange(n_taps))[None, :]).reshape(-1)


def reduced_steering_linear_phase(geom: ArrayGeometry, n_taps: int, omega: float, theta: float) -> np.ndarray:
    """``2 cos[w(fs d_n cos(theta)/c - (L-1)/2 + l)] exp(-j w (L-1)/2)`` per coefficient pair.

    Ordering follows :func:`linear_phase_expansion`; a self-paired centre tap has weight 1.
    """
    _require_symmetric(geom)
    D = geom.delays(theta)
    mid = (n_taps - 1) / 2.0
    out = []
    for (n, l), (n2, l2) in _linear_phase_pairs(geom.n_mics, n_taps):
        w = 1.0 if (n, l) == (n2, l2) else 2.0
        out.append(w * np.cos(omega * (D[n] - mid + l)))
    return np.asarray(out) * np.exp(-1j * omega * mid)
