"""Plant and string stability of the calibrated car-following model.

Linearizing the delayed dynamics about uniform flow gives the speed-to-speed
transfer function between consecutive vehicles

    G(z) = (k1 + k2 z) e^(-tau z) / (z^2 + (k1 th + k2) z + k1 e^(-tau z)),

whose characteristic denominator D(z) governs plant stability and whose
magnitude on the imaginary axis governs string stability: disturbances decay
along the platoon iff sup_{w>0} |G(jw)| <= 1 (the DC gain is exactly 1).

Rightmost characteristic roots are estimated by Chebyshev collocation of the
delay interval (eigenvalues of the discretized generator) and polished with
Newton's method on D(z); the collocation order is doubled until the estimate
settles.  A closed ring of N vehicles decomposes into independent modes with
coupling factor rho_k = e^(-2 pi i k / N), analyzed with the same machinery.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DiscretizationUnconverged
from .model import AccParams

__all__ = [
    "StabilityReport",
    "StabilityMap",
    "transfer_gain",
    "string_stability",
    "plant_stability",
    "ring_mode_stability",
    "stability_map",
    "report",
    "default_omega_max",
]

_RESIDUAL_TOL = 1e-8


def transfer_gain(params: AccParams, omega):
    """|G(jw)| for scalar or array `omega` (rad/s); exactly 1 at omega = 0."""
    k1, k2, th, tau, _ = params.as_tuple()
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    if np.any(w < 0.0):
        raise ValueError("omega must be >= 0")
    z = 1j * w
    ed = np.exp(-tau * z)
    num = (k1 + k2 * z) * ed
    den = z * z + (k1 * th + k2) * z + k1 * ed
    gain = np.abs(num) / np.abs(den)
    gain[w == 0.0] = 1.0
    return float(gain[0]) if scalar else gain


def default_omega_max(params: AccParams) -> float:
    return 20.0 * max(params.k1 * params.th + params.k2, 1.0)


def _golden_max(f, lo, hi, iters=80):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        if b - a < 1e-14 * max(1.0, abs(b)):
            break
    x = 0.5 * (a + b)
    return x, f(x)


def string_stability(params: AccParams, omega_max: float | None = None,
                     n_samples: int = 2000, tol: float = 1e-6,
                     ) -> tuple[bool, float, float]:
    """Classify string stability by sweeping |G(jw)| over (0, omega_max].

    Returns (stable, peak_gain, peak_omega).  The sweep is log-spaced and the
    sampled maximum is refined by golden-section search; the verdict is
    peak_gain <= 1 + tol.
    """
    if omega_max is None:
        omega_max = default_omega_max(params)
    if omega_max <= 0.0:
        raise ValueError("omega_max must be > 0")
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    w = np.logspace(math.log10(omega_max) - 6.0, math.log10(omega_max), n_samples)
    g = transfer_gain(params, w)
    i = int(np.argmax(g))
    lo = w[i - 1] if i > 0 else w[0] * 0.5
    hi = w[i + 1] if i < len(w) - 1 else w[-1]
    peak_omega, peak_gain = _golden_max(lambda x: transfer_gain(params, x), lo, hi)
    if g[i] > peak_gain:  # golden search is local; keep the better of the two
        peak_omega, peak_gain = float(w[i]), float(g[i])
    return bool(peak_gain <= 1.0 + tol), float(peak_gain), float(peak_omega)


def _cheb_diff(order: int, span: float) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev differentiation matrix on [-span, 0]; node 0 first."""
    n = order
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.hstack([2.0, np.ones(n - 1), 2.0]) * (-1.0) ** np.arange(n + 1)
    xm = np.tile(x, (n + 1, 1)).T
    dx = xm - xm.T
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return d * (2.0 / span), span * (x - 1.0) / 2.0


def _collocation_eigs(a_mat: np.ndarray, b_mat: np.ndarray, tau: float,
                      order: int) -> np.ndarray:
    """Spectrum of the collocated generator of x'(t) = A x(t) + B x(t - tau)."""
    m = a_mat.shape[0]
    d, _ = _cheb_diff(order, tau)
    n = order + 1
    big = np.zeros((m * n, m * n), dtype=complex)
    big[m:, :] = np.kron(d[1:, :], np.eye(m))
    big[:m, :m] = a_mat
    big[:m, -m:] += b_mat
    return np.linalg.eigvals(big)


def _newton_root(f, df, z0: complex, tol: float = 1e-13,
                 maxit: int = 60) -> complex:
    z = z0
    for _ in range(maxit):
        dfz = df(z)
        if dfz == 0.0:
            break
        step = f(z) / dfz
        z -= step
        if abs(step) < tol * max(1.0, abs(z)):
            break
    return z


def _rightmost(a_mat, b_mat, tau, char_f, char_df, order, n_polish=12,
               search_box=None):
    eigs = _collocation_eigs(a_mat, b_mat, tau, order)
    eigs = eigs[np.argsort(-eigs.real)]
    if search_box is not None:
        re_lo, re_hi, im_lo, im_hi = search_box
        inside = eigs[(eigs.real >= re_lo) & (eigs.real <= re_hi)
                      & (eigs.imag >= im_lo) & (eigs.imag <= im_hi)]
        eigs = np.concatenate([inside, eigs[:4]])
    best = None
    for z0 in eigs[:n_polish]:
        z = _newton_root(char_f, char_df, complex(z0))
        if abs(char_f(z)) < _RESIDUAL_TOL:
            if best is None or z.real > best.real:
                best = z
    return best


def _plant_matrices(params: AccParams):
    k1, k2, th, _, _ = params.as_tuple()
    a_mat = np.array([[0.0, -1.0], [0.0, -(k1 * th + k2)]], dtype=complex)
    b_mat = np.array([[0.0, 0.0], [k1, 0.0]], dtype=complex)
    return a_mat, b_mat


def plant_char(params: AccParams, z: complex) -> complex:
    k1, k2, th, tau, _ = params.as_tuple()
    return z * z + (k1 * th + k2) * z + k1 * cmath.exp(-tau * z)


def plant_stability(params: AccParams, search_box=None, order: int = 32,
                    root_tol: float = 1e-6, max_order: int = 512,
                    ) -> tuple[bool, complex]:
    """Rightmost characteristic root and the verdict Re(root) < 0.

    `search_box` optionally restricts candidate roots to (re_lo, re_hi,
    im_lo, im_hi) before polishing.  Raises DiscretizationUnconverged if the
    estimate still moves by more than `root_tol` at `max_order`.
    """
    k1, k2, th, tau, _ = params.as_tuple()
    if tau <= 0.0:
        roots = np.roots([1.0, k1 * th + k2, k1])
        z = roots[np.argmax(roots.real)]
        return bool(z.real < 0.0), complex(z)

    def f(z):
        return plant_char(params, z)

    def df(z):
        return 2.0 * z + (k1 * th + k2) - tau * k1 * cmath.exp(-tau * z)

    a_mat, b_mat = _plant_matrices(params)
    m = order
    z_prev = _rightmost(a_mat, b_mat, tau, f, df, m, search_box=search_box)
    while m <= max_order:
        m2 = int(math.ceil(1.5 * m))
        z_next = _rightmost(a_mat, b_mat, tau, f, df, m2, search_box=search_box)
        if (z_prev is not None and z_next is not None
                and min(abs(z_next - z_prev), abs(z_next - z_prev.conjugate()))
                <= root_tol):
            return bool(z_next.real < 0.0), complex(z_next)
        z_prev = z_next
        m *= 2
    raise DiscretizationUnconverged(
        f"rightmost root still moving at collocation order {max_order}")


def ring_mode_char(params: AccParams, z: complex, rho: complex) -> complex:
    k1, k2, th, tau, _ = params.as_tuple()
    ed = cmath.exp(-tau * z)
    return z * z + (k1 * th + k2) * z + k1 * ed - rho * (k1 + k2 * z) * ed


def ring_mode_stability(params: AccParams, n_vehicles: int, order: int = 32,
                        root_tol: float = 1e-6, max_order: int = 512,
                        ) -> list[complex]:
    """Rightmost root of each circulant mode k = 1..N-1 on an N-vehicle ring.

    Mode 0 (rigid translation) is excluded.  All real parts negative means
    the ring is asymptotically stable; any positive real part implies the
    open-road platoon cannot be string stable.
    """
    if n_vehicles < 2:
        raise ValueError("n_vehicles must be >= 2")
    k1, k2, th, tau, _ = params.as_tuple()
    roots: list[complex] = []
    for k in range(1, n_vehicles):
        rho = cmath.exp(-2j * math.pi * k / n_vehicles)
        if tau <= 0.0:
            rr = np.roots([1.0, k1 * th + k2 - k2 * rho, k1 - rho * k1])
            roots.append(complex(rr[np.argmax(rr.real)]))
            continue

        def f(z, rho=rho):
            return ring_mode_char(params, z, rho)

        def df(z, rho=rho):
            ed = cmath.exp(-tau * z)
            return (2.0 * z + (k1 * th + k2)
                    - tau * ed * (k1 - rho * (k1 + k2 * z))
                    - rho * k2 * ed)

        a_mat = np.array([[0.0, rho - 1.0], [0.0, -(k1 * th + k2)]],
                         dtype=complex)
        b_mat = np.array([[0.0, 0.0], [k1, k2 * rho]], dtype=complex)
        m = order
        z_prev = _rightmost(a_mat, b_mat, tau, f, df, m)
        while True:
            m2 = int(math.ceil(1.5 * m))
            z_next = _rightmost(a_mat, b_mat, tau, f, df, m2)
            if (z_prev is not None and z_next is not None
                    and abs(z_next - z_prev) <= root_tol):
                roots.append(complex(z_next))
                break
            if m > max_order:
                raise DiscretizationUnconverged(
                    f"ring mode {k}/{n_vehicles} unconverged at order {m}")
            z_prev = z_next
            m *= 2
    return roots


@dataclass(frozen=True)
class StabilityReport:
    """Combined verdicts for one parameter set."""

    plant_stable: bool
    rightmost_root: complex
    string_stable: bool
    peak_gain: float
    peak_omega: float

    def to_dict(self) -> dict:
        return {
            "plant_stable": self.plant_stable,
            "rightmost_root": {"re": self.rightmost_root.real,
                               "im": self.rightmost_root.imag},
            "string_stable": self.string_stable,
            "peak_gain": self.peak_gain,
            "peak_omega": self.peak_omega,
        }


def report(params: AccParams, omega_max: float | None = None,
           n_samples: int = 2000, tol: float = 1e-6) -> StabilityReport:
    stable, peak_gain, peak_omega = string_stability(params, omega_max,
                                                     n_samples, tol)
    plant_ok, root = plant_stability(params)
    return StabilityReport(plant_ok, root, stable, peak_gain, peak_omega)


VERDICT_STABLE = "stable"
VERDICT_STRING_UNSTABLE = "string_unstable"
VERDICT_PLANT_UNSTABLE = "plant_unstable"


@dataclass(frozen=True)
class StabilityMap:
    """Grid of verdicts over the (k1, k2) plane at fixed th, tau, eta."""

    k1_grid: np.ndarray
    k2_grid: np.ndarray
    verdicts: np.ndarray  # shape (len(k1_grid), len(k2_grid)), dtype object/str
    th: float
    tau: float
    eta: float

    def __post_init__(self):
        if self.verdicts.shape != (len(self.k1_grid), len(self.k2_grid)):
            raise ValueError("verdict grid shape mismatch")


def stability_map(k1_range: tuple[float, float], k2_range: tuple[float, float],
                  resolution: int, th: float, tau: float, eta: float,
                  n_samples: int = 2000, tol: float = 1e-6,
                  check_plant: bool = True) -> StabilityMap:
    """Classify every cell of a (k1, k2) grid.

    The gain sweep is vectorized over cells; plant stability is only checked
    where the sweep says string-unstable (elsewhere the delay margin is wide).
    For tau = 0 the plant is stable whenever the quadratic coefficients are
    positive, which holds for every k1 > 0 in the grid.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if min(k1_range) <= 0.0 or min(k2_range) < 0.0:
        raise ValueError("k1 range must be positive and k2 range non-negative")
    k1s = np.linspace(k1_range[0], k1_range[1], resolution)
    k2s = np.linspace(k2_range[0], k2_range[1], resolution)
    kk1, kk2 = np.meshgrid(k1s, k2s, indexing="ij")
    flat1 = kk1.ravel()
    flat2 = kk2.ravel()

    omega_max = 20.0 * max(float(np.max(flat1 * th + flat2)), 1.0)
    w = np.logspace(math.log10(omega_max) - 6.0, math.log10(omega_max), n_samples)
    peaks = np.empty(flat1.shape)
    chunk = max(1, int(2e6 // n_samples))
    for lo in range(0, len(flat1), chunk):
        hi = lo + chunk
        c1 = flat1[lo:hi, None]
        c2 = flat2[lo:hi, None]
        z = 1j * w[None, :]
        ed = np.exp(-tau * z)
        num = (c1 + c2 * z) * ed
        den = z * z + (c1 * th + c2) * z + c1 * ed
        peaks[lo:hi] = np.max(np.abs(num) / np.abs(den), axis=1)

    verdicts = np.where(peaks <= 1.0 + tol, VERDICT_STABLE,
                        VERDICT_STRING_UNSTABLE).astype(object)
    if check_plant and tau > 0.0:
        for i in np.nonzero(verdicts == VERDICT_STRING_UNSTABLE)[0]:
            p = AccParams(float(flat1[i]), float(flat2[i]), th, tau, eta)
            ok, _ = plant_stability(p)
            if not ok:
                verdicts[i] = VERDICT_PLANT_UNSTABLE
    return StabilityMap(k1s, k2s, verdicts.reshape(resolution, resolution),
                        th, tau, eta)
