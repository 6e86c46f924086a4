"""Spectral representation of u(t,x,y) on a periodic box [-L/2, L/2)^d x [0, 2pi).

Coefficients follow the convention

    u(x, y) = sum_{k,n} c[k, n] * exp(i (xi_k . x + n y)),    xi_k = 2 pi k / L,

with k and n in FFT-standard wrapped order.  The x grid starts at -L/2 and
the y grid at 0; the (-1)^k phase factors below absorb the x offset so that
``c`` always stores true plane-wave amplitudes.

All physical-space integrals use the rectangle rule, which is spectrally
accurate for smooth periodic fields.  The induced Parseval identity is

    ||u||_{L^2}^2 = (L^d * 2 pi) * sum |c|^2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import BinaryIO, Callable, Tuple, Union

import numpy as np
from scipy import fft as sfft
from scipy.integrate import quad

TWO_PI = 2.0 * np.pi

# floor for |u| before fractional powers, so log/pow never sees an exact zero
_ABS_FLOOR = 1e-300


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Discretization of [-L/2, L/2)^d x [0, 2pi): d in {1, 2}, Nx and Ny powers of two."""

    d: int
    L: float
    Nx: int
    Ny: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        for name, N in (("Nx", self.Nx), ("Ny", self.Ny)):
            if N < 4 or not _is_pow2(N):
                raise ValueError(f"{name} must be a power of two >= 4, got {N}")

    @property
    def dx(self) -> float:
        return self.L / self.Nx

    @property
    def dy(self) -> float:
        return TWO_PI / self.Ny

    @property
    def cell(self) -> float:
        """x-cell volume (L/Nx)^d."""
        return self.dx ** self.d

    @property
    def weight(self) -> float:
        """Full quadrature weight (L/Nx)^d * (2 pi / Ny)."""
        return self.cell * self.dy

    @property
    def measure(self) -> float:
        """Total domain measure L^d * 2 pi (Parseval constant)."""
        return (self.L ** self.d) * TWO_PI

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.Nx,) * self.d + (self.Ny,)

    @property
    def ntot(self) -> int:
        return self.Nx ** self.d * self.Ny

    def x_axis(self) -> np.ndarray:
        return -self.L / 2 + self.dx * np.arange(self.Nx)

    def y_axis(self) -> np.ndarray:
        return self.dy * np.arange(self.Ny)

    def xi_axis(self) -> np.ndarray:
        """Wrapped-order x frequencies 2 pi k / L."""
        return TWO_PI * sfft.fftfreq(self.Nx, d=1.0 / self.Nx) / self.L

    def n_axis(self) -> np.ndarray:
        """Wrapped-order integer y frequencies."""
        return sfft.fftfreq(self.Ny, d=1.0 / self.Ny)

    def xi_grids(self) -> Tuple[np.ndarray, ...]:
        """Per-x-axis frequency arrays broadcastable against the coefficient shape."""
        xi = self.xi_axis()
        if self.d == 1:
            return (xi[:, None],)
        return (xi[:, None, None], xi[None, :, None])

    def n_grid(self) -> np.ndarray:
        n = self.n_axis()
        return n[(None,) * self.d + (slice(None),)]

    def xi_sq(self) -> np.ndarray:
        out = np.zeros(self.shape[:-1] + (1,))
        for g in self.xi_grids():
            out = out + g ** 2
        return out

    def laplace_symbol(self) -> np.ndarray:
        """|xi|^2 + n^2 on the coefficient grid."""
        return self.xi_sq() + self.n_grid() ** 2

    def x_phase(self) -> np.ndarray:
        """(-1)^k factors absorbing the x0 = -L/2 grid offset (one per x axis)."""
        p = np.where(np.arange(self.Nx) % 2 == 0, 1.0, -1.0)
        if self.d == 1:
            return p[:, None]
        return p[:, None, None] * p[None, :, None]


class SpectralField:
    """Immutable field snapshot: grid + plane-wave coefficient array + time tag."""

    __slots__ = ("grid", "coefficients", "time_tag", "_samples")

    def __init__(self, grid: Grid, coefficients: np.ndarray, time_tag: float = 0.0):
        coefficients = np.asarray(coefficients, dtype=np.complex128)
        if coefficients.shape != grid.shape:
            raise ValueError(
                f"coefficient shape {coefficients.shape} does not match grid {grid.shape}"
            )
        self.grid = grid
        self.coefficients = coefficients
        self.time_tag = float(time_tag)
        self._samples = None

    def samples(self) -> np.ndarray:
        """Physical-space values on the grid (lazily computed, then cached)."""
        if self._samples is None:
            g = self.grid
            c = self.coefficients * g.x_phase()
            self._samples = sfft.ifftn(c, workers=-1) * g.ntot
        return self._samples

    @classmethod
    def from_samples(cls, grid: Grid, samples: np.ndarray, time_tag: float = 0.0
                     ) -> "SpectralField":
        samples = np.asarray(samples, dtype=np.complex128)
        if samples.shape != grid.shape:
            raise ValueError(
                f"sample shape {samples.shape} does not match grid {grid.shape}"
            )
        c = sfft.fftn(samples, workers=-1) / grid.ntot * grid.x_phase()
        out = cls(grid, c, time_tag)
        out._samples = samples
        return out


def from_profile(grid: Grid,
                 sampler: Callable[..., Union[complex, np.ndarray]]) -> SpectralField:
    """Sample u0(x, y) (or u0(x1, x2, y) for d=2) on the grid and transform."""
    axes = [grid.x_axis()] * grid.d + [grid.y_axis()]
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = np.asarray(sampler(*mesh), dtype=np.complex128)
    vals = np.broadcast_to(vals, grid.shape).copy()
    if not np.all(np.isfinite(vals.real)) or not np.all(np.isfinite(vals.imag)):
        raise ValueError("sampler produced non-finite values on the grid")
    return SpectralField.from_samples(grid, vals, time_tag=0.0)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def lebesgue_norm(fld: SpectralField, q: float) -> float:
    """L^q norm over the full box; q = inf gives the sup of |u|."""
    a = np.abs(fld.samples())
    if q == np.inf:
        return float(a.max())
    if q < 1:
        raise ValueError(f"q must be >= 1 or inf, got {q}")
    if q == 2.0:
        return float(np.sqrt(np.sum(a * a) * fld.grid.weight))
    return float((np.sum(a ** q) * fld.grid.weight) ** (1.0 / q))


def sobolev_h1(fld: SpectralField) -> float:
    """Inhomogeneous H^1 norm via the multiplier 1 + |xi|^2 + n^2."""
    g = fld.grid
    w = 1.0 + g.laplace_symbol()
    return float(np.sqrt(g.measure * np.sum(w * np.abs(fld.coefficients) ** 2)))


def hs_x_hgamma_y(fld: SpectralField, s: float, gamma: float) -> float:
    """Anisotropic norm with product multiplier <xi>^s <n>^gamma."""
    g = fld.grid
    w = (1.0 + g.xi_sq()) ** s * (1.0 + g.n_grid() ** 2) ** gamma
    return float(np.sqrt(g.measure * np.sum(w * np.abs(fld.coefficients) ** 2)))


def mixed_norm(fld: SpectralField, r: float, gamma: float) -> float:
    """L^r_x H^gamma_y norm: inner y-Sobolev value at each x point, outer L^r_x."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    g = fld.grid
    # y-coefficients at each x grid point (amplitudes of e^{i n y})
    uy = sfft.fft(fld.samples(), axis=-1, workers=-1) / g.Ny
    w = (1.0 + g.n_axis() ** 2) ** gamma
    h_sq = TWO_PI * np.sum(w * np.abs(uy) ** 2, axis=-1)
    if r == np.inf:
        return float(np.sqrt(h_sq.max()))
    return float((np.sum(h_sq ** (r / 2.0)) * g.cell) ** (1.0 / r))


@lru_cache(maxsize=None)
def dq_normalizer(s: float) -> float:
    """c(s) = int_R |e^{ir} - 1|^2 / |r|^{1+2s} dr by adaptive quadrature.

    Split as 2 * [ int_0^1 (2 - 2 cos r) r^{-1-2s} dr  +  1/s
                   - 2 * int_1^inf cos(r) r^{-1-2s} dr ].
    The oscillatory tail uses the weighted (cosine) quadrature rule.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    head, _ = quad(lambda r: 4.0 * np.sin(0.5 * r) ** 2 * r ** (-1.0 - 2.0 * s),
                   0.0, 1.0, epsrel=1e-8, epsabs=1e-12)
    tail, _ = quad(lambda r: r ** (-1.0 - 2.0 * s), 1.0, np.inf,
                   weight="cos", wvar=1.0, epsrel=1e-8, epsabs=1e-12)
    return 2.0 * (head + 1.0 / s - 2.0 * tail)


def difference_quotient_hs_y(fld: SpectralField, s: float,
                             h_max: float = 50.0, n_h: int = 10_000
                             ) -> Tuple[float, float]:
    """Homogeneous H^s_y norm two ways: (multiplier form, difference-quotient form).

    The second form integrates ||u(.,y+h) - u(.,y)||^2 / |h|^{1+2s} over a
    midpoint h-grid on [-h_max, h_max] and divides by the normalizer c(s).
    The y-integral per h is evaluated exactly through Parseval.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    g = fld.grid
    n = g.n_axis()
    # mass per y-mode, x integrated: m_n = measure * sum_k |c|^2
    axes_x = tuple(range(g.d))
    m_n = g.measure * np.sum(np.abs(fld.coefficients) ** 2, axis=axes_x)
    multiplier = float(np.sqrt(np.sum(np.abs(n) ** (2.0 * s) * m_n)))

    dh = 2.0 * h_max / n_h
    h = -h_max + dh * (np.arange(n_h) + 0.5)
    # ||u(y+h) - u(y)||^2_{L^2} = sum_n 4 sin^2(n h / 2) m_n   (exact)
    diff_sq = 4.0 * np.sin(0.5 * np.outer(h, n)) ** 2 @ m_n
    weights = np.abs(h) ** (-1.0 - 2.0 * s)
    # the two cells touching h = 0 are handled analytically (the midpoint rule
    # is poor near the |h|^{-1-2s} singularity): 4 sin^2(nh/2) ~ n^2 h^2 there
    head_cells = (np.abs(h) < dh)
    weights = np.where(head_cells, 0.0, weights)
    integral = float(np.sum(diff_sq * weights) * dh)
    m2 = float(np.sum(n ** 2 * m_n))
    integral += m2 * 2.0 * dh ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    # analytic remainder for |h| > h_max: 4 sin^2(nh/2) averages to 2 there,
    # so the tail is 2 * (sum over oscillating modes of m_n) * h_max^{-2s} / s
    m_osc = float(np.sum(m_n[n != 0]))
    integral += 2.0 * m_osc * h_max ** (-2.0 * s) / s
    quadrature = float(np.sqrt(integral / dq_normalizer(s)))
    return multiplier, quadrature


# ---------------------------------------------------------------------------
# nonlinear products and inequality probes
# ---------------------------------------------------------------------------

def nonlinear_power(fld: SpectralField, alpha: float) -> SpectralField:
    """u |u|^alpha formed on a 3/2 zero-padded grid to suppress aliasing."""
    g = fld.grid
    Mx, My = (3 * g.Nx) // 2, (3 * g.Ny) // 2
    big_shape = (Mx,) * g.d + (My,)
    big = np.zeros(big_shape, dtype=np.complex128)
    idx = []
    for N, M in [(g.Nx, Mx)] * g.d + [(g.Ny, My)]:
        wrap = np.r_[np.arange(0, N // 2), np.arange(M - N // 2, M)]
        idx.append(wrap)
    mesh = np.ix_(*idx)
    big[mesh] = fld.coefficients
    vals = sfft.ifftn(big, workers=-1) * (Mx ** g.d * My)
    amp = np.maximum(np.abs(vals), _ABS_FLOOR)
    out = vals * amp ** alpha
    big_out = sfft.fftn(out, workers=-1) / (Mx ** g.d * My)
    return SpectralField(g, big_out[mesh], fld.time_tag)


def fractional_leibniz_ratio(fld: SpectralField, s: float, alpha: float) -> float:
    """||u|u|^alpha||_{H^s_y(hom)} / (||u||_{H^s_y(hom)} ||u||_inf^alpha)."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    denom_hs = _hs_y_multiplier(fld, s)
    sup = lebesgue_norm(fld, np.inf)
    if denom_hs == 0.0 or sup == 0.0:
        raise ValueError("denominator vanishes (field constant in y or zero)")
    num_field = nonlinear_power(fld, alpha)
    return _hs_y_multiplier(num_field, s) / (denom_hs * sup ** alpha)


def _hs_y_multiplier(fld: SpectralField, s: float) -> float:
    g = fld.grid
    w = np.abs(g.n_grid()) ** (2.0 * s)
    return float(np.sqrt(g.measure * np.sum(w * np.abs(fld.coefficients) ** 2)))


def _cube_window_sums(fld: SpectralField, r_side: float):
    """Masses of all grid-aligned cubes of side r_side, indexed by start cell.

    The window width is r_side rounded to a whole number of grid cells; the
    moving-window sums wrap periodically, consistent with the box.  Returns
    (window masses, cells per side).
    """
    g = fld.grid
    m = int(round(r_side / g.dx))
    if m < 1:
        raise ValueError(
            f"r_side = {r_side} is below one grid cell ({g.dx})"
        )
    rho = np.sum(np.abs(fld.samples()) ** 2, axis=-1) * g.dy
    window = rho
    for ax in range(g.d):
        acc = np.zeros_like(window)
        for j in range(m):
            acc += np.roll(window, -j, axis=ax)
        window = acc
    return window * g.cell, m


def cube_sup_mass(fld: SpectralField, r_side: float) -> float:
    """sup over grid-aligned cubes Q(x0, r_side) of the enclosed mass int int |u|^2."""
    window, _ = _cube_window_sums(fld, r_side)
    return float(window.max())


def edge_cube_fraction(fld: SpectralField, r_side: float = 1.0,
                       band_fraction: float = 0.75) -> float:
    """Largest cube mass centred in the band |x_i| > band_fraction * L/2, over total mass.

    The monitor behind the boundary guard: once any r_side-cube near the box
    edge holds a non-negligible share of the mass, radiation is about to wrap
    around and the periodic surrogate stops tracking the whole-space solution.
    """
    g = fld.grid
    window, m = _cube_window_sums(fld, r_side)
    total = float(np.sum(np.abs(fld.samples()) ** 2) * g.dy * g.cell)
    if total == 0.0:
        return 0.0
    half = g.L / 2.0
    centers = g.x_axis() + 0.5 * m * g.dx
    centers = (centers + half) % g.L - half
    edge = np.abs(centers) > band_fraction * half
    mask = edge if g.d == 1 else edge[:, None] | edge[None, :]
    if not mask.any():
        return 0.0
    return float(window[mask].max()) / total


def localized_gn_check(fld: SpectralField) -> Tuple[float, Tuple[float, float]]:
    """Pieces of the localized Gagliardo-Nirenberg test.

    Returns (lhs, (f1, f2)) with lhs = ||u||_{L^{2+4/(d+1)}}, f1 the square
    root of the unit-cube sup mass and f2 = ||u||_{H^1}.  The caller checks
    lhs <= C * f1^{2/(d+3)} * f2^{(d+1)/(d+3)} against a calibrated C.
    """
    g = fld.grid
    lhs = lebesgue_norm(fld, 2.0 + 4.0 / (g.d + 1))
    side = max(1, int(round(1.0 / g.dx))) * g.dx
    f1 = float(np.sqrt(cube_sup_mass(fld, side)))
    f2 = sobolev_h1(fld)
    return lhs, (f1, f2)


# ---------------------------------------------------------------------------
# linear flow and densities
# ---------------------------------------------------------------------------

def free_evolve(fld: SpectralField, t: float) -> SpectralField:
    """Exact linear flow of i u_t - Lap u = 0: multiply by exp(+i t (|xi|^2 + n^2))."""
    phase = np.exp(1j * t * fld.grid.laplace_symbol())
    return SpectralField(fld.grid, fld.coefficients * phase, fld.time_tag + t)


@dataclass
class DensitySet:
    """y-integrated densities on the x grid.

    rho:      mass density, shape (Nx,)*d
    P:        momentum density Im(conj(u) grad_x u), shape (d,) + (Nx,)*d
    K:        kinetic matrix Re(d_i u conj(d_j u)), shape (d, d) + (Nx,)*d
    nu:       potential density |u|^{alpha+2}, shape (Nx,)*d
    grad_rho: spectral x-gradient of rho, shape (d,) + (Nx,)*d
    """

    rho: np.ndarray
    P: np.ndarray
    K: np.ndarray
    nu: np.ndarray
    grad_rho: np.ndarray


def _x_gradient(grid: Grid, arr: np.ndarray) -> np.ndarray:
    """Spectral gradient along the x axes of a real array on the x grid."""
    out = np.empty((grid.d,) + arr.shape)
    ah = sfft.fftn(arr, workers=-1)
    xi = grid.xi_axis()
    for i in range(grid.d):
        shape = [1] * arr.ndim
        shape[i] = grid.Nx
        deriv = sfft.ifftn(ah * (1j * xi.reshape(shape)), workers=-1)
        out[i] = deriv.real
    return out


def densities(fld: SpectralField, alpha: float) -> DensitySet:
    """Extract rho, P, K, nu and grad rho by y rectangle-rule integration."""
    g = fld.grid
    u = fld.samples()
    absu = np.abs(u)
    rho = np.sum(absu ** 2, axis=-1) * g.dy
    nu = np.sum(np.maximum(absu, _ABS_FLOOR) ** (alpha + 2.0), axis=-1) * g.dy

    # spectral x-derivatives of u
    grads = []
    for i, xg in enumerate(g.xi_grids()):
        du = sfft.ifftn(fld.coefficients * (1j * xg) * g.x_phase(),
                        workers=-1) * g.ntot
        grads.append(du)

    P = np.empty((g.d,) + rho.shape)
    for i in range(g.d):
        P[i] = np.sum((np.conj(u) * grads[i]).imag, axis=-1) * g.dy
    K = np.empty((g.d, g.d) + rho.shape)
    for i in range(g.d):
        for j in range(i, g.d):
            kij = np.sum((grads[i] * np.conj(grads[j])).real, axis=-1) * g.dy
            K[i, j] = kij
            K[j, i] = kij
    return DensitySet(rho=rho, P=P, K=K, nu=nu, grad_rho=_x_gradient(g, rho))


# ---------------------------------------------------------------------------
# snapshot I/O
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<idqqd")  # d, L, Nx, Ny, time_tag


def save_field(fld: SpectralField, fh: Union[str, BinaryIO]) -> None:
    """Write header (d, L, Nx, Ny, time_tag) + interleaved re/im coefficients."""
    g = fld.grid
    header = _HEADER.pack(g.d, g.L, g.Nx, g.Ny, fld.time_tag)
    body = np.ascontiguousarray(fld.coefficients).astype("<c16").tobytes()
    if isinstance(fh, str):
        with open(fh, "wb") as f:
            f.write(header)
            f.write(body)
    else:
        fh.write(header)
        fh.write(body)


def load_field(fh: Union[str, BinaryIO]) -> SpectralField:
    if isinstance(fh, str):
        with open(fh, "rb") as f:
            return load_field(f)
    d, L, Nx, Ny, time_tag = _HEADER.unpack(fh.read(_HEADER.size))
    grid = Grid(d, L, Nx, Ny)
    raw = fh.read(16 * grid.ntot)
    if len(raw) != 16 * grid.ntot:
        raise ValueError("snapshot file truncated")
    coeff = np.frombuffer(raw, dtype="<c16").reshape(grid.shape)
    return SpectralField(grid, coeff.astype(np.complex128), time_tag)
