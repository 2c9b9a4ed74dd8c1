"""Constructive self-regulation certificates for birth/death kernel pairs.

A pair of radial non-increasing kernels (dispersal a_plus, competition
a_minus) self-regulates at level (omega, theta) if for every finite point set
eta in R^d

    U(eta) = omega*|eta| + sum_{x != y} a_minus(x - y)
                         - theta * sum_{x != y} a_plus(x - y)  >=  0,

with both sums over ordered pairs.  ``certify`` builds such a theta > 0
explicitly whenever the competition kernel is strictly positive somewhere
near the origin, by a covering/packing argument:

* tile R^d by cubes of side h and over-count the dispersal kernel by its
  per-cube suprema (an upper Riemann sum, kept within epsilon of the mass);
* inside one cube, points closer than 2r to a crowded point see competition
  at least a_minus(2r), and at most h^d * g(h, r) points can be mutually
  2r-separated, where g is an explicit packing bound.

Balancing the two effects yields theta = min(omega/(2*delta), a_r/delta)
with delta = max(sup a_plus, (mass a_plus + epsilon) * g(h, r)) and
a_r = a_minus(2r).  All certificate arithmetic is elementary and recomputable
from the stored fields.  Distances here are flat (not periodic): the
certificate is a statement about configurations in the whole space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import RadialKernel, unit_ball_volume

# Densest-packing constants by dimension; 1.0 is a sound bound in any d.
TIGHT_PACKING = {1: 1.0, 2: math.pi / math.sqrt(12.0), 3: math.pi / math.sqrt(18.0)}


class CertificationError(RuntimeError):
    pass


def _require_radial_nonincreasing(kernel: RadialKernel, name: str) -> None:
    if not kernel.is_nonincreasing:
        raise CertificationError(f"{name} must be radial non-increasing")


def inf_on_ball(a_minus: RadialKernel, r: float) -> float:
    """Infimum of the competition kernel over the ball of radius 2r.

    For a radial non-increasing continuous profile this is the value at 2r.
    """
    if r <= 0.0:
        raise CertificationError(f"r must be positive, got {r}")
    _require_radial_nonincreasing(a_minus, "a_minus")
    return float(a_minus.profile(2.0 * r))


def packing_bound(dim: int, h: float, r: float, packing_constant: float = 1.0) -> float:
    """Bound g(h, r) on the density of 2r-separated points per unit cube volume.

    Any set of points in a cube of side h whose open r-balls are pairwise
    disjoint has at most h^d * g(h, r) elements, with
    g(h, r) = (packing_constant / c_d) * ((h + 2r) / (h r))^d.
    """
    if h <= 0.0 or r <= 0.0:
        raise CertificationError(f"h and r must be positive, got h={h}, r={r}")
    if not (0.0 < packing_constant <= 1.0):
        raise CertificationError(
            f"packing constant must lie in (0, 1], got {packing_constant}"
        )
    return (packing_constant / unit_ball_volume(dim)) * (
        (h + 2.0 * r) / (h * r)
    ) ** dim


def riemann_upper_sum(a_plus: RadialKernel, h: float) -> float:
    """Upper Riemann sum h^d * sum over lattice cubes of the per-cube sup.

    Cubes are [m h, (m+1) h)^d over all integer vectors m.  For a radial
    non-increasing kernel the sup over a cube is the value at the cube's
    closest point to the origin.  Cubes beyond the kernel cutoff contribute
    through a certified far-field bound, so the result is a true upper bound
    for the infinite sum.
    """
    if h <= 0.0:
        raise CertificationError(f"h must be positive, got {h}")
    _require_radial_nonincreasing(a_plus, "a_plus")
    d = a_plus.dim
    diag = h * math.sqrt(d)
    r_enum = a_plus.cutoff_radius() + diag

    m_max = int(math.ceil(r_enum / h)) + 1
    idx = np.arange(-m_max, m_max + 1)
    lo = idx * h
    hi = (idx + 1) * h
    # closest coordinate of the closed cube [lo, hi] to the origin
    near = np.where(lo > 0.0, lo, np.where(hi < 0.0, hi, 0.0))
    near_sq = near**2

    # accumulate squared distances axis by axis, pruning cubes already too far
    rho_sq = near_sq[near_sq < r_enum**2]
    for _ in range(d - 1):
        rho_sq = (rho_sq[:, None] + near_sq[None, :]).ravel()
        rho_sq = rho_sq[rho_sq < r_enum**2]
    core = h**d * float(a_plus.profile(np.sqrt(rho_sq)).sum())

    # cubes with closest point at distance >= r_enum: each sup is dominated by
    # the kernel value at (|x| - h sqrt(d)) pointwise, so their total is at most
    # (r_enum / (r_enum - diag))^(d-1) * mass_beyond(r_enum - diag).
    far = (r_enum / (r_enum - diag)) ** (d - 1) * a_plus.mass_beyond(r_enum - diag)
    return core + far


@dataclass(frozen=True)
class SearchGrid:
    """Candidate (epsilon, h, r) triples for the certificate search.

    h values are tied to r through h_factors: h = factor * r.
    """

    epsilons: tuple[float, ...]
    radii: tuple[float, ...]
    h_factors: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "h_factors", tuple(float(f) for f in self.h_factors))
        if not self.epsilons or any(e <= 0.0 for e in self.epsilons):
            raise CertificationError("epsilons must be a nonempty positive tuple")
        if not self.radii or any(r <= 0.0 for r in self.radii):
            raise CertificationError("radii must be a nonempty positive tuple")
        if not self.h_factors or any(f <= 0.0 for f in self.h_factors):
            raise CertificationError("h_factors must be a nonempty positive tuple")

    @classmethod
    def default(
        cls,
        a_plus: RadialKernel,
        a_minus: RadialKernel,
        n_radii: int = 13,
    ) -> "SearchGrid":
        """Relative defaults: epsilon as fractions of the dispersal mass, r as a
        log grid spanning [0.01, 10] times the competition length scale."""
        mass = a_plus.mass()
        char = a_minus.characteristic_radius()
        return cls(
            epsilons=tuple(f * mass for f in (0.1, 0.5, 1.0)),
            radii=tuple(np.geomspace(0.01 * char, 10.0 * char, n_radii)),
        )


@dataclass(frozen=True)
class Certificate:
    """A verified-by-construction self-regulation level (omega, theta)."""

    dim: int
    omega: float
    theta: float
    epsilon: float
    h: float
    r: float
    a_r_minus: float
    riemann_sum: float
    g: float
    delta: float
    packing_constant: float
    unit_ball_volume: float
    sup_a_plus: float
    mass_a_plus: float
    provenance: dict = field(default_factory=dict)

    def self_check(self, tol: float = 1e-12) -> None:
        """Recompute the arithmetic chain from stored fields; raise on mismatch."""
        g = packing_bound(self.dim, self.h, self.r, self.packing_constant)
        delta = max(self.sup_a_plus, (self.mass_a_plus + self.epsilon) * g)
        theta = min(self.omega / (2.0 * delta), self.a_r_minus / delta)
        checks = {
            "unit_ball_volume": (self.unit_ball_volume, unit_ball_volume(self.dim)),
            "g": (self.g, g),
            "delta": (self.delta, delta),
            "theta": (self.theta, theta),
        }
        for name, (stored, recomputed) in checks.items():
            if not math.isclose(stored, recomputed, rel_tol=tol, abs_tol=tol):
                raise CertificationError(
                    f"certificate field {name} inconsistent: "
                    f"stored {stored!r}, recomputed {recomputed!r}"
                )
        if not self.riemann_sum <= self.mass_a_plus + self.epsilon:
            raise CertificationError(
                "certificate cell sum exceeds mass + epsilon: "
                f"{self.riemann_sum!r} > {self.mass_a_plus + self.epsilon!r}"
            )
        if self.a_r_minus <= 0.0 or self.theta <= 0.0 or self.omega <= 0.0:
            raise CertificationError("certificate fields must be strictly positive")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "omega": self.omega,
            "theta": self.theta,
            "epsilon": self.epsilon,
            "h": self.h,
            "r": self.r,
            "a_r_minus": self.a_r_minus,
            "riemann_sum": self.riemann_sum,
            "g": self.g,
            "delta": self.delta,
            "packing_constant": self.packing_constant,
            "unit_ball_volume": self.unit_ball_volume,
            "sup_a_plus": self.sup_a_plus,
            "mass_a_plus": self.mass_a_plus,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        return cls(**data)


def certify(
    a_plus: RadialKernel,
    a_minus: RadialKernel,
    omega: float = 1.0,
    grid: SearchGrid | None = None,
    tight_packing: bool = False,
) -> Certificate:
    """Search the grid for the largest certified theta.

    omega is an input, not searched; it must be strictly positive, since
    omega = 0 forces theta = 0 and the level degenerates.  Raises
    CertificationError when no grid point sees competition (a_minus vanishes
    on every probed ball) or no cell size passes the Riemann-sum check.
    """
    if not (omega > 0.0 and math.isfinite(omega)):
        raise CertificationError(
            f"omega must be strictly positive (omega = 0 forces theta = 0), "
            f"got {omega}"
        )
    if a_plus.dim != a_minus.dim:
        raise CertificationError(
            f"kernel dimensions differ: {a_plus.dim} vs {a_minus.dim}"
        )
    _require_radial_nonincreasing(a_plus, "a_plus")
    _require_radial_nonincreasing(a_minus, "a_minus")
    if grid is None:
        grid = SearchGrid.default(a_plus, a_minus)
    dim = a_plus.dim
    packing = TIGHT_PACKING.get(dim, 1.0) if tight_packing else 1.0
    sup_plus = a_plus.sup_norm()
    mass_plus = a_plus.mass()

    # theta at a grid point depends on the Riemann sum only through the
    # feasibility check, so rank candidates first and test cell sums lazily.
    candidates = []
    for r in grid.radii:
        a_r = inf_on_ball(a_minus, r)
        if a_r <= 0.0:
            continue
        for hf in grid.h_factors:
            h = hf * r
            for eps in grid.epsilons:
                g = packing_bound(dim, h, r, packing)
                delta = max(sup_plus, (mass_plus + eps) * g)
                theta = min(omega / (2.0 * delta), a_r / delta)
                candidates.append((theta, r, h, eps, a_r, g, delta))
    if not candidates:
        raise CertificationError(
            "no competition within reach: a_minus vanishes on every ball "
            "probed by the search grid"
        )
    candidates.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))

    riemann_cache: dict[float, float] = {}
    for theta, r, h, eps, a_r, g, delta in candidates:
        if h not in riemann_cache:
            riemann_cache[h] = riemann_upper_sum(a_plus, h)
        riemann = riemann_cache[h]
        if riemann <= mass_plus + eps:
            return Certificate(
                dim=dim,
                omega=float(omega),
                theta=float(theta),
                epsilon=float(eps),
                h=float(h),
                r=float(r),
                a_r_minus=float(a_r),
                riemann_sum=float(riemann),
                g=float(g),
                delta=float(delta),
                packing_constant=float(packing),
                unit_ball_volume=unit_ball_volume(dim),
                sup_a_plus=float(sup_plus),
                mass_a_plus=float(mass_plus),
                provenance={
                    "epsilons": list(grid.epsilons),
                    "radii": list(grid.radii),
                    "h_factors": list(grid.h_factors),
                    "candidates_ranked": len(candidates),
                    "tight_packing": bool(tight_packing),
                },
            )
    raise CertificationError(
        "no cell size in the search grid keeps the upper Riemann sum within "
        "epsilon of the dispersal mass"
    )


# -- the certified functional -----------------------------------------------


def _pair_profile_sums(
    points: np.ndarray, a_plus: RadialKernel, a_minus: RadialKernel
) -> tuple[float, float]:
    """Ordered-pair sums of both kernels over a finite point set (flat metric)."""
    n = points.shape[0]
    if n < 2:
        return 0.0, 0.0
    iu, ju = np.triu_indices(n, 1)
    diff = points[iu] - points[ju]
    dists = np.sqrt((diff * diff).sum(axis=1))
    # kernels are even, so ordered sums double the unordered ones
    return (
        2.0 * float(a_minus.profile(dists).sum()),
        2.0 * float(a_plus.profile(dists).sum()),
    )


def _as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.zeros((0, dim))
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise CertificationError(
            f"points must have shape (n, {dim}), got {pts.shape}"
        )
    return pts


def u_theta(
    points,
    a_plus: RadialKernel,
    a_minus: RadialKernel,
    omega: float,
    theta: float,
) -> float:
    """The certified functional U on a finite configuration (flat metric)."""
    pts = _as_points(points, a_plus.dim)
    sum_minus, sum_plus = _pair_profile_sums(pts, a_plus, a_minus)
    return omega * pts.shape[0] + sum_minus - theta * sum_plus


def u_theta_increment(
    x,
    others,
    a_plus: RadialKernel,
    a_minus: RadialKernel,
    omega: float,
    theta: float,
) -> float:
    """U(others + {x}) - U(others), in closed form.

    Removing one point cancels all pair terms not involving it, leaving
    omega + 2 * (sum a_minus(x - y) - theta * sum a_plus(x - y)) over the
    remaining points y.
    """
    x = np.asarray(x, dtype=float).reshape(a_plus.dim)
    pts = _as_points(others, a_plus.dim)
    if pts.shape[0] == 0:
        return float(omega)
    diff = pts - x
    dists = np.sqrt((diff * diff).sum(axis=1))
    return float(
        omega
        + 2.0 * (a_minus.profile(dists).sum() - theta * a_plus.profile(dists).sum())
    )


# -- randomized verification --------------------------------------------------

SAMPLER_NAMES = ("uniform", "poisson", "cluster_competition", "cluster_dispersal")


@dataclass(frozen=True)
class ViolationReport:
    trials: int
    size_max: int
    min_u: float
    n_violations: int
    tolerance: float
    argmin_sampler: str
    argmin_points: np.ndarray
    sampler_mix: dict

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "size_max": self.size_max,
            "min_u": self.min_u,
            "n_violations": self.n_violations,
            "tolerance": self.tolerance,
            "argmin_sampler": self.argmin_sampler,
            "argmin_points": self.argmin_points.tolist(),
            "sampler_mix": dict(self.sampler_mix),
            "passed": self.passed,
        }


def verify_certificate(
    cert: Certificate,
    a_plus: RadialKernel,
    a_minus: RadialKernel,
    trials: int = 100_000,
    size_max: int = 30,
    rng: np.random.Generator | None = None,
    sampler_mix: dict | None = None,
) -> ViolationReport:
    """Randomized search for configurations with U < 0.

    Mixes uniform boxes, Poisson boxes, and adversarial clusters at the
    certificate's crowding scale r and at the dispersal length scale.  A
    sound certificate yields zero violations; the report keeps the minimizing
    configuration either way.
    """
    if rng is None:
        rng = np.random.default_rng()
    if sampler_mix is None:
        sampler_mix = {name: 1.0 for name in SAMPLER_NAMES}
    names = [n for n in SAMPLER_NAMES if sampler_mix.get(n, 0.0) > 0.0]
    if not names:
        raise CertificationError("sampler mix selects no samplers")
    weights = np.array([sampler_mix[n] for n in names])
    cum = np.cumsum(weights / weights.sum())

    dim = a_plus.dim
    scale_r = cert.r
    scale_disp = a_plus.characteristic_radius()
    box = 6.0 * max(scale_r, scale_disp, a_minus.characteristic_radius())
    omega, theta = cert.omega, cert.theta

    min_u = math.inf
    argmin_pts = np.zeros((0, dim))
    argmin_sampler = names[0]
    n_violations = 0

    for _ in range(trials):
        kind = names[int(np.searchsorted(cum, rng.random()))]
        if kind == "uniform":
            n = int(rng.integers(0, size_max + 1))
            pts = rng.uniform(-box / 2.0, box / 2.0, (n, dim))
        elif kind == "poisson":
            n = min(int(rng.poisson(size_max / 2.0)), size_max)
            pts = rng.uniform(-box / 2.0, box / 2.0, (n, dim))
        elif kind == "cluster_competition":
            n = int(rng.integers(2, size_max + 1))
            pts = rng.normal(0.0, scale_r, (n, dim))
        else:  # cluster_dispersal
            n = int(rng.integers(2, size_max + 1))
            pts = rng.normal(0.0, scale_disp, (n, dim))
        u = u_theta(pts, a_plus, a_minus, omega, theta)
        if u < min_u:
            min_u = u
            argmin_pts = pts
            argmin_sampler = kind
        if u < -1e-9 * (1.0 + omega * pts.shape[0]):
            n_violations += 1

    return ViolationReport(
        trials=trials,
        size_max=size_max,
        min_u=float(min_u),
        n_violations=n_violations,
        tolerance=1e-9,
        argmin_sampler=argmin_sampler,
        argmin_points=argmin_pts,
        sampler_mix={n: float(sampler_mix.get(n, 0.0)) for n in SAMPLER_NAMES},
    )
