import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbdsim.certificate import (
    TIGHT_PACKING,
    Certificate,
    CertificationError,
    SearchGrid,
    certify,
    inf_on_ball,
    packing_bound,
    riemann_upper_sum,
    u_theta,
    u_theta_increment,
    verify_certificate,
)
from sbdsim.kernels import exponential, gaussian, tabulated, triangular

TRI = triangular(1.0, 1.0, 1)
GAUSS = gaussian(1.0, 1.0, 1)

# hand evaluation of the chain at (omega=1, epsilon=0.5, h=0.5, r=0.25) for
# the triangular pair: riemann 1.5, g = (1/2)((0.5+0.5)/(0.5*0.25)) = 4,
# delta = max(1, 1.5*4) = 6, theta = min(1/12, 0.5/6) = 1/12
HAND_GRID = SearchGrid(epsilons=(0.5,), radii=(0.25,), h_factors=(2.0,))
HAND_THETA = 1.0 / 12.0


# -- inf_on_ball ---------------------------------------------------------------


def test_inf_on_ball_triangular():
    assert inf_on_ball(TRI, 0.25) == 0.5
    assert inf_on_ball(TRI, 0.75) == 0.0


def test_inf_on_ball_gaussian():
    assert inf_on_ball(GAUSS, 0.5) == pytest.approx(
        math.exp(-0.5) / math.sqrt(2 * math.pi), rel=1e-12
    )
    assert inf_on_ball(GAUSS, 0.5) == pytest.approx(0.241971, abs=1e-6)


# -- riemann_upper_sum ----------------------------------------------------------


def test_riemann_triangular_hand_value():
    # cell sups at h=0.5: 1, 0.5 on each side of the origin
    assert riemann_upper_sum(TRI, 0.5) == pytest.approx(1.5, rel=1e-14)


def test_riemann_gaussian_fine_grid():
    val = riemann_upper_sum(GAUSS, 0.1)
    assert 1.0 <= val <= 1.05


def test_riemann_converges_to_mass():
    for k in (TRI, GAUSS, exponential(1.0, 1.0, 1), gaussian(1.0, 0.5, 2)):
        sums = [riemann_upper_sum(k, h) for h in (0.8, 0.4, 0.2, 0.1, 0.05)]
        assert all(s >= k.mass() - 1e-12 for s in sums)
        assert sums[-1] <= k.mass() * 1.1
        # refinement never increases the upper sum by much; it trends down
        assert sums[-1] <= sums[0] + 1e-12


@given(st.floats(min_value=0.05, max_value=2.0), st.floats(min_value=0.3, max_value=3.0))
def test_riemann_dominates_mass(h, radius):
    k = triangular(1.0, radius, 1)
    assert riemann_upper_sum(k, h) >= k.mass() - 1e-12


def test_riemann_2d_dominates_mass():
    k = gaussian(1.0, 1.0, 2)
    for h in (1.0, 0.5, 0.25):
        assert riemann_upper_sum(k, h) >= k.mass() - 1e-12
    assert riemann_upper_sum(k, 0.25) < 1.3 * k.mass()


def test_riemann_tabulated_includes_tail_budget():
    # truncated gaussian table: the declared tail mass keeps the sum an upper bound
    g = gaussian(1.0, 1.0, 1)
    r = np.linspace(0.0, 3.0, 301)
    k = tabulated(
        r,
        g.profile(r),
        dim=1,
        tail_sup_bound=float(g.profile(3.0)),
        tail_mass_bound=float(g.mass_beyond(3.0)),
    )
    assert riemann_upper_sum(k, 0.1) >= g.mass() - 1e-9


# -- packing_bound ---------------------------------------------------------------


def test_packing_bound_hand_values():
    assert packing_bound(1, 1.0, 0.5) == pytest.approx(2.0, rel=1e-14)
    assert packing_bound(2, 1.0, 0.5) == pytest.approx(16.0 / math.pi, rel=1e-14)
    assert packing_bound(2, 1.0, 0.5, TIGHT_PACKING[2]) == pytest.approx(
        16.0 / math.sqrt(12.0), rel=1e-14
    )


def test_packing_bound_rejects_bad_inputs():
    with pytest.raises(CertificationError):
        packing_bound(1, 0.0, 0.5)
    with pytest.raises(CertificationError):
        packing_bound(1, 1.0, -0.1)
    with pytest.raises(CertificationError):
        packing_bound(1, 1.0, 0.5, packing_constant=1.5)


def max_separated_subset(points: np.ndarray, min_dist: float) -> int:
    """Exhaustive maximum subset with pairwise distance >= min_dist."""
    n = len(points)
    ok = np.ones((n, n), dtype=bool)
    for i, j in itertools.combinations(range(n), 2):
        ok[i, j] = ok[j, i] = abs(points[i] - points[j]) >= min_dist
    best = 0
    for mask in range(1 << n):
        idx = [i for i in range(n) if mask >> i & 1]
        if len(idx) <= best:
            continue
        if all(ok[i][j] for i, j in itertools.combinations(idx, 2)):
            best = len(idx)
    return best


def test_packing_bound_dominates_brute_force():
    # 100 random point sets in a cell of side h: any r-separated subset obeys
    # the h^d * g_d(h, r) cap from the ball-packing argument
    rng = np.random.default_rng(42)
    for _ in range(100):
        h = float(rng.uniform(0.3, 2.0))
        r = float(rng.uniform(0.05, 0.8))
        pts = rng.uniform(0.0, h, size=rng.integers(1, 13))
        cap = h * packing_bound(1, h, r)
        assert max_separated_subset(pts, 2.0 * r) <= cap + 1e-9


def test_packing_bound_exact_at_extremes():
    # three points {0, 1/2, 1} at exactly 2r = 1/2 apart meet the d=1 cap of 3
    pts = np.array([0.0, 0.5, 1.0])
    assert max_separated_subset(pts, 0.5) == 3
    assert 1.0 * packing_bound(1, 1.0, 0.25) == pytest.approx(3.0)


# -- certify ---------------------------------------------------------------------


def test_certify_hand_grid_point():
    cert = certify(TRI, TRI, omega=1.0, grid=HAND_GRID)
    assert cert.theta == pytest.approx(HAND_THETA, rel=1e-12)
    assert cert.riemann_sum == pytest.approx(1.5, rel=1e-12)
    assert cert.g == pytest.approx(4.0, rel=1e-12)
    assert cert.delta == pytest.approx(6.0, rel=1e-12)
    assert cert.a_r_minus == pytest.approx(0.5, rel=1e-12)
    cert.self_check()


def test_certify_default_grid_triangular_pair():
    cert = certify(TRI, TRI, omega=1.0)
    assert cert.theta > 0.0
    # the search maximizes over its own grid, which lands near the hand point
    assert cert.theta >= 0.5 * HAND_THETA
    assert cert.riemann_sum <= TRI.mass() + cert.epsilon + 1e-12
    cert.self_check()


def test_certify_gaussian_pair():
    cert = certify(gaussian(1.0, 2.0, 1), gaussian(0.2, 0.5, 1), omega=1.0)
    assert cert.theta > 0.0
    cert.self_check()


def test_certify_long_dispersal_gaussian_vs_finite_range():
    # dispersal has unbounded support while competition is finite-range, so no
    # pointwise domination a+ <= C a- exists; the certificate must still come out
    cert = certify(GAUSS, TRI, omega=1.0)
    assert cert.theta > 0.0
    assert cert.riemann_sum <= GAUSS.mass() + cert.epsilon + 1e-12
    cert.self_check()


def test_certify_2d():
    cert = certify(gaussian(1.0, 1.0, 2), triangular(1.0, 1.0, 2), omega=1.0)
    assert cert.theta > 0.0
    cert.self_check()


def test_certify_omega_monotone():
    lo = certify(TRI, TRI, omega=0.5)
    hi = certify(TRI, TRI, omega=2.0)
    assert hi.theta >= lo.theta - 1e-15


def test_certify_rejects_zero_omega():
    with pytest.raises(CertificationError):
        certify(TRI, TRI, omega=0.0)


def test_certify_no_competition_within_reach():
    grid = SearchGrid(epsilons=(0.5,), radii=(5.0,), h_factors=(1.0,))
    with pytest.raises(CertificationError, match="no competition within reach"):
        certify(TRI, TRI, omega=1.0, grid=grid)


def test_certify_no_feasible_cell_size():
    grid = SearchGrid(epsilons=(1e-9,), radii=(0.25,), h_factors=(8.0,))
    with pytest.raises(CertificationError, match="no cell size"):
        certify(TRI, TRI, omega=1.0, grid=grid)


def test_certify_tight_packing_improves_theta_soundly():
    ap = gaussian(1.0, 1.0, 2)
    am = triangular(1.0, 1.0, 2)
    loose = certify(ap, am, omega=1.0)
    tight = certify(ap, am, omega=1.0, tight_packing=True)
    assert loose.theta <= tight.theta + 1e-15
    rng = np.random.default_rng(3)
    assert verify_certificate(loose, ap, am, trials=2000, rng=rng).passed
    rng = np.random.default_rng(3)
    assert verify_certificate(tight, ap, am, trials=2000, rng=rng).passed


def test_certificate_roundtrip():
    cert = certify(TRI, TRI, omega=1.0, grid=HAND_GRID)
    again = Certificate.from_dict(cert.to_dict())
    assert again == cert
    again.self_check()


def test_self_check_catches_tampering():
    cert = certify(TRI, TRI, omega=1.0, grid=HAND_GRID)
    for field, value in [
        ("theta", cert.theta * 1.5),
        ("delta", cert.delta * 0.5),
        ("riemann_sum", TRI.mass() + cert.epsilon + 0.1),
        ("a_r_minus", 0.0),
    ]:
        broken = dataclasses.replace(cert, **{field: value})
        with pytest.raises(CertificationError):
            broken.self_check()


# -- the functional U ------------------------------------------------------------


def test_u_theta_trivial_configurations():
    assert u_theta(np.zeros((0, 1)), TRI, TRI, omega=1.0, theta=0.1) == 0.0
    assert u_theta([[0.3]], TRI, TRI, omega=1.0, theta=0.1) == 1.0


def test_u_theta_two_points_closed_form():
    d = 0.4
    got = u_theta([[0.0], [d]], TRI, TRI, omega=1.0, theta=0.1)
    a = TRI.profile(d)
    assert got == pytest.approx(2.0 + 2.0 * a - 0.2 * a, rel=1e-14)


def test_u_theta_increment_empty_is_omega():
    assert u_theta_increment([0.0], np.zeros((0, 1)), TRI, TRI, 1.0, 0.1) == 1.0


@settings(max_examples=25)
@given(st.integers(min_value=2, max_value=50), st.integers(min_value=0, max_value=10**6))
def test_telescoping_identity(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-3.0, 3.0, (n, 1))
    omega, theta = 1.0, 0.08
    total = u_theta(pts, TRI, GAUSS, omega, theta)
    acc = 0.0
    remaining = pts.copy()
    while remaining.shape[0] > 0:
        x, remaining = remaining[-1], remaining[:-1]
        acc += u_theta_increment(x, remaining, TRI, GAUSS, omega, theta)
    assert abs(total - acc) <= 1e-10 * (1.0 + abs(total))


def test_max_crowding_increment_nonnegative():
    # claim (b) of the covering argument: at the point with the largest
    # dispersal load, deleting it cannot decrease U under a valid certificate
    cert = certify(TRI, TRI, omega=1.0)
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = rng.integers(2, 25)
        scale = rng.choice([0.05, 0.3, 1.0, 4.0])
        pts = rng.uniform(-scale, scale, (n, 1))
        loads = [
            TRI.profile(np.abs(np.delete(pts, i, axis=0) - pts[i]).ravel()).sum()
            for i in range(n)
        ]
        i_star = int(np.argmax(loads))
        inc = u_theta_increment(
            pts[i_star],
            np.delete(pts, i_star, axis=0),
            TRI,
            TRI,
            cert.omega,
            cert.theta,
        )
        assert inc >= -1e-12 * (1.0 + cert.omega * n)


def test_pair_bound_from_sup_norm():
    # for |eta| = 2, theta <= omega / (2 sup a+) makes U nonnegative at any distance
    omega = 1.0
    theta = omega / (2.0 * GAUSS.sup_norm())
    for d in np.linspace(0.0, 3.0, 50):
        assert u_theta([[0.0], [d]], GAUSS, TRI, omega, theta) >= 0.0


# -- verification harness ---------------------------------------------------------


def test_verify_valid_certificate_clean():
    cert = certify(TRI, TRI, omega=1.0)
    rng = np.random.default_rng(21)
    rep = verify_certificate(cert, TRI, TRI, trials=5000, size_max=25, rng=rng)
    assert rep.passed
    assert rep.n_violations == 0
    assert rep.min_u >= 0.0
    assert rep.trials == 5000


def test_verify_detects_inflated_theta():
    cert = certify(TRI, TRI, omega=1.0)
    inflated = dataclasses.replace(
        cert,
        theta=10.0 * cert.a_r_minus / cert.delta + 10.0 * TRI.sup_norm() / TRI.sup_norm(),
    )
    rng = np.random.default_rng(22)
    rep = verify_certificate(inflated, TRI, TRI, trials=5000, size_max=25, rng=rng)
    assert not rep.passed
    assert rep.min_u < 0.0
    # the worst configuration is reported for reproduction
    bad = rep.argmin_points
    assert (
        u_theta(bad, TRI, TRI, cert.omega, inflated.theta)
        == pytest.approx(rep.min_u, rel=1e-12)
    )


def test_verify_zero_theta_zero_omega_never_violates():
    cert = certify(TRI, TRI, omega=1.0)
    degenerate = dataclasses.replace(cert, theta=0.0, omega=0.0)
    rng = np.random.default_rng(23)
    rep = verify_certificate(degenerate, TRI, TRI, trials=2000, size_max=20, rng=rng)
    assert rep.passed


def test_verify_deterministic_given_seed():
    cert = certify(TRI, TRI, omega=1.0)
    reps = [
        verify_certificate(
            cert, TRI, TRI, trials=500, size_max=15, rng=np.random.default_rng(5)
        )
        for _ in range(2)
    ]
    assert reps[0].min_u == reps[1].min_u
    assert reps[0].argmin_sampler == reps[1].argmin_sampler
