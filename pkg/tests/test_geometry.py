import math
from dataclasses import fields

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from bistatic_ducm.geometry import (
    BistaticGeometry,
    BistaticPoint,
    CartesianPoint,
    DegeneratePositionError,
    GeometryError,
    InversePartials,
    InvalidRangeError,
    forward_partials,
    inverse_partials,
    to_cartesian,
    to_measurement,
)
from oracles import fd_forward_jacobian, fd_inverse_partials, ray_solve

L = 4000.0
GEOM = BistaticGeometry(L)
PARTIAL_NAMES = [f.name for f in fields(InversePartials)]


def partial_scale(name: str, b: float, alpha: float) -> float:
    """Natural magnitude of a partial: receiver range / b**(order in b)."""
    r1 = 0.5 * (b * b - L * L) / (b - L * math.cos(alpha))
    return r1 / b ** name.count("db")


def assert_partials_match(b, alpha, rtol=1e-6):
    ana = inverse_partials(BistaticPoint(b, alpha), GEOM)
    ref = fd_inverse_partials(b, alpha, L)
    for name in PARTIAL_NAMES:
        a, r = float(getattr(ana, name)), ref[name]
        # Relative check; the floor only matters for entries that vanish exactly.
        tol = rtol * max(abs(r), 1e-6 * partial_scale(name, b, alpha))
        assert abs(a - r) <= tol, f"{name} at b={b}, alpha={alpha}: {a} vs {r}"


class TestGeometryType:
    def test_sensor_positions(self):
        assert_allclose(GEOM.transmitter, [4000.0, 0.0])
        assert_allclose(GEOM.receiver, [0.0, 0.0])

    @pytest.mark.parametrize("L_bad", [0.0, -1.0, float("nan")])
    def test_rejects_bad_baseline(self, L_bad):
        with pytest.raises(GeometryError):
            BistaticGeometry(L_bad)


class TestToMeasurement:
    def test_y_axis_target(self):
        z = to_measurement(CartesianPoint(0.0, 3000.0), GEOM)
        assert z.b == pytest.approx(8000.0, rel=1e-14)
        assert z.alpha == pytest.approx(math.pi / 2, rel=1e-14)

    def test_bisector_target(self):
        z = to_measurement(CartesianPoint(2000.0, 2000.0 * math.sqrt(3)), GEOM)
        assert z.b == pytest.approx(8000.0, rel=1e-14)
        assert z.alpha == pytest.approx(math.pi / 3, rel=1e-14)

    def test_far_target(self):
        # sqrt(128e6) + sqrt(80e6)
        z = to_measurement(CartesianPoint(8000.0, 8000.0), GEOM)
        assert z.b == pytest.approx(20257.9804, abs=5e-5)
        assert z.alpha == pytest.approx(math.pi / 4, rel=1e-14)

    @pytest.mark.parametrize("p", [(0.0, 0.0), (4000.0, 0.0)])
    def test_sensor_position_is_degenerate(self, p):
        with pytest.raises(DegeneratePositionError):
            to_measurement(CartesianPoint(*p), GEOM)

    def test_left_half_plane_uses_atan2(self):
        z = to_measurement(CartesianPoint(-1000.0, -1.0), GEOM)
        assert z.alpha == pytest.approx(math.atan2(-1.0, -1000.0))
        assert z.alpha < -math.pi / 2


class TestToCartesian:
    @pytest.mark.parametrize(
        "z, expected",
        [
            ((8000.0, math.pi / 2), (0.0, 3000.0)),
            ((8000.0, math.pi / 3), (2000.0, 3464.1016)),
            # ray-search oracle: r1 = 2400
            ((8000.0, 2 * math.pi / 3), (-1200.0, 2078.4610)),
        ],
    )
    def test_known_points(self, z, expected):
        p = to_cartesian(BistaticPoint(*z), GEOM)
        assert_allclose([p.x, p.y], expected, atol=1e-4)

    @pytest.mark.parametrize("b, alpha", [(8000.0, 2 * math.pi / 3), (4500.0, 0.3), (20000.0, -2.5)])
    def test_matches_ray_search(self, b, alpha):
        p = to_cartesian(BistaticPoint(b, alpha), GEOM)
        assert_allclose([p.x, p.y], ray_solve(b, alpha, L), rtol=1e-9, atol=1e-7)

    @pytest.mark.parametrize("b", [4000.0, 3000.0, 4000.0 * (1 + 1e-10)])
    def test_rejects_range_inside_baseline(self, b):
        with pytest.raises(InvalidRangeError):
            to_cartesian(BistaticPoint(b, 0.5), GEOM)

    def test_broadcasts(self):
        b = np.array([5000.0, 8000.0, 12000.0])
        p = to_cartesian(BistaticPoint(b, 0.4), GEOM)
        assert np.shape(p.x) == (3,)


class TestInversePartials:
    @pytest.mark.parametrize("b, alpha", [(8000.0, math.pi / 2), (8000.0, math.pi / 3)])
    def test_finite_difference_agreement(self, b, alpha):
        assert_partials_match(b, alpha)

    @pytest.mark.parametrize("b, alpha", [(8000.0, math.pi / 3), (4500.0, 0.1), (20000.0, 2.0)])
    def test_inverse_function_theorem(self, b, alpha):
        J = inverse_partials(BistaticPoint(b, alpha), GEOM).jacobian
        p = to_cartesian(BistaticPoint(b, alpha), GEOM)
        Hf = forward_partials(p, GEOM).jacobian
        assert_allclose(J @ Hf, np.eye(2), atol=1e-8)

    def test_jacobian_layout(self):
        d = inverse_partials(BistaticPoint(8000.0, 0.7), GEOM)
        assert_allclose(d.jacobian, [[d.df_db, d.df_dalpha], [d.dg_db, d.dg_dalpha]])

    def test_rejects_invalid_range(self):
        with pytest.raises(InvalidRangeError):
            inverse_partials(BistaticPoint(3999.0, 0.5), GEOM)

    @settings(max_examples=50, deadline=None)
    @given(b=st.floats(4100.0, 40000.0), alpha=st.floats(0.05, 3.0))
    def test_reflection_symmetry(self, b, alpha):
        # f is even in alpha and g is odd; each alpha derivative flips parity.
        up = inverse_partials(BistaticPoint(b, alpha), GEOM)
        dn = inverse_partials(BistaticPoint(b, -alpha), GEOM)
        for name in PARTIAL_NAMES:
            alpha_order = 2 if name.endswith("dalpha2") else name.count("dalpha")
            odd_in_alpha = alpha_order % 2 == 1
            is_g = name.startswith(("dg", "d2g"))
            sign = -1.0 if odd_in_alpha != is_g else 1.0
            assert float(getattr(dn, name)) == pytest.approx(
                sign * float(getattr(up, name)), rel=1e-9, abs=1e-12
            ), name


class TestForwardPartials:
    def test_y_axis_closed_form(self):
        fp = forward_partials(CartesianPoint(0.0, 3000.0), GEOM)
        assert fp.dphi_dx == pytest.approx(-0.8)
        assert fp.dphi_dy == pytest.approx(1.6)
        assert fp.dgamma_dx == pytest.approx(-1.0 / 3000.0)
        assert fp.dgamma_dy == pytest.approx(0.0, abs=1e-18)

    @pytest.mark.parametrize("x, y", [(2000.0, 3464.1016), (8000.0, 8000.0), (-1500.0, 700.0)])
    def test_finite_difference_agreement(self, x, y):
        fp = forward_partials(CartesianPoint(x, y), GEOM)
        assert_allclose(fp.jacobian, fd_forward_jacobian(x, y, L), rtol=1e-6)

    def test_degenerate(self):
        with pytest.raises(DegeneratePositionError):
            forward_partials(CartesianPoint(4000.0, 0.0), GEOM)


@settings(max_examples=200, deadline=None)
@given(
    b_frac=st.floats(1.01, 10.0),
    alpha=st.floats(-math.pi, math.pi, exclude_min=True),
)
def test_round_trip(b_frac, alpha):
    b = b_frac * L
    z = to_measurement(to_cartesian(BistaticPoint(b, alpha), GEOM), GEOM)
    assert z.b == pytest.approx(b, rel=1e-9)
    diff = math.remainder(float(z.alpha) - alpha, 2 * math.pi)
    assert abs(diff) <= 1e-9 * max(1.0, abs(alpha))


@settings(max_examples=100, deadline=None)
@given(b_frac=st.floats(1.05, 10.0), alpha=st.floats(-3.1, 3.1))
def test_jacobians_are_mutual_inverses(b_frac, alpha):
    z = BistaticPoint(b_frac * L, alpha)
    J = inverse_partials(z, GEOM).jacobian
    Hf = forward_partials(to_cartesian(z, GEOM), GEOM).jacobian
    assert_allclose(Hf @ J, np.eye(2), atol=1e-8)
