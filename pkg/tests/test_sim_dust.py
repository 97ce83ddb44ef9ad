import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agetrace.errors import InvalidArgument
from agetrace.imaging import AcquisitionMeta, RasterImage
from agetrace.sim import DustParticle, dust_spot_diameter, projected_position, render_dust
from agetrace.sim.dust import dust_transmission, peak_attenuation


def spot_stats(img, f_number, particle, shape=(101, 101)):
    meta = AcquisitionMeta(0.0, focal_mm=50.0, f_number=f_number)
    trans = dust_transmission(shape, [particle], meta, 4.0)
    inside = trans < 1
    out = render_dust(img, [particle], meta, 4.0)
    return np.count_nonzero(inside), out.data[inside].mean()


def test_particle_on_sensor_casts_its_own_size():
    p = DustParticle(25.0, 0.0, (10, 10))
    for aperture in (0.0, 2.0, 6.25):
        assert dust_spot_diameter(p, 50.0, aperture) == 0.025


def test_spot_diameter_hand_value():
    p = DustParticle(10.0, 1.0, (0, 0))
    expected = 0.01 * 50 / 49 + (50 / 22) * 1 / 49
    assert dust_spot_diameter(p, 50.0, 50 / 22) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.0566, abs=1e-4)


@given(st.floats(0.0, 20.0), st.floats(0.001, 5.0), st.floats(0.01, 3.0))
def test_spot_diameter_increasing_in_aperture(a, delta, t):
    p = DustParticle(10.0, t, (0, 0))
    assert dust_spot_diameter(p, 50.0, a + delta) > dust_spot_diameter(p, 50.0, a)


def test_geometry_errors():
    with pytest.raises(InvalidArgument):
        dust_spot_diameter(DustParticle(10.0, 60.0, (0, 0)), 50.0, 1.0)
    with pytest.raises(InvalidArgument):
        DustParticle(0.0, 1.0, (0, 0))


def test_center_particle_does_not_shift():
    p = DustParticle(10.0, 2.0, (50.0, 50.0))
    assert projected_position(p, (101, 101), 20.0) == (50.0, 50.0)
    off = DustParticle(10.0, 2.0, (20.0, 50.0))
    near, far = projected_position(off, (101, 101), 20.0), projected_position(off, (101, 101), 200.0)
    # shorter focal length pushes the shadow further out from the center
    assert near[0] < far[0] < 20.0
    assert near[1] == far[1] == 50.0


def test_no_particles_is_identity():
    img = RasterImage(np.full((8, 8, 3), 90))
    assert render_dust(img, [], AcquisitionMeta(0.0)) is img


def test_high_f_number_gives_smaller_darker_spot():
    img = RasterImage(np.full((101, 101, 3), 200))
    p = DustParticle(40.0, 1.0, (50.0, 50.0))
    area_32, mean_32 = spot_stats(img, 32.0, p)
    area_18, mean_18 = spot_stats(img, 18.0, p)
    assert area_32 < area_18
    assert mean_32 < mean_18
    assert peak_attenuation(32.0) > peak_attenuation(18.0)


def test_spot_outside_image_rejected():
    with pytest.raises(InvalidArgument):
        dust_transmission((10, 10), [DustParticle(10.0, 1.0, (-40.0, 5.0))], AcquisitionMeta(0.0), 4.0)
