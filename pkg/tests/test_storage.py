import io
import struct

import numpy as np
import pytest

from obsfmm import covmodel as cm
from obsfmm import storage
from obsfmm.boxtree import ObservationSet
from obsfmm.storage import FormatError


def test_covariance_round_trip(soar_model):
    data = storage.covariance_to_bytes(soar_model)
    back = storage.covariance_from_bytes(data)
    assert np.array_equal(back.matrix, soar_model.matrix)
    assert back.correlation == soar_model.correlation
    np.testing.assert_array_equal(back.stddevs, np.ones(soar_model.m))
    assert storage.covariance_to_bytes(back) == data


def test_covariance_size(soar_model):
    m = soar_model.m
    assert len(storage.covariance_to_bytes(soar_model)) == storage._COV_HEADER.size + 8 * m * (m + 1) // 2


def test_reconditioned_round_trip(soar_model):
    rr = cm.recondition_rr(soar_model, 1000.0)
    back = storage.covariance_from_bytes(storage.covariance_to_bytes(rr))
    assert back.recondition == rr.recondition
    assert back.stddevs is None
    inv = cm.CovarianceModel(matrix=cm.inverse_weighting(rr), inverted=True)
    back = storage.covariance_from_bytes(storage.covariance_to_bytes(inv))
    assert back.inverted and back.correlation is None and back.recondition is None
    assert np.array_equal(back.matrix, inv.matrix)


def test_covariance_bad_inputs(soar_model):
    data = storage.covariance_to_bytes(soar_model)
    with pytest.raises(FormatError):
        storage.covariance_from_bytes(b"NOTMAGIC" + data[8:])
    with pytest.raises(FormatError):
        storage.covariance_from_bytes(data[:-8])
    with pytest.raises(FormatError):
        storage.covariance_from_bytes(data + b"\0")
    bad_version = data[:8] + struct.pack("<I", 99) + data[12:]
    with pytest.raises(FormatError):
        storage.covariance_from_bytes(bad_version)


def test_plan_bad_magic():
    with pytest.raises(FormatError):
        storage.plan_from_bytes(b"OBSCOVMX" + bytes(40))


def test_observations_round_trip():
    obs = ObservationSet([54.1, 55.25, 59.999], [-6.0, 0.1, 6.0])
    buf = io.StringIO()
    storage.write_observations(buf, obs)
    buf.seek(0)
    back = storage.read_observations(buf)
    np.testing.assert_array_equal(back.lat, obs.lat)
    np.testing.assert_array_equal(back.lon, obs.lon)


@pytest.mark.parametrize("text", ["index,lat,lon\n", "index,lat,lon\n1,0,0\n", "index,lat\n0,1\n",
                                  "index,lat,lon\n0,north,0\n"])
def test_observations_bad(text):
    with pytest.raises(FormatError):
        storage.read_observations(io.StringIO(text))


def test_vector_round_trip():
    v = np.array([0.1, -2.5e-300, 1e10, 1 / 3])
    buf = io.StringIO()
    storage.write_vector(buf, v)
    buf.seek(0)
    assert np.array_equal(storage.read_vector(buf), v)
    assert list(storage.read_vector(io.StringIO("# header\n1\n\n2.5\n"))) == [1.0, 2.5]
    with pytest.raises(FormatError):
        storage.read_vector(io.StringIO("1\nabc\n"))
