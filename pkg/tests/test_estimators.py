import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import setup
from swmatch.estimators import MWPMDecoder, SlidingWindowDecoder, WindowTensorTransformer
from swmatch.frame_sim import sample_batch
from swmatch.matching import PathTables, decode_batch
from swmatch.windowing import SlidingWindowPipeline


@pytest.fixture(scope="module")
def data():
    circuit, dem, g = setup(3, 9, 0.005)
    b = sample_batch(circuit, 2000, 0, dem)
    return b, g


def test_mwpm_decoder(data):
    b, g = data
    est = MWPMDecoder(d=3, p=0.005, rounds=9).fit(b.detectors)
    pred = est.predict(b.detectors)
    assert np.array_equal(pred, decode_batch(PathTables.for_graph(g), b.detectors[:, : g.num_nodes]).bits & 1)
    assert np.array_equal(est.predict(b.detectors[:, : g.num_nodes]), pred)
    assert est.score(b.detectors, b.observable) == pytest.approx(1 - (pred != b.observable).mean())


def test_sliding_window_decoder(data):
    b, g = data
    est = SlidingWindowDecoder(d=3, p=0.005, rounds=9, buffer=1, core=3, merge=True).fit(b.detectors)
    ref = SlidingWindowPipeline(g, 1, 3).decode(b.detectors, merge=True)
    assert np.array_equal(est.predict(b.detectors), ref.merged)
    assert est.predict_windows(b.detectors).shape == (2000, 3)


def test_params_and_clone():
    est = SlidingWindowDecoder(d=5, buffer=2)
    p = est.get_params()
    assert p["d"] == 5 and p["buffer"] == 2 and p["merge"] is False
    c = clone(est.set_params(core=5))
    assert c.get_params()["core"] == 5


def test_not_fitted_and_shape_checks(data):
    b, _ = data
    with pytest.raises(NotFittedError):
        MWPMDecoder(3, 0.005, 9).predict(b.detectors)
    est = MWPMDecoder(3, 0.005, 9).fit(b.detectors)
    with pytest.raises(ValueError):
        est.predict(b.detectors[:, :5])
    with pytest.raises(ValueError):
        MWPMDecoder(3, 0.005, 8).fit(b.detectors)


def test_window_tensor_transformer(data):
    b, _ = data
    tr = WindowTensorTransformer(d=3, p=0.005, rounds=9, buffer=3, core=3)
    out = tr.fit_transform(b.detectors[:10])
    assert out.shape == (30, 9, 4, 4)
    assert not out[0, :3].any()
    with pytest.raises(ValueError):
        tr.transform(b.detectors[:, :20])
