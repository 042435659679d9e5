import numpy as np
import pytest

import isphar


@pytest.fixture(scope="module")
def corpus():
    return isphar.synth_corpus(minutes=0.5, seed=1)


@pytest.fixture(scope="module")
def pack(corpus):
    x, y, classes = corpus
    return isphar.train(x, y, classes, kind="forest", features=isphar.reference_mask_16())


def test_feature_surface():
    names = isphar.feature_names()
    assert len(names) == isphar.NUM_FEATURES == 78
    assert names[61] == "GYRO_Y_AMDF"
    window = np.random.default_rng(0).uniform(-1, 1, size=(39, 6))
    fv = isphar.extract_features(window)
    assert len(fv) == 78
    assert fv[0] == pytest.approx(window[:, 0].max())
    assert fv[2] == pytest.approx(window[:, 0].mean())
    kept = isphar.select_top_features(list(np.linspace(0, 1, 78)), 0.2)
    assert len(kept) == 16
    assert isphar.mlp_parameter_count([78, 64, 32, 24]) == 7928


def test_pack_audit_and_roundtrip(corpus, pack):
    x, y, classes = corpus
    fp = isphar.footprint(pack)
    assert fp["stack_bytes"] <= 850
    assert sum(v for k, v in fp["breakdown"].items() if k.startswith("stack.")) == fp["stack_bytes"]
    ok, violations = isphar.audit(pack)
    assert ok and violations == []
    ok, violations = isphar.audit(pack, max_stack=fp["stack_bytes"] - 1)
    assert not ok and violations == [("stack", 1)]
    assert isphar.roundtrip(pack) == pack
    assert "kind: forest" in isphar.describe(pack)
    pred = np.asarray(isphar.predict(pack, x))
    assert (pred == np.asarray(y)).mean() > 0.9


def test_engine_and_errors(pack):
    engine = isphar.Engine(pack)
    samples = np.zeros((39 * 3 + 5, 6))
    events = engine.push(samples)
    assert [e[0] for e in events] == [0, 1, 2]
    assert engine.buffer_bytes == isphar.footprint(pack)["stack_bytes"] + isphar.footprint(pack)["data_bytes"]
    damaged = bytearray(pack)
    damaged[30] ^= 0xFF
    with pytest.raises(isphar.IspharError, match="ChecksumMismatch"):
        isphar.Engine(bytes(damaged))
    assert isphar.duty_cycle(150, 1500) == pytest.approx(0.9, abs=1e-12)
    with pytest.raises(isphar.IspharError):
        isphar.duty_cycle(1500, 1500)


def test_cli_entry():
    code, out, err = isphar.run_cli(["--help"])
    assert code == 0 and "audit" in out
    code, _, err = isphar.run_cli(["audit"])
    assert code == 2 and "usage error" in err
