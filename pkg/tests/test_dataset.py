import numpy as np
import pytest

from beamforge import airmodel as am
from beamforge import dataset as dsm
from beamforge.core import FormatError, derive_stream


@pytest.fixture(scope="module")
def small_cfg():
    return am.ScenarioConfig(n_antennas=16, n_rf=2, n_slots=4, n_users=2, n_paths=3)


@pytest.fixture(scope="module")
def small_ds(small_cfg):
    return dsm.generate_dataset(small_cfg, 200, (-10, 10), master_seed=3)


def assert_same(a, b):
    assert a.cfg == b.cfg
    for name in ("r", "beams", "thetas", "snr_db"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes(), name


class TestGenerate:
    def test_deterministic(self, small_cfg):
        a = dsm.generate_dataset(small_cfg, 10, master_seed=9)
        b = dsm.generate_dataset(small_cfg, 10, master_seed=9)
        assert_same(a, b)

    def test_thread_count_irrelevant(self, small_cfg):
        a = dsm.generate_dataset(small_cfg, 50, master_seed=9, threads=1)
        b = dsm.generate_dataset(small_cfg, 50, master_seed=9, threads=8)
        assert_same(a, b)

    def test_record_uses_its_own_stream(self, small_cfg):
        ds = dsm.generate_dataset(small_cfg, 5, master_seed=4)
        W = am.measurement_matrix(small_cfg)
        rec, _ = dsm.generate_record(small_cfg, W, (-10, 10), derive_stream(4, 3))
        np.testing.assert_array_equal(ds.r[3], rec.r)

    def test_self_consistent(self, small_ds):
        np.testing.assert_array_equal(small_ds.beams, am.los_beam_index(small_ds.thetas, 16))
        assert np.all(np.diff(small_ds.beams, axis=1) >= 0)
        assert np.all((small_ds.snr_db >= -10) & (small_ds.snr_db <= 10))

    def test_labels_match_beams(self, small_ds):
        q = small_ds.labels()
        for i in range(len(small_ds)):
            np.testing.assert_array_equal(q[i], am.label_from_beams(small_ds.beams[i], 16))

    def test_noise_variance_at_fixed_snr(self):
        cfg = am.ScenarioConfig(64, 4, 8, 2, 3)
        n = 10_000
        ds = dsm.generate_dataset(cfg, n, (10, 10), master_seed=21)
        W = am.measurement_matrix(cfg)
        clean = np.stack([W.conj().T @ am.sample_channel(cfg, derive_stream(21, i)).total()
                          for i in range(n)])
        noise = ds.r - clean
        assert np.all(ds.snr_db == 10.0)
        assert abs(np.mean(np.abs(noise) ** 2) / 0.1 - 1) < 0.02

    def test_invalid(self, small_cfg):
        with pytest.raises(ValueError):
            dsm.generate_dataset(small_cfg, 0)
        with pytest.raises(ValueError):
            dsm.generate_dataset(small_cfg, 5, (5, -5))


class TestSplit:
    def test_sizes_large(self):
        cfg = am.ScenarioConfig(8, 1, 8, 1, 1)
        n = 100_000
        ds = dsm.Dataset(cfg, np.zeros((n, 8), complex), np.ones((n, 1), np.int64),
                         np.zeros((n, 1)), np.arange(n, dtype=float))
        tr, va = dsm.split_train_val(ds, 0)
        assert (len(tr), len(va)) == (90_000, 10_000)
        idx = np.concatenate([tr.snr_db, va.snr_db]).astype(int)
        assert len(set(idx)) == n and set(tr.snr_db).isdisjoint(va.snr_db)

    def test_sizes_small(self, small_ds):
        tr, va = dsm.split_train_val(small_ds.take(np.arange(10)), 5)
        assert (len(tr), len(va)) == (9, 1)

    def test_partition_and_reproducible(self, small_ds):
        tr1, va1 = dsm.split_train_val(small_ds, 7)
        tr2, va2 = dsm.split_train_val(small_ds, 7)
        assert_same(tr1, tr2)
        assert_same(va1, va2)
        keys = {r.tobytes() for r in small_ds.r}
        ktr, kva = {r.tobytes() for r in tr1.r}, {r.tobytes() for r in va1.r}
        assert ktr | kva == keys and not ktr & kva

    def test_too_small(self, small_ds):
        with pytest.raises(ValueError):
            dsm.split_train_val(small_ds.take(np.arange(9)), 0)


class TestEncode:
    def test_layout(self):
        np.testing.assert_array_equal(dsm.encode_input(np.array([1 + 2j, 3 - 4j])), [2, -4, 1, 3])

    def test_real_input(self):
        out = dsm.encode_input(np.array([1.0, 2.0, 3.0], dtype=complex))
        np.testing.assert_array_equal(out[:3], 0)

    def test_linear(self):
        rng = np.random.default_rng(0)
        r1 = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        r2 = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        np.testing.assert_allclose(dsm.encode_input(2.5 * r1 + r2),
                                   2.5 * dsm.encode_input(r1) + dsm.encode_input(r2), atol=1e-14)

    def test_batch(self, small_ds):
        X = dsm.encode_input(small_ds.r[:3])
        assert X.shape == (3, 16)
        np.testing.assert_array_equal(X[1], dsm.encode_input(small_ds.r[1]))


class TestMinibatch:
    def test_full_batch_is_permutation(self, small_ds):
        n = len(small_ds)
        X, _ = dsm.next_minibatch(small_ds, derive_stream(0, 0), n)
        got = sorted(x.tobytes() for x in X)
        assert got == sorted(x.tobytes() for x in dsm.encode_input(small_ds.r))

    def test_label_rows(self, small_ds):
        _, Q = dsm.next_minibatch(small_ds, derive_stream(0, 1), 64)
        assert np.all(Q.sum(axis=1) <= 2) and np.all(Q.sum(axis=1) >= 1)

    def test_deterministic(self, small_ds):
        a = [dsm.next_minibatch(small_ds, derive_stream(5, 0), 16)[0] for _ in range(1)]
        rng1, rng2 = derive_stream(5, 0), derive_stream(5, 0)
        for _ in range(5):
            x1, q1 = dsm.next_minibatch(small_ds, rng1, 16)
            x2, q2 = dsm.next_minibatch(small_ds, rng2, 16)
            np.testing.assert_array_equal(x1, x2)
            np.testing.assert_array_equal(q1, q2)
        assert a[0].shape == (16, 16)

    def test_too_large(self, small_ds):
        with pytest.raises(ValueError):
            dsm.next_minibatch(small_ds, derive_stream(0, 0), len(small_ds) + 1)


class TestFile:
    def test_round_trip(self, small_ds, tmp_path):
        dsm.write_dataset(small_ds, tmp_path / "d.ampb")
        back = dsm.read_dataset(tmp_path / "d.ampb")
        assert_same(small_ds, back)
        dsm.write_dataset(back, tmp_path / "e.ampb")
        assert (tmp_path / "d.ampb").read_bytes() == (tmp_path / "e.ampb").read_bytes()

    def test_layout(self, small_ds, tmp_path):
        dsm.write_dataset(small_ds.take([0]), tmp_path / "d.ampb")
        raw = (tmp_path / "d.ampb").read_bytes()
        assert raw[:4] == b"AMPB"
        vals = np.frombuffer(raw[4:16], "<u2")
        np.testing.assert_array_equal(vals, [1, 16, 2, 4, 2, 3])
        assert int.from_bytes(raw[16:24], "little") == 1
        M, U = 8, 2
        assert len(raw) == 24 + 8 * M + 2 * U + 4 * U + 4
        r = np.frombuffer(raw[24:24 + 8 * M], "<f4")
        np.testing.assert_array_equal(r[0::2], small_ds.r[0].real.astype(np.float32))
        np.testing.assert_array_equal(r[1::2], small_ds.r[0].imag.astype(np.float32))
        beams = np.frombuffer(raw[24 + 8 * M:24 + 8 * M + 2 * U], "<u2")
        np.testing.assert_array_equal(beams, small_ds.beams[0])

    def test_bad_magic(self, small_ds, tmp_path):
        dsm.write_dataset(small_ds, tmp_path / "d.ampb")
        raw = bytearray((tmp_path / "d.ampb").read_bytes())
        raw[1] = ord("X")
        (tmp_path / "d.ampb").write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic.*offset 0"):
            dsm.read_dataset(tmp_path / "d.ampb")

    def test_truncated(self, small_ds, tmp_path):
        dsm.write_dataset(small_ds, tmp_path / "d.ampb")
        raw = (tmp_path / "d.ampb").read_bytes()
        (tmp_path / "d.ampb").write_bytes(raw[:-5])
        with pytest.raises(FormatError, match="truncated record 199 at offset"):
            dsm.read_dataset(tmp_path / "d.ampb")
        (tmp_path / "d.ampb").write_bytes(raw[:10])
        with pytest.raises(FormatError, match="header"):
            dsm.read_dataset(tmp_path / "d.ampb")
