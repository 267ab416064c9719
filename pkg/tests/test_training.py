import csv
import math

import numpy as np
import pytest

from beamforge import airmodel as am
from beamforge import dataset as dsm
from beamforge import training as tr
from beamforge.neuralnet import (ArchitectureSpec, NetworkParameters, init_params,
                                 load_checkpoint)
from beamforge.core import derive_stream


TOY = am.ScenarioConfig(n_antennas=8, n_rf=1, n_slots=8, n_users=1, n_paths=1)


@pytest.fixture(scope="module")
def toy_ds():
    return dsm.generate_dataset(TOY, 2000, (10, 10), master_seed=17)


def toy_cfg(**kw):
    base = dict(epochs=2, batches_per_epoch=100, batch_size=32, validation_every=1, seed=3)
    base.update(kw)
    return tr.TrainingConfig(**base)


class TestSchedule:
    @pytest.mark.parametrize("epoch, lr", [(0, 0.01), (999, 0.01), (1000, 0.002), (2000, 0.0004)])
    def test_breakpoints(self, epoch, lr):
        assert math.isclose(tr.learning_rate(epoch), lr, rel_tol=1e-12)

    def test_piecewise_constant(self):
        cfg = tr.TrainingConfig(lr_decay_every=7)
        vals = [tr.learning_rate(e, cfg) for e in range(30)]
        changes = [e for e in range(1, 30) if vals[e] != vals[e - 1]]
        assert changes == [7, 14, 21, 28]

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            tr.learning_rate(-1)


class TestValidate:
    def test_zero_network_is_ln2(self, toy_ds):
        arch = ArchitectureSpec.from_preset("nps1", 16, 8)
        assert abs(tr.validate(NetworkParameters.zeros(arch), toy_ds) - math.log(2)) < 1e-12

    def test_duplicated_record(self, toy_ds):
        arch = ArchitectureSpec.from_preset("nps1", 16, 8)
        p = init_params(arch, derive_stream(0, 0))
        one = toy_ds.take([4])
        many = toy_ds.take([4] * 7)
        assert abs(tr.validate(p, one) - tr.validate(p, many)) < 1e-12

    def test_does_not_mutate(self, toy_ds):
        arch = ArchitectureSpec.from_preset("nps1", 16, 8)
        p = init_params(arch, derive_stream(0, 0))
        before = [t.copy() for t in p.tensors]
        tr.validate(p, toy_ds)
        for a, b in zip(before, p.tensors):
            np.testing.assert_array_equal(a, b)

    def test_empty(self, toy_ds):
        arch = ArchitectureSpec.from_preset("nps1", 16, 8)
        with pytest.raises(ValueError):
            tr.validate(NetworkParameters.zeros(arch), toy_ds.take([]))

    def test_dimension_mismatch(self, toy_ds):
        arch = ArchitectureSpec.from_preset("nps1", 32, 8)
        with pytest.raises(ValueError):
            tr.validate(NetworkParameters.zeros(arch), toy_ds)


class TestTrain:
    def test_zero_epochs(self, toy_ds, tmp_path):
        res = tr.train(toy_cfg(epochs=0), TOY, toy_ds, tmp_path / "m.ampn", tmp_path / "l.csv",
                       tmp_path / "b.ampn")
        arch = ArchitectureSpec.from_preset("nps1", 16, 8)
        init = init_params(arch, derive_stream(3, tr.INIT_STREAM))
        for a, b in zip(init.tensors, load_checkpoint(tmp_path / "m.ampn").tensors):
            np.testing.assert_array_equal(a, b)
        assert res.rows == []
        assert (tmp_path / "l.csv").read_text() == "epoch,train_loss,val_loss,lr,seconds\n"

    def test_toy_run_learns(self, toy_ds, tmp_path):
        res = tr.train(toy_cfg(), TOY, toy_ds, log_path=tmp_path / "l.csv", timing=False)
        assert [r.epoch for r in res.rows] == [1, 2]
        assert res.rows[-1].val_loss < math.log(2)
        _, val = dsm.split_train_val(toy_ds, 3)
        arch = ArchitectureSpec.from_preset("nps1", 16, 8)
        first = tr.validate(init_params(arch, derive_stream(3, tr.INIT_STREAM)), val)
        assert tr.validate(res.final, val) < first
        assert res.best_val_loss == min(first, *(r.val_loss for r in res.rows))

    def test_log_format(self, toy_ds, tmp_path):
        tr.train(toy_cfg(epochs=3, batches_per_epoch=2, validation_every=2), TOY, toy_ds,
                 log_path=tmp_path / "l.csv", timing=False)
        rows = list(csv.reader(open(tmp_path / "l.csv")))
        assert rows[0] == tr.LOG_HEADER
        assert [r[0] for r in rows[1:]] == ["2", "3"]
        assert all(r[4] == "0.000" for r in rows[1:])
        assert all(float(r[3]) == 0.01 for r in rows[1:])

    def test_deterministic(self, toy_ds, tmp_path):
        cfg = toy_cfg(epochs=2, batches_per_epoch=10)
        for tag in "ab":
            tr.train(cfg, TOY, toy_ds, tmp_path / f"{tag}.ampn", tmp_path / f"{tag}.csv",
                     tmp_path / f"{tag}.best.ampn", timing=False)
        for ext in (".ampn", ".csv", ".best.ampn"):
            assert (tmp_path / f"a{ext}").read_bytes() == (tmp_path / f"b{ext}").read_bytes()

    def test_seed_matters(self, toy_ds):
        a = tr.train(toy_cfg(epochs=1, batches_per_epoch=5, seed=1), TOY, toy_ds, timing=False)
        b = tr.train(toy_cfg(epochs=1, batches_per_epoch=5, seed=2), TOY, toy_ds, timing=False)
        assert a.rows[0].val_loss != b.rows[0].val_loss

    def test_scenario_mismatch(self, toy_ds):
        other = am.ScenarioConfig(16, 1, 8, 1, 1)
        with pytest.raises(am.ConfigError, match="n_antennas"):
            tr.train(toy_cfg(), other, toy_ds)

    def test_batch_too_large(self, toy_ds):
        with pytest.raises(am.ConfigError, match="batch_size"):
            tr.train(toy_cfg(batch_size=5000), TOY, toy_ds)

    @pytest.mark.parametrize("kw", [dict(epochs=-1), dict(batch_size=0), dict(lr_initial=0.0),
                                    dict(lr_decay_every=0)])
    def test_invalid_config(self, kw):
        with pytest.raises(am.ConfigError):
            tr.TrainingConfig(**kw)
